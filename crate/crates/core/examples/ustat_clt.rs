//! Monte-Carlo spread of the disagreement U-statistic against the limiting
//! variance computed from each sampler.

use votelab::extrapolate::ustat_clt_check;
use votelab::simgen::{ClassifierSampler, DirichletConfusion, FinitePool, SplitCase};

fn main() -> votelab::Result<()> {
    let samplers = [
        ClassifierSampler::split_vote(0.7, SplitCase::HalfHalf, 4)?,
        ClassifierSampler::pathological(10, 0.1, 50)?,
        ClassifierSampler::DirichletConfusion(DirichletConfusion::generate(3, 60, 1.0, 1.0, 2)?),
        ClassifierSampler::FinitePool(FinitePool::random(8, 60, 3, 0.6, 2)?),
    ];
    println!(
        "{:>20} {:>9} {:>9} {:>11} {:>11}",
        "sampler", "mean U", "D limit", "N/4 Var U", "sigma1^2"
    );
    for sampler in &samplers {
        let c = ustat_clt_check(sampler, 200, 400, 0)?;
        println!(
            "{:>20} {:>9.5} {:>9.5} {:>11.3e} {:>11.3e}",
            sampler.kind(),
            c.mean_u,
            c.d_infinity_true,
            c.var_scaled,
            c.sigma1_sq_true
        );
    }
    Ok(())
}
