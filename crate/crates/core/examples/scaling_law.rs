//! Predicting the disagreement and majority-vote error of large ensembles
//! from three-member subsets of a twelve-member one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use votelab::extrapolate::{growth_curve, GrowthOptions};
use votelab::simgen::{ClassifierSampler, FinitePool};

fn main() -> votelab::Result<()> {
    let pool = FinitePool::random(12, 500, 10, 0.7, 1)?;
    let sampler = ClassifierSampler::FinitePool(pool);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = sampler.sample_ensemble(200, &mut rng)?;

    // only the first twelve classifiers are shown to the estimator
    let seen = data.select_classifiers(&(0..12).collect::<Vec<_>>())?;
    let curve = growth_curve(&seen, &[3, 6, 12, 50, 100, 200], &GrowthOptions::default())?;

    println!(
        "{:>5} {:>10} {:>10} {:>10}",
        "N", "pred D", "actual D", "pred mv"
    );
    for (i, &n) in curve.targets.iter().enumerate() {
        let members: Vec<usize> = (0..n).collect();
        let actual = votelab::stats::ensemble_stats(
            &data.select_classifiers(&members)?,
            &votelab::EnsembleWeights::uniform(n),
            votelab::TieRule::LowestLabel,
        )?;
        println!(
            "{n:>5} {:>10.5} {:>10.5} {:>10.5}",
            curve.predicted_disagreement[i],
            actual.disagreement_v,
            curve.predicted_mv_conjecture[i]
        );
    }
    println!("limit D = {:.5}", sampler.d_infinity());
    Ok(())
}
