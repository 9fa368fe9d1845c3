//! How the measured polarization compares with its high-probability upper
//! bound as the number of examples grows.

use votelab::bounds::polarization_upper_bound;
use votelab::simgen::make_dirichlet_confusion;
use votelab::{stats, EnsembleWeights, TieRule};

fn main() -> votelab::Result<()> {
    println!("{:>6} {:>8} {:>8}", "m", "eta", "upper");
    for m in [100, 1_000, 10_000] {
        let data = make_dirichlet_confusion(5, m, 15, 0.5, 2.5, 7)?;
        let s = stats::ensemble_stats(&data, &EnsembleWeights::uniform(15), TieRule::LowestLabel)?;
        let upper = polarization_upper_bound(s.second_moment_w, s.prob_w_gt_half, m, 0.05)?;
        println!("{m:>6} {:>8.4} {:>8.4}", s.polarization, upper);
    }
    Ok(())
}
