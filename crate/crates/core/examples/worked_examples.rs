//! Two constant classifiers splitting their votes between two labels, in
//! the three arrangements of the true labels.

use votelab::simgen::{make_split_vote, SplitCase};
use votelab::{stats, TieRule};

fn main() -> votelab::Result<()> {
    println!(
        "{:>5} {:>10} {:>8} {:>8} {:>8} {:>10}",
        "p", "case", "avg", "E[W^2]", "mv", "eta"
    );
    for p in [0.75, 0.51] {
        for case in SplitCase::ALL {
            let e = make_split_vote(p, case, 4, 2)?;
            let s = stats::ensemble_stats(&e.data, &e.weights, TieRule::LowestLabel)?;
            println!(
                "{p:>5} {:>10} {:>8.4} {:>8.4} {:>8.4} {:>10.4}",
                case.to_string(),
                s.avg_error,
                s.tandem,
                s.mv_error,
                s.polarization
            );
        }
    }
    Ok(())
}
