//! The instance on which the competence bound is attained as K grows: the
//! majority is always right while a minority of mass ε is always wrong.

use votelab::bounds::{all_bounds, BoundOptions};
use votelab::simgen::make_pathological;

fn main() -> votelab::Result<()> {
    let epsilon = 0.1;
    println!(
        "{:>4} {:>8} {:>12} {:>10}",
        "K", "mv", "competence", "limit"
    );
    for k in [3, 5, 10, 50, 200] {
        let e = make_pathological(k, epsilon, 100, 2)?;
        let report = all_bounds(&e.data, &e.weights, &BoundOptions::default())?;
        let bound = report
            .get("competence_second_order")
            .expect("always reported");
        println!(
            "{k:>4} {:>8.4} {:>12.6} {:>10.6}",
            report.inputs_digest.mv_error,
            bound.value,
            4.0 * epsilon * epsilon
        );
    }
    Ok(())
}
