//! Every bound on a random Dirichlet ensemble, before and after the
//! tie-free perturbation of the weights.

use votelab::bounds::{all_bounds, BoundOptions};
use votelab::simgen::make_dirichlet_confusion;
use votelab::EnsembleWeights;

fn main() -> votelab::Result<()> {
    let data = make_dirichlet_confusion(4, 500, 6, 0.7, 2.0, 11)?;
    let uniform = EnsembleWeights::uniform(data.num_classifiers());

    let options = BoundOptions::default();
    print!("{}", all_bounds(&data, &uniform, &options)?.to_table());
    println!();
    print!(
        "{}",
        all_bounds(&data, &uniform.tie_free_perturb(0), &options)?.to_table()
    );
    Ok(())
}
