//! Round trip through the file formats: write predictions and weights,
//! load them back and summarize.

use std::fs;

use votelab::stats::{competence_check, tie_set};
use votelab::{analyze, load_predictions, load_weights, EnsembleWeights, TieRule};

const PREDICTIONS: &str = "\
y,h1,h2,h3
0,0,0,1
1,1,2,1
2,2,2,0
0,1,0,0
1,1,1,1
2,0,1,2
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let csv = dir.path().join("predictions.csv");
    let json = dir.path().join("weights.json");
    fs::write(&csv, PREDICTIONS)?;
    fs::write(
        &json,
        EnsembleWeights::new(vec![2.0, 1.0, 1.0])?.to_json_string(),
    )?;

    let data = load_predictions(&csv, None)?;
    let weights = load_weights(&json)?;
    let analysis = analyze(&data, &weights, TieRule::LowestLabel)?;

    println!("{}", serde_json::to_string_pretty(&analysis.stats)?);
    println!("majority labels {:?}", analysis.majority);
    println!("tie fraction {}", tie_set(&analysis.profile).fraction);
    let competence = competence_check(&analysis.profile);
    println!(
        "competent {} semi-competent {}",
        competence.competent, competence.semi_competent
    );
    Ok(())
}
