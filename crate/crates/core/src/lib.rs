//! Majority-vote error analysis for classifier ensembles.

// NaN-rejecting guards are written as `!(x > 0.0)`
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod extrapolate;
pub mod simgen;
pub mod stats;
pub mod sum;

pub use dataset::{load_predictions, load_weights, EnsembleWeights, Label, PredictionDataset};
pub use error::{Error, Result};
pub use stats::{analyze, EnsembleAnalysis, EnsembleStats, TieRule};
