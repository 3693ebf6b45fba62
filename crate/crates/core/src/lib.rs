//! Individual conditional expectation (ICE) plots for black-box models.
//!
//! The crate computes ICE, centered ICE, derivative ICE and partial
//! dependence curves for any predictor exposed through [`PredictorHandle`],
//! renders them as deterministic SVG, and runs a visual lineup test for
//! additivity of a fitted model.

pub mod dataset;
pub mod error;
pub mod ice;
pub mod lineup;
pub mod plot;
pub mod predictors;
pub mod rng;
pub mod stats;
pub mod wire;

pub use dataset::{load_csv, read_csv, simulate, ColumnSplit, FeatureMatrix, SimModel, SimSpec};
pub use error::{Error, Result};
pub use predictors::{LearnerSpec, Predict, PredictorHandle, PredictorKind};
