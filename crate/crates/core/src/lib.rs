//! Fairness pre-processing for tabular binary classification.
//!
//! Three training-data transformations (reweighing, learned fair
//! representations, optimized probabilistic pre-processing), weighted
//! logistic regression and random forest classifiers, ensembles of
//! pre-processed pipelines, group-fairness metrics, a Mann-Whitney U
//! comparison, and a seeded experiment grid that renders comparison tables.

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
