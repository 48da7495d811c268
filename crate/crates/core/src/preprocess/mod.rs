//! Fairness pre-processing transformers: reweighing, learned fair
//! representations and optimized probabilistic pre-processing.

pub mod lfr;
pub mod optimized;
pub mod reweighing;

use serde::{Deserialize, Serialize};

pub use lfr::{lfr_fit, lfr_objective, lfr_transform, LfrLosses, LfrModel, LfrParams};
pub use optimized::{op_fit, op_transform, project_simplex, OpModel, OpParams, OpReport, OpRow};
pub use reweighing::{reweigh_apply, reweigh_fit, ReweighingModel};

/// Which pre-processor a pipeline uses, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum PreprocessorSpec {
    None,
    Rw,
    Lfr(LfrParams),
    Op(OpParams),
}

impl PreprocessorSpec {
    /// Short identifier: `none`, `rw`, `lfr` or `op`.
    pub fn id(&self) -> &'static str {
        match self {
            PreprocessorSpec::None => "none",
            PreprocessorSpec::Rw => "rw",
            PreprocessorSpec::Lfr(_) => "lfr",
            PreprocessorSpec::Op(_) => "op",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PreprocessorSpec::None => "Baseline",
            PreprocessorSpec::Rw => "RW",
            PreprocessorSpec::Lfr(_) => "LFR",
            PreprocessorSpec::Op(_) => "OP",
        }
    }
}

/// A fitted pre-processor, serialized with its `algo` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum FittedPreprocessor {
    None,
    Rw(ReweighingModel),
    Lfr(LfrModel),
    Op(OpModel),
}
