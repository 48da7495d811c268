//! Weighted binary classifiers.

mod forest;
mod linalg;
mod logistic;

pub use forest::{ForestConfig, ForestModel, Node, Tree};
pub use logistic::{weighted_objective, LogisticConfig, LogisticModel};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

/// Class-1 probabilities and thresholded labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub proba: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Prediction {
    /// Labels are 1 exactly when `proba >= threshold`.
    pub fn from_proba(proba: Vec<f64>, threshold: f64) -> Self {
        let labels = proba.iter().map(|&p| u8::from(p >= threshold)).collect();
        Self { proba, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Logistic(LogisticConfig),
    Forest(ForestConfig),
}

impl ClassifierSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Logistic(_) => "logistic",
            ClassifierSpec::Forest(_) => "forest",
        }
    }

    pub fn fit(&self, train: &TabularDataset, seed: u64) -> Result<FittedClassifier> {
        Ok(match self {
            ClassifierSpec::Logistic(cfg) => FittedClassifier::Logistic(LogisticModel::fit(train, cfg)?),
            ClassifierSpec::Forest(cfg) => FittedClassifier::Forest(ForestModel::fit(train, cfg, seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedClassifier {
    Logistic(LogisticModel),
    Forest(ForestModel),
}

impl FittedClassifier {
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        match self {
            FittedClassifier::Logistic(m) => m.predict_proba(x),
            FittedClassifier::Forest(m) => m.predict_proba(x),
        }
    }

    pub fn predict(&self, x: &Array2<f64>, threshold: f64) -> Result<Prediction> {
        Ok(Prediction::from_proba(self.predict_proba(x)?, threshold))
    }
}

pub(crate) fn check_trainable(train: &TabularDataset) -> Result<()> {
    if train.n_rows() < 2 {
        return Err(Error::InvalidDataset("need at least two training rows".into()));
    }
    let positives = train.y().iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == train.n_rows() {
        return Err(Error::SingleClass);
    }
    if train.x().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite feature value".into()));
    }
    Ok(())
}

pub(crate) fn check_width(expected: usize, x: &Array2<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.ncols(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rule() {
        let p = Prediction::from_proba(vec![0.5, 0.49, 1.0], 0.5);
        assert_eq!(p.labels, vec![1, 0, 1]);
        let none = Prediction::from_proba(vec![0.5, 1.0], 1.1);
        assert_eq!(none.labels, vec![0, 0]);
    }
}
