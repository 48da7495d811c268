//! Tabular datasets with a binary label, a binary protected attribute and
//! per-instance weights.

mod csv_io;
mod discretize;
mod encode;
pub mod presets;
mod schema;
mod split;

pub use csv_io::{load_csv, load_csv_with_report, write_csv, LoadReport};
pub use discretize::{discretize, Discretizer};
pub use encode::{encode_onehot, OneHotEncoder};
pub use schema::{ColumnKind, ColumnSchema, DatasetSpec, MissingPolicy};
pub use split::{split, SplitPair};

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Descriptor of one column of the numeric feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: EncodedKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodedKind {
    /// 0/1 feature.
    Binary,
    /// Raw real-valued feature.
    Continuous,
    /// Category index into `categories`.
    Categorical { categories: Vec<String> },
    /// One-hot indicator produced from a categorical column.
    Indicator { source: String, category: String },
    /// Equal-frequency bin index; a value `v` falls into the bin counting
    /// the edges strictly below it.
    Binned { edges: Vec<f64>, single_bin: bool },
    /// Copy of the protected attribute used as a feature.
    Protected,
}

impl EncodedKind {
    /// Number of distinct values a discrete column can take, `None` for
    /// continuous columns.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            EncodedKind::Binary | EncodedKind::Indicator { .. } | EncodedKind::Protected => Some(2),
            EncodedKind::Categorical { categories } => Some(categories.len()),
            EncodedKind::Binned { edges, .. } => Some(edges.len() + 1),
            EncodedKind::Continuous => None,
        }
    }
}

/// Encoded feature matrix plus label, group and weight vectors. Immutable:
/// every transformation returns a new dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    x: Array2<f64>,
    y: Vec<u8>,
    s: Vec<u8>,
    w: Vec<f64>,
    schema: Vec<Column>,
}

impl TabularDataset {
    pub fn new(
        x: Array2<f64>,
        y: Vec<u8>,
        s: Vec<u8>,
        w: Vec<f64>,
        schema: Vec<Column>,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || s.len() != n || w.len() != n {
            return Err(Error::LengthMismatch(format!(
                "x has {n} rows, y {}, s {}, w {}",
                y.len(),
                s.len(),
                w.len()
            )));
        }
        if schema.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: schema.len(),
                got: x.ncols(),
            });
        }
        if y.iter().chain(s.iter()).any(|&v| v > 1) {
            return Err(Error::InvalidDataset("labels and groups must be 0 or 1".into()));
        }
        if let Some(bad) = w.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidDataset(format!("non-positive weight {bad}")));
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidDataset("feature matrix contains NaN".into()));
        }
        Ok(Self { x, y, s, w, schema })
    }

    /// Dataset with unit weights.
    pub fn unweighted(x: Array2<f64>, y: Vec<u8>, s: Vec<u8>, schema: Vec<Column>) -> Result<Self> {
        let n = y.len();
        Self::new(x, y, s, vec![1.0; n], schema)
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn s(&self) -> &[u8] {
        &self.s
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn schema(&self) -> &[Column] {
        &self.schema
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Index of the feature column mirroring the protected attribute.
    pub fn protected_feature(&self) -> Option<usize> {
        self.schema.iter().position(|c| c.kind == EncodedKind::Protected)
    }

    pub fn with_weights(&self, w: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), self.y.clone(), self.s.clone(), w, self.schema.clone())
    }

    pub fn with_labels(&self, y: Vec<u8>) -> Result<Self> {
        Self::new(self.x.clone(), y, self.s.clone(), self.w.clone(), self.schema.clone())
    }

    pub fn with_features(&self, x: Array2<f64>, schema: Vec<Column>) -> Result<Self> {
        Self::new(x, self.y.clone(), self.s.clone(), self.w.clone(), schema)
    }

    /// Rows at `indices`, in that order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            s: indices.iter().map(|&i| self.s[i]).collect(),
            w: indices.iter().map(|&i| self.w[i]).collect(),
            schema: self.schema.clone(),
        }
    }

    /// Count of rows per (s, y) cell, indexed `[s][y]`.
    pub fn cell_counts(&self) -> [[usize; 2]; 2] {
        let mut c = [[0usize; 2]; 2];
        for (&s, &y) in self.s.iter().zip(&self.y) {
            c[s as usize][y as usize] += 1;
        }
        c
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_invariants() {
        let schema = test_support::continuous_schema(1);
        let x = array![[1.0], [2.0]];
        assert!(TabularDataset::new(x.clone(), vec![0, 2], vec![0, 1], vec![1.0, 1.0], schema.clone()).is_err());
        assert!(TabularDataset::new(x.clone(), vec![0, 1], vec![0, 1], vec![1.0, 0.0], schema.clone()).is_err());
        assert!(TabularDataset::new(x, vec![0], vec![0, 1], vec![1.0, 1.0], schema.clone()).is_err());
        let nan = array![[f64::NAN], [1.0]];
        assert!(TabularDataset::new(nan, vec![0, 1], vec![0, 1], vec![1.0, 1.0], schema).is_err());
    }

    #[test]
    fn select_keeps_vectors_aligned() {
        let ds = test_support::dataset(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 1], vec![1, 0, 1]);
        let sub = ds.select(&[2, 0, 2]);
        assert_eq!(sub.y(), &[1, 0, 1]);
        assert_eq!(sub.s(), &[1, 1, 1]);
        assert_eq!(sub.x()[[0, 0]], 3.0);
    }
}
