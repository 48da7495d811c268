use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Column, EncodedKind, TabularDataset};
use crate::error::{Error, Result};

/// Equal-frequency binning of continuous columns, fitted on one dataset
/// and reusable on others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    /// Per input column: bin edges for continuous columns, `None` otherwise.
    edges: Vec<Option<(Vec<f64>, bool)>>,
}

impl Discretizer {
    pub fn fit(ds: &TabularDataset, bins_per_column: usize) -> Result<Self> {
        if bins_per_column < 2 {
            return Err(Error::InvalidParameter("bins_per_column must be at least 2".into()));
        }
        let edges = ds
            .schema()
            .iter()
            .enumerate()
            .map(|(j, col)| match col.kind {
                EncodedKind::Continuous => {
                    let mut values = ds.x().column(j).to_vec();
                    values.sort_by(f64::total_cmp);
                    Some(quantile_edges(&values, bins_per_column))
                }
                _ => None,
            })
            .collect();
        Ok(Self { edges })
    }

    pub fn transform(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        if ds.n_features() != self.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.edges.len(),
                got: ds.n_features(),
            });
        }
        if self.edges.iter().all(Option::is_none) {
            return Ok(ds.clone());
        }
        let mut x: Array2<f64> = ds.x().clone();
        let mut schema: Vec<Column> = ds.schema().to_vec();
        for (j, spec) in self.edges.iter().enumerate() {
            let Some((edges, single_bin)) = spec else { continue };
            for v in x.column_mut(j) {
                *v = edges.iter().filter(|&&e| e < *v).count() as f64;
            }
            schema[j].kind = EncodedKind::Binned {
                edges: edges.clone(),
                single_bin: *single_bin,
            };
        }
        ds.with_features(x, schema)
    }
}

/// Edges at the `j/k` quantiles (lower order statistic), deduplicated and
/// strictly below the maximum so no bin is empty. Ties go to the lower bin.
fn quantile_edges(sorted: &[f64], bins: usize) -> (Vec<f64>, bool) {
    let n = sorted.len();
    if n == 0 {
        return (Vec::new(), true);
    }
    let max = sorted[n - 1];
    let mut edges: Vec<f64> = Vec::new();
    for j in 1..bins {
        let pos = (j * n).div_ceil(bins).saturating_sub(1);
        let e = sorted[pos];
        if e < max && edges.last().map_or(true, |&last| e > last) {
            edges.push(e);
        }
    }
    let single = sorted[0] == max;
    (edges, single)
}

/// Replaces every continuous column by its equal-frequency bin index.
pub fn discretize(ds: &TabularDataset, bins_per_column: usize) -> Result<TabularDataset> {
    Discretizer::fit(ds, bins_per_column)?.transform(ds)
}
