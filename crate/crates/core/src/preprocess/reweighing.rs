use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

/// Weight per (group, label) cell, `weights[s][y] = n_s * n_y / (n * n_sy)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweighingModel {
    pub weights: [[f64; 2]; 2],
}

impl ReweighingModel {
    pub fn fit(train: &TabularDataset) -> Result<Self> {
        let counts = train.cell_counts();
        for s in 0..2u8 {
            for y in 0..2u8 {
                if counts[s as usize][y as usize] == 0 {
                    return Err(Error::EmptyCell { s, y });
                }
            }
        }
        let n = train.n_rows() as f64;
        let n_s = [counts[0][0] + counts[0][1], counts[1][0] + counts[1][1]];
        let n_y = [counts[0][0] + counts[1][0], counts[0][1] + counts[1][1]];
        let mut weights = [[0.0; 2]; 2];
        for s in 0..2 {
            for y in 0..2 {
                weights[s][y] = (n_s[s] as f64 * n_y[y] as f64) / (n * counts[s][y] as f64);
            }
        }
        Ok(Self { weights })
    }

    pub fn weight(&self, s: u8, y: u8) -> f64 {
        self.weights[s as usize][y as usize]
    }

    /// Copy of `ds` whose weights are the table entries of each row's cell.
    pub fn apply(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        let w = ds.s().iter().zip(ds.y()).map(|(&s, &y)| self.weight(s, y)).collect();
        ds.with_weights(w)
    }
}

pub fn reweigh_fit(train: &TabularDataset) -> Result<ReweighingModel> {
    ReweighingModel::fit(train)
}

pub fn reweigh_apply(model: &ReweighingModel, ds: &TabularDataset) -> Result<TabularDataset> {
    model.apply(ds)
}
