use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPair {
    pub train: TabularDataset,
    pub test: TabularDataset,
    pub seed: u64,
    /// Source row indices of each side, ascending.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Random train/test split, stratified by the four (label, group) cells.
///
/// The train side has exactly `round(train_fraction * n)` rows; the per-cell
/// quotas are allotted by largest remainder so they sum to that total.
pub fn split(ds: &TabularDataset, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    let n = ds.n_rows();
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("split needs at least two rows".into()));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidParameter(format!(
            "train_fraction {train_fraction} leaves one side of a {n}-row split empty"
        )));
    }

    let mut cells: [Vec<usize>; 4] = Default::default();
    for i in 0..n {
        cells[(ds.s()[i] * 2 + ds.y()[i]) as usize].push(i);
    }
    let mut rng = rng_from(seed);
    for cell in cells.iter_mut() {
        cell.shuffle(&mut rng);
    }

    let quotas: Vec<f64> = cells.iter().map(|c| train_fraction * c.len() as f64).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = n_train - take.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(16) {
        if remaining == 0 {
            break;
        }
        if take[c] < cells[c].len() {
            take[c] += 1;
            remaining -= 1;
        }
    }

    let mut train_indices = Vec::with_capacity(n_train);
    let mut test_indices = Vec::with_capacity(n - n_train);
    for (cell, &k) in cells.iter().zip(&take) {
        train_indices.extend_from_slice(&cell[..k]);
        test_indices.extend_from_slice(&cell[k..]);
    }
    train_indices.sort_unstable();
    test_indices.sort_unstable();

    Ok(SplitPair {
        train: ds.select(&train_indices),
        test: ds.select(&test_indices),
        seed,
        train_indices,
        test_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support;
    use proptest::prelude::*;

    fn toy(n: usize) -> TabularDataset {
        test_support::dataset(
            (0..n).map(|i| vec![i as f64]).collect(),
            (0..n).map(|i| (i % 3 == 0) as u8).collect(),
            (0..n).map(|i| (i % 2) as u8).collect(),
        )
    }

    #[test]
    fn seventy_thirty() {
        let pair = split(&toy(1000), 0.7, 3).unwrap();
        assert_eq!(pair.train.n_rows(), 700);
        assert_eq!(pair.test.n_rows(), 300);
    }

    #[test]
    fn deterministic() {
        let ds = toy(200);
        assert_eq!(split(&ds, 0.7, 11).unwrap(), split(&ds, 0.7, 11).unwrap());
    }

    #[test]
    fn seeds_differ() {
        let ds = toy(100);
        let a = split(&ds, 0.7, 0).unwrap();
        let b = split(&ds, 0.7, 1).unwrap();
        assert_ne!(a.train_indices, b.train_indices);
    }

    #[test]
    fn degenerate_fraction() {
        assert!(split(&toy(3), 0.1, 0).is_err());
        assert!(split(&toy(3), 1.0, 0).is_err());
        assert!(split(&toy(1), 0.5, 0).is_err());
    }

    #[test]
    fn cells_populated_on_both_sides() {
        let pair = split(&toy(40), 0.7, 5).unwrap();
        for side in [&pair.train, &pair.test] {
            assert!(side.cell_counts().iter().flatten().all(|&c| c > 0));
        }
    }

    proptest! {
        #[test]
        fn partition_of_rows(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let ds = toy(n);
            let expected = (frac * n as f64).round() as usize;
            prop_assume!(expected > 0 && expected < n);
            let pair = split(&ds, frac, seed).unwrap();
            prop_assert_eq!(pair.train.n_rows(), expected);
            let mut all: Vec<usize> = pair.train_indices.iter().chain(&pair.test_indices).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
