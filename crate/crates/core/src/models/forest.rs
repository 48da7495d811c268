use ndarray::{Array2, ArrayView1};
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_trainable, check_width};
use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or `min_leaf_weight` binds.
    pub max_depth: Option<usize>,
    pub min_leaf_weight: f64,
    /// `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    /// Grow each tree on a bootstrap drawn with probability proportional to
    /// the instance weights; without it every tree sees all rows with their weights.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf_weight: 1.0,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        proba: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { proba } => return proba,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf_weight: f64,
    pub features_per_split: usize,
    pub seed: u64,
    pub n_features: usize,
}

struct Grower<'a> {
    x: &'a Array2<f64>,
    y: &'a [u8],
    max_depth: usize,
    min_leaf_weight: f64,
    mtry: usize,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Sample {
    row: usize,
    weight: f64,
}

fn gini_mass(w_total: f64, w_pos: f64) -> f64 {
    // total weight times the Gini impurity 2 p (1 - p)
    if w_total <= 0.0 {
        return 0.0;
    }
    2.0 * w_pos * (w_total - w_pos) / w_total
}

impl Grower<'_> {
    fn grow<R: Rng>(&mut self, samples: &mut [Sample], depth: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        let w_total: f64 = samples.iter().map(|s| s.weight).sum();
        let w_pos: f64 = samples.iter().filter(|s| self.y[s.row] == 1).map(|s| s.weight).sum();
        self.nodes.push(Node::Leaf {
            proba: if w_total > 0.0 { w_pos / w_total } else { 0.0 },
        });
        let parent = gini_mass(w_total, w_pos);
        if depth >= self.max_depth || parent <= 1e-12 || w_total < 2.0 * self.min_leaf_weight {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(samples, parent, rng) else {
            return id;
        };
        let mut cut = 0;
        for i in 0..samples.len() {
            if self.x[[samples[i].row, feature]] <= threshold {
                samples.swap(i, cut);
                cut += 1;
            }
        }
        let (left_s, right_s) = samples.split_at_mut(cut);
        let left = self.grow(left_s, depth + 1, rng);
        let right = self.grow(right_s, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Weighted-Gini best split over `mtry` randomly drawn non-constant features.
    fn best_split<R: Rng>(&self, samples: &[Sample], parent: f64, rng: &mut R) -> Option<(usize, f64)> {
        let d = self.x.ncols();
        let mut features: Vec<usize> = (0..d).collect();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut informative = 0;
        let mut order: Vec<(f64, Sample)> = Vec::with_capacity(samples.len());
        for k in 0..d {
            if informative >= self.mtry {
                break;
            }
            let pick = rng.gen_range(k..d);
            features.swap(k, pick);
            let f = features[k];

            order.clear();
            order.extend(samples.iter().map(|s| (self.x[[s.row, f]], *s)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            if order[0].0 == order[order.len() - 1].0 {
                continue;
            }
            informative += 1;

            let w_total: f64 = order.iter().map(|o| o.1.weight).sum();
            let w_pos: f64 = order.iter().filter(|o| self.y[o.1.row] == 1).map(|o| o.1.weight).sum();
            let (mut wl, mut pl) = (0.0, 0.0);
            for i in 0..order.len() - 1 {
                let s = order[i].1;
                wl += s.weight;
                if self.y[s.row] == 1 {
                    pl += s.weight;
                }
                if order[i].0 == order[i + 1].0 {
                    continue;
                }
                let wr = w_total - wl;
                if wl < self.min_leaf_weight || wr < self.min_leaf_weight {
                    continue;
                }
                let score = gini_mass(wl, pl) + gini_mass(wr, w_pos - pl);
                if score < parent - 1e-12 && best.map_or(true, |b| score < b.0) {
                    best = Some((score, f, 0.5 * (order[i].0 + order[i + 1].0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

impl ForestModel {
    pub fn fit(train: &TabularDataset, cfg: &ForestConfig, seed: u64) -> Result<Self> {
        check_trainable(train)?;
        if cfg.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be positive".into()));
        }
        let (n, d) = (train.n_rows(), train.n_features());
        let mtry = cfg
            .features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1));
        let sampler = WeightedIndex::new(train.w())
            .map_err(|e| Error::InvalidDataset(format!("instance weights: {e}")))?;

        let trees: Vec<Tree> = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_from(seed.wrapping_add(t as u64));
                let mut samples: Vec<Sample> = if cfg.bootstrap {
                    let mut counts = vec![0u32; n];
                    for _ in 0..n {
                        counts[sampler.sample(&mut rng)] += 1;
                    }
                    counts
                        .iter()
                        .enumerate()
                        .filter(|(_, &c)| c > 0)
                        .map(|(row, &c)| Sample {
                            row,
                            weight: f64::from(c),
                        })
                        .collect()
                } else {
                    (0..n)
                        .map(|row| Sample {
                            row,
                            weight: train.w()[row],
                        })
                        .collect()
                };
                let mut grower = Grower {
                    x: train.x(),
                    y: train.y(),
                    max_depth: cfg.max_depth.unwrap_or(usize::MAX),
                    min_leaf_weight: cfg.min_leaf_weight,
                    mtry,
                    nodes: Vec::new(),
                };
                grower.grow(&mut samples, 0, &mut rng);
                Tree { nodes: grower.nodes }
            })
            .collect();

        Ok(Self {
            trees,
            n_trees: cfg.n_trees,
            max_depth: cfg.max_depth,
            min_leaf_weight: cfg.min_leaf_weight,
            features_per_split: mtry,
            seed,
            n_features: d,
        })
    }

    /// Mean of the leaf probabilities reached in every tree.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        check_width(self.n_features, x)?;
        let k = self.trees.len() as f64;
        Ok(x.rows()
            .into_iter()
            .map(|row| self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / k)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support;
    use crate::models::Prediction;
    use ndarray::array;

    fn step_data() -> TabularDataset {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 - 49.5]).collect();
        let y = rows.iter().map(|r| u8::from(r[0] > 0.0)).collect();
        let s = (0..100).map(|i| (i % 2) as u8).collect();
        test_support::dataset(rows, y, s)
    }

    #[test]
    fn one_split_separates() {
        let ds = step_data();
        let cfg = ForestConfig {
            n_trees: 10,
            max_depth: Some(1),
            ..ForestConfig::default()
        };
        let m = ForestModel::fit(&ds, &cfg, 4).unwrap();
        let p = Prediction::from_proba(m.predict_proba(ds.x()).unwrap(), 0.5);
        assert_eq!(p.labels, ds.y());
        assert!(m.trees.iter().all(|t| t.depth() <= 1));
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = step_data();
        let cfg = ForestConfig {
            n_trees: 8,
            ..ForestConfig::default()
        };
        assert_eq!(ForestModel::fit(&ds, &cfg, 9).unwrap(), ForestModel::fit(&ds, &cfg, 9).unwrap());
    }

    #[test]
    fn uniform_weight_scaling_keeps_structure() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64]).collect();
        let y: Vec<u8> = (0..60).map(|i| u8::from((i * 7 % 13) + (i % 5) > 8)).collect();
        let s = (0..60).map(|i| (i % 2) as u8).collect();
        let ds = test_support::dataset(rows, y, s);
        let doubled = ds.with_weights(vec![2.0; 60]).unwrap();
        for bootstrap in [true, false] {
            let cfg = ForestConfig {
                n_trees: 5,
                bootstrap,
                ..ForestConfig::default()
            };
            let a = ForestModel::fit(&ds, &cfg, 1).unwrap();
            let b = ForestModel::fit(&doubled, &cfg, 1).unwrap();
            assert_eq!(a.trees, b.trees);
        }
    }

    #[test]
    fn single_stump_probabilities() {
        let m = ForestModel {
            trees: vec![Tree {
                nodes: vec![
                    Node::Split {
                        feature: 0,
                        threshold: 0.0,
                        left: 1,
                        right: 2,
                    },
                    Node::Leaf { proba: 0.25 },
                    Node::Leaf { proba: 0.8 },
                ],
            }],
            n_trees: 1,
            max_depth: Some(1),
            min_leaf_weight: 1.0,
            features_per_split: 1,
            seed: 0,
            n_features: 1,
        };
        assert_eq!(m.predict_proba(&array![[-1.0], [0.0], [2.0]]).unwrap(), vec![0.25, 0.25, 0.8]);
        assert!(m.predict_proba(&array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn probabilities_in_unit_interval() {
        let ds = step_data();
        let m = ForestModel::fit(&ds, &ForestConfig { n_trees: 4, ..Default::default() }, 0).unwrap();
        let probe = array![[-100.0], [0.1], [3.0], [1e9]];
        assert!(m.predict_proba(&probe).unwrap().iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
