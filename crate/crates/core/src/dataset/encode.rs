use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Column, EncodedKind, TabularDataset};
use crate::error::{Error, Result};

/// One-hot encoder whose vocabulary is frozen from a training schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    /// Source column name and its training categories, per categorical column.
    vocab: Vec<(String, Vec<String>)>,
}

impl OneHotEncoder {
    pub fn fit(schema: &[Column]) -> Self {
        let vocab = schema
            .iter()
            .filter_map(|c| match &c.kind {
                EncodedKind::Categorical { categories } => Some((c.name.clone(), categories.clone())),
                _ => None,
            })
            .collect();
        Self { vocab }
    }

    /// Encoded width for an input schema this encoder was fitted on.
    pub fn transform(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        if self.vocab.is_empty() {
            return Ok(ds.clone());
        }
        let vocab: HashMap<&str, &Vec<String>> =
            self.vocab.iter().map(|(n, c)| (n.as_str(), c)).collect();

        // For every input column: its output offset and, for categorical
        // columns, the map from the dataset's category index to the training one.
        let mut plan: Vec<(usize, Option<Vec<Option<usize>>>)> = Vec::new();
        let mut schema = Vec::new();
        for col in ds.schema() {
            let offset = schema.len();
            match &col.kind {
                EncodedKind::Categorical { categories } => {
                    let train = vocab.get(col.name.as_str()).ok_or_else(|| {
                        Error::UnknownColumn(col.name.clone())
                    })?;
                    let remap = categories
                        .iter()
                        .map(|c| train.iter().position(|t| t == c))
                        .collect();
                    for cat in train.iter() {
                        schema.push(Column {
                            name: format!("{}={}", col.name, cat),
                            kind: EncodedKind::Indicator {
                                source: col.name.clone(),
                                category: cat.clone(),
                            },
                        });
                    }
                    plan.push((offset, Some(remap)));
                }
                _ => {
                    schema.push(col.clone());
                    plan.push((offset, None));
                }
            }
        }

        let mut x = Array2::<f64>::zeros((ds.n_rows(), schema.len()));
        for (i, row) in ds.x().rows().into_iter().enumerate() {
            for (j, (&v, (offset, remap))) in row.iter().zip(&plan).enumerate() {
                match remap {
                    None => x[[i, *offset]] = v,
                    Some(remap) => {
                        let unseen = || {
                            let category = match &ds.schema()[j].kind {
                                EncodedKind::Categorical { categories } => categories
                                    .get(v as usize)
                                    .cloned()
                                    .unwrap_or_else(|| v.to_string()),
                                _ => v.to_string(),
                            };
                            Error::UnseenCategory {
                                column: ds.schema()[j].name.clone(),
                                category,
                            }
                        };
                        if v < 0.0 || v.fract() != 0.0 {
                            return Err(unseen());
                        }
                        let k = remap.get(v as usize).copied().flatten().ok_or_else(unseen)?;
                        x[[i, offset + k]] = 1.0;
                    }
                }
            }
        }
        ds.with_features(x, schema)
    }
}

/// One-hot encodes every categorical column against the dataset's own schema.
pub fn encode_onehot(ds: &TabularDataset) -> Result<TabularDataset> {
    OneHotEncoder::fit(ds.schema()).transform(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support;
    use ndarray::array;

    fn categorical(categories: &[&str]) -> Vec<Column> {
        vec![
            Column {
                name: "c".into(),
                kind: EncodedKind::Categorical {
                    categories: categories.iter().map(|s| s.to_string()).collect(),
                },
            },
            Column {
                name: "v".into(),
                kind: EncodedKind::Continuous,
            },
        ]
    }

    #[test]
    fn expands_category_b() {
        let ds = TabularDataset::unweighted(array![[1.0, 7.5]], vec![1], vec![0], categorical(&["a", "b", "c"])).unwrap();
        let enc = encode_onehot(&ds).unwrap();
        assert_eq!(enc.x().row(0).to_vec(), vec![0.0, 1.0, 0.0, 7.5]);
        assert_eq!(enc.schema()[1].name, "c=b");
        assert_eq!(enc.y(), ds.y());
        assert_eq!(enc.w(), ds.w());
    }

    #[test]
    fn no_categorical_is_identity() {
        let ds = test_support::dataset(vec![vec![0.1, 2.0], vec![3.0, -4.0]], vec![0, 1], vec![1, 0]);
        let enc = encode_onehot(&ds).unwrap();
        assert_eq!(enc, ds);
    }

    #[test]
    fn unseen_category_at_transform() {
        let train = TabularDataset::unweighted(array![[0.0, 0.0]], vec![1], vec![0], categorical(&["a", "b", "c"])).unwrap();
        let encoder = OneHotEncoder::fit(train.schema());
        let test = TabularDataset::unweighted(array![[3.0, 0.0]], vec![1], vec![0], categorical(&["a", "b", "c", "d"])).unwrap();
        match encoder.transform(&test) {
            Err(Error::UnseenCategory { category, .. }) => assert_eq!(category, "d"),
            other => panic!("expected unseen category, got {other:?}"),
        }
    }

    #[test]
    fn test_vocabulary_reordered() {
        let train = TabularDataset::unweighted(array![[0.0, 0.0]], vec![1], vec![0], categorical(&["a", "b"])).unwrap();
        let encoder = OneHotEncoder::fit(train.schema());
        let test = TabularDataset::unweighted(array![[0.0, 1.0]], vec![1], vec![0], categorical(&["b", "a"])).unwrap();
        let enc = encoder.transform(&test).unwrap();
        assert_eq!(enc.x().row(0).to_vec(), vec![0.0, 1.0, 1.0]);
    }
}
