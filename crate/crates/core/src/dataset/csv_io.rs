use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, ColumnSchema, DatasetSpec, MissingPolicy};
use super::{Column, EncodedKind, TabularDataset};
use crate::error::{Error, Result};

/// Row accounting for one load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

pub fn load_csv(path: impl AsRef<Path>, spec: &DatasetSpec) -> Result<TabularDataset> {
    load_csv_with_report(path, spec).map(|(ds, _)| ds)
}

pub fn load_csv_with_report(
    path: impl AsRef<Path>,
    spec: &DatasetSpec,
) -> Result<(TabularDataset, LoadReport)> {
    let path = path.as_ref();
    spec.validate()?;
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: HashMap<String, usize> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    let position = |name: &str| {
        header
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let label_idx = position(&spec.label_column)?;
    let protected_idx = position(&spec.protected_column)?;
    let weight_idx = spec.weight_column.as_deref().map(position).transpose()?;
    let feature_idx: Vec<usize> = spec
        .columns
        .iter()
        .map(|c| position(&c.name))
        .collect::<Result<_>>()?;

    let mut used: Vec<usize> = feature_idx.clone();
    used.extend([label_idx, protected_idx]);
    used.extend(weight_idx);

    let mut records = Vec::new();
    let mut report = LoadReport {
        rows_read: 0,
        rows_dropped: 0,
    };
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        report.rows_read += 1;
        let missing = used.iter().find(|&&i| {
            let cell = record.get(i).unwrap_or("");
            spec.missing_tokens.iter().any(|t| t == cell)
        });
        if let Some(&i) = missing {
            match spec.missing {
                MissingPolicy::Drop => {
                    report.rows_dropped += 1;
                    continue;
                }
                MissingPolicy::Reject => {
                    let column = header
                        .iter()
                        .find(|(_, &j)| j == i)
                        .map(|(name, _)| name.clone())
                        .unwrap_or_default();
                    return Err(Error::MissingValue { row: row + 1, column });
                }
            }
        }
        records.push((row + 1, record));
    }

    // Vocabulary per column: declared, or inferred from the data in sorted order.
    let mut vocab: Vec<Vec<String>> = Vec::with_capacity(spec.columns.len());
    for (col, &idx) in spec.columns.iter().zip(&feature_idx) {
        let categories = match col.kind {
            ColumnKind::Continuous => Vec::new(),
            ColumnKind::Binary if col.categories.is_empty() => vec!["0".into(), "1".into()],
            _ if !col.categories.is_empty() => col.categories.clone(),
            _ => {
                let mut seen = BTreeSet::new();
                for (row, rec) in &records {
                    seen.insert(category(col, rec.get(idx).unwrap_or(""), *row)?);
                }
                if seen.len() < 2 {
                    return Err(Error::InvalidSpec(format!(
                        "column `{}` has fewer than two categories",
                        col.name
                    )));
                }
                seen.into_iter().collect()
            }
        };
        vocab.push(categories);
    }
    let lookup: Vec<HashMap<&str, usize>> = vocab
        .iter()
        .map(|v| v.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect())
        .collect();

    let n = records.len();
    let d = spec.columns.len() + usize::from(spec.protected_as_feature);
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut protected_values = BTreeSet::new();

    for (i, (row, rec)) in records.iter().enumerate() {
        let label_raw = rec.get(label_idx).unwrap_or("");
        let label = *spec
            .label_remap
            .get(label_raw)
            .ok_or_else(|| Error::UnmappableLabel {
                row: *row,
                value: label_raw.to_string(),
            })?;
        y.push(label);

        let group_raw = rec.get(protected_idx).unwrap_or("");
        protected_values.insert(group_raw.to_string());
        s.push(u8::from(group_raw == spec.privileged_value_raw));

        w.push(match weight_idx {
            Some(j) => parse_number(rec.get(j).unwrap_or(""), *row, spec.weight_column.as_deref().unwrap_or(""))?,
            None => 1.0,
        });

        for (j, (col, &idx)) in spec.columns.iter().zip(&feature_idx).enumerate() {
            let raw = rec.get(idx).unwrap_or("");
            x[[i, j]] = match col.kind {
                ColumnKind::Continuous => parse_number(raw, *row, &col.name)?,
                _ => {
                    let cat = category(col, raw, *row)?;
                    *lookup[j].get(cat.as_str()).ok_or_else(|| Error::UnseenCategory {
                        column: col.name.clone(),
                        category: cat.clone(),
                    })? as f64
                }
            };
        }
        if spec.protected_as_feature {
            x[[i, d - 1]] = f64::from(s[i]);
        }
    }

    if n > 0
        && (protected_values.len() != 2 || !protected_values.contains(&spec.privileged_value_raw))
    {
        return Err(Error::ProtectedNotBinary {
            column: spec.protected_column.clone(),
            found: protected_values.into_iter().collect(),
        });
    }

    let mut schema: Vec<Column> = spec
        .columns
        .iter()
        .zip(vocab)
        .map(|(col, categories)| Column {
            name: col.name.clone(),
            kind: match col.kind {
                ColumnKind::Continuous => EncodedKind::Continuous,
                ColumnKind::Binary => EncodedKind::Binary,
                ColumnKind::Categorical => EncodedKind::Categorical { categories },
            },
        })
        .collect();
    if spec.protected_as_feature {
        schema.push(Column {
            name: spec.protected_column.clone(),
            kind: EncodedKind::Protected,
        });
    }
    let ds = TabularDataset::new(x, y, s, w, schema)?;
    Ok((ds, report))
}

fn category(col: &ColumnSchema, raw: &str, row: usize) -> Result<String> {
    col.category_of(raw).ok_or_else(|| {
        if col.bucket_edges.is_empty() {
            Error::UnseenCategory {
                column: col.name.clone(),
                category: raw.to_string(),
            }
        } else {
            Error::NonNumeric {
                row,
                column: col.name.clone(),
                value: raw.to_string(),
            }
        }
    })
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

pub(crate) const LABEL_HEADER: &str = "label";
pub(crate) const GROUP_HEADER: &str = "group";
pub(crate) const WEIGHT_HEADER: &str = "weight";

/// Writes the encoded matrix plus `label`, `group` and `weight` columns.
/// Numbers use the shortest representation that parses back exactly.
pub fn write_csv(ds: &TabularDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut header: Vec<String> = ds.schema().iter().map(|c| c.name.clone()).collect();
    header.extend([LABEL_HEADER.into(), GROUP_HEADER.into(), WEIGHT_HEADER.into()]);
    writer.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.n_rows() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.y()[i].to_string());
        rec.push(ds.s()[i].to_string());
        rec.push(ds.w()[i].to_string());
        writer.write_record(&rec).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl DatasetSpec {
    /// Spec reading back a file produced by [`write_csv`]; every feature is
    /// read as a continuous column.
    pub fn for_written(ds: &TabularDataset, name: &str) -> Self {
        Self {
            name: name.to_string(),
            label_column: LABEL_HEADER.into(),
            favorable_label_raw: "1".into(),
            protected_column: GROUP_HEADER.into(),
            privileged_value_raw: "1".into(),
            columns: ds
                .schema()
                .iter()
                .map(|c| ColumnSchema::continuous(&c.name))
                .collect(),
            label_remap: BTreeMap::from([("0".into(), 0), ("1".into(), 1)]),
            protected_as_feature: false,
            weight_column: Some(WEIGHT_HEADER.into()),
            missing: MissingPolicy::Reject,
            missing_tokens: vec!["".into()],
        }
    }
}
