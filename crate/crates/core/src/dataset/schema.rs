use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Binary,
    Categorical,
    Continuous,
}

/// Declaration of one raw CSV feature column.
///
/// `recode` maps raw cell values onto categories before lookup; the key
/// `"*"` catches every raw value not listed. `bucket_edges` turns a numeric
/// raw value into a category: bucket `j` holds values with
/// `edges[j-1] <= v < edges[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recode: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bucket_edges: Vec<f64>,
}

impl ColumnSchema {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
            categories: Vec::new(),
            recode: BTreeMap::new(),
            bucket_edges: Vec::new(),
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            recode: BTreeMap::new(),
            bucket_edges: Vec::new(),
        }
    }

    /// Binary column; `negative` maps to 0 and `positive` to 1.
    pub fn binary(name: &str, negative: &str, positive: &str) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Binary,
            categories: vec![negative.into(), positive.into()],
            recode: BTreeMap::new(),
            bucket_edges: Vec::new(),
        }
    }

    pub fn with_recode(mut self, pairs: &[(&str, &str)]) -> Self {
        self.recode = pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        self
    }

    pub fn with_buckets(mut self, edges: &[f64]) -> Self {
        self.bucket_edges = edges.to_vec();
        if self.categories.is_empty() {
            self.categories = bucket_names(edges);
        }
        self
    }

    /// Maps a raw cell onto its category label (after recoding / bucketing).
    pub(crate) fn category_of(&self, raw: &str) -> Option<String> {
        if !self.bucket_edges.is_empty() {
            let v: f64 = raw.parse().ok()?;
            let bucket = self.bucket_edges.iter().filter(|&&e| e <= v).count();
            return self.categories.get(bucket).cloned();
        }
        if self.recode.is_empty() {
            return Some(raw.to_string());
        }
        self.recode
            .get(raw)
            .or_else(|| self.recode.get("*"))
            .cloned()
    }

    fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidSpec(format!("column `{}`: {m}", self.name)));
        match self.kind {
            ColumnKind::Categorical => {
                if !self.categories.is_empty() && self.categories.len() < 2 {
                    return err("categorical columns need at least two categories".into());
                }
            }
            ColumnKind::Binary => {
                if !self.categories.is_empty() && self.categories.len() != 2 {
                    return err("binary columns list exactly two categories".into());
                }
            }
            ColumnKind::Continuous => {
                if !self.bucket_edges.is_empty() || !self.recode.is_empty() {
                    return err("continuous columns take no recode or buckets".into());
                }
            }
        }
        if !self.bucket_edges.is_empty() {
            if self.bucket_edges.windows(2).any(|p| p[0] >= p[1]) {
                return err("bucket edges must be strictly increasing".into());
            }
            if self.categories.len() != self.bucket_edges.len() + 1 {
                return err("bucketed columns need edges.len() + 1 categories".into());
            }
        }
        let unique: HashSet<&String> = self.categories.iter().collect();
        if unique.len() != self.categories.len() {
            return err("duplicate category".into());
        }
        Ok(())
    }
}

/// Default labels for numeric buckets: `<e0`, `[e0,e1)`, ..., `>=ek`.
pub fn bucket_names(edges: &[f64]) -> Vec<String> {
    let mut out = Vec::with_capacity(edges.len() + 1);
    if let Some(first) = edges.first() {
        out.push(format!("<{first}"));
    }
    for pair in edges.windows(2) {
        out.push(format!("[{},{})", pair[0], pair[1]));
    }
    if let Some(last) = edges.last() {
        out.push(format!(">={last}"));
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Drop rows with a missing cell and report the count.
    #[default]
    Drop,
    /// Fail on the first missing cell.
    Reject,
}

fn default_true() -> bool {
    true
}

fn default_missing_tokens() -> Vec<String> {
    vec!["".into(), "?".into(), "NA".into()]
}

/// How to read one dataset from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub label_column: String,
    pub favorable_label_raw: String,
    pub protected_column: String,
    pub privileged_value_raw: String,
    /// Feature columns, in output order.
    pub columns: Vec<ColumnSchema>,
    /// Raw label value to {0, 1}. Must cover every observed label.
    pub label_remap: BTreeMap<String, u8>,
    /// Append the protected attribute as a feature column.
    #[serde(default = "default_true")]
    pub protected_as_feature: bool,
    /// Optional column holding instance weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_column: Option<String>,
    #[serde(default)]
    pub missing: MissingPolicy,
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for col in &self.columns {
            if !names.insert(col.name.as_str()) {
                return Err(Error::InvalidSpec(format!("duplicate column `{}`", col.name)));
            }
            col.validate()?;
        }
        for special in [&self.label_column, &self.protected_column] {
            if names.contains(special.as_str()) {
                return Err(Error::InvalidSpec(format!(
                    "`{special}` is both a feature and the label/protected column"
                )));
            }
        }
        if self.label_remap.values().any(|&v| v > 1) {
            return Err(Error::InvalidSpec("label_remap values must be 0 or 1".into()));
        }
        match self.label_remap.get(&self.favorable_label_raw) {
            Some(1) => {}
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "favorable label `{}` must map to 1",
                    self.favorable_label_raw
                )))
            }
        }
        Ok(())
    }
}
