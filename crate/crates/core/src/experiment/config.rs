use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_csv, presets, TabularDataset};
use crate::ensemble::Combiner;
use crate::error::{Error, Result};
use crate::models::{ClassifierSpec, ForestConfig, LogisticConfig};
use crate::preprocess::{LfrParams, OpParams, PreprocessorSpec};
use crate::rng::{derive_seed, rng_from};

/// Pre-processor identifiers in table order.
pub const PREPROCESSOR_IDS: [&str; 3] = ["lfr", "op", "rw"];

/// Full grid description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub master_seed: u64,
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub preprocessors: PreprocessorConfig,
    #[serde(default = "default_models")]
    pub models: Vec<ClassifierSpec>,
    #[serde(default)]
    pub ensembles: EnsembleConfig,
}

fn default_seeds() -> usize {
    10
}

fn default_train_fraction() -> f64 {
    0.7
}

fn default_alpha() -> f64 {
    0.05
}

fn default_models() -> Vec<ClassifierSpec> {
    vec![
        ClassifierSpec::Logistic(LogisticConfig::default()),
        ClassifierSpec::Forest(ForestConfig::default()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    /// Preset name: `german`, `compas` or `adult`.
    pub preset: String,
    pub path: PathBuf,
    /// Seeded row subsample applied before splitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rows: Option<usize>,
    /// Per-dataset LFR hyperparameters, merged over `[preprocessors.lfr]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lfr: Option<toml::Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<toml::Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessorConfig {
    pub include: Vec<String>,
    pub lfr: LfrParams,
    pub op: OpParams,
}

impl Default for PreprocessorConfig {
    fn default() -> Self {
        Self {
            include: PREPROCESSOR_IDS.iter().map(|s| s.to_string()).collect(),
            lfr: LfrParams::default(),
            op: OpParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub combiners: Vec<Combiner>,
    /// Every two-algorithm ensemble.
    pub pairs: bool,
    /// The ensemble of all included algorithms.
    pub all: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            combiners: vec![Combiner::Majority],
            pairs: true,
            all: true,
        }
    }
}

fn merge<T: Serialize + for<'de> Deserialize<'de>>(base: &T, over: Option<&toml::Table>, what: &str) -> Result<T> {
    let Some(over) = over else {
        return Ok(serde_json::from_value(serde_json::to_value(base)?)?);
    };
    let mut table = toml::Table::try_from(base).map_err(|e| Error::Config(format!("{what}: {e}")))?;
    for (k, v) in over {
        if !table.contains_key(k) {
            return Err(Error::Config(format!("{what}: unknown key `{k}`")));
        }
        table.insert(k.clone(), v.clone());
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("{what}: {e}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset paths are taken relative to
    /// the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for d in &mut cfg.datasets {
            if d.path.is_relative() {
                d.path = dir.join(&d.path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        for id in &self.preprocessors.include {
            if !PREPROCESSOR_IDS.contains(&id.as_str()) {
                return Err(Error::Config(format!("unknown preprocessor `{id}`")));
            }
        }
        let mut names: Vec<&str> = Vec::new();
        for d in &self.datasets {
            if presets::by_name(&d.preset).is_none() {
                return Err(Error::Config(format!("unknown dataset preset `{}`", d.preset)));
            }
            if names.contains(&d.preset.as_str()) {
                return Err(Error::Config(format!("dataset `{}` listed twice", d.preset)));
            }
            names.push(&d.preset);
            self.lfr_params(d)?;
            self.op_params(d)?;
        }
        Ok(())
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets
            .iter()
            .find(|d| d.preset == name)
            .ok_or_else(|| Error::Config(format!("dataset `{name}` not in config")))
    }

    pub fn lfr_params(&self, d: &DatasetEntry) -> Result<LfrParams> {
        merge(&self.preprocessors.lfr, d.lfr.as_ref(), &format!("{} lfr", d.preset))
    }

    pub fn op_params(&self, d: &DatasetEntry) -> Result<OpParams> {
        merge(&self.preprocessors.op, d.op.as_ref(), &format!("{} op", d.preset))
    }

    /// Pre-processor spec for `id` (`none`, `rw`, `lfr`, `op`) on a dataset.
    pub fn preprocessor(&self, d: &DatasetEntry, id: &str) -> Result<PreprocessorSpec> {
        Ok(match id {
            "none" => PreprocessorSpec::None,
            "rw" => PreprocessorSpec::Rw,
            "lfr" => PreprocessorSpec::Lfr(self.lfr_params(d)?),
            "op" => PreprocessorSpec::Op(self.op_params(d)?),
            other => return Err(Error::Config(format!("unknown preprocessor `{other}`"))),
        })
    }

    /// Included pre-processors in table order.
    pub fn included(&self) -> Vec<&'static str> {
        PREPROCESSOR_IDS
            .iter()
            .copied()
            .filter(|id| self.preprocessors.include.iter().any(|i| i == id))
            .collect()
    }

    pub fn model(&self, name: &str) -> Result<&ClassifierSpec> {
        self.models
            .iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("model `{name}` not in config")))
    }
}

/// Loads a configured dataset, applying the seeded `max_rows` subsample.
pub fn load_dataset(entry: &DatasetEntry, master_seed: u64) -> Result<TabularDataset> {
    let spec = presets::by_name(&entry.preset)
        .ok_or_else(|| Error::Config(format!("unknown dataset preset `{}`", entry.preset)))?;
    let ds = load_csv(&entry.path, &spec)?;
    match entry.max_rows {
        Some(limit) if limit < ds.n_rows() => {
            let mut idx: Vec<usize> = (0..ds.n_rows()).collect();
            let mut rng = rng_from(derive_seed(master_seed, &format!("subsample-{}", entry.preset)));
            rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
            idx.truncate(limit);
            idx.sort_unstable();
            Ok(ds.select(&idx))
        }
        _ => Ok(ds),
    }
}
