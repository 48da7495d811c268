//! The seeded experiment grid: datasets x models x pipelines x seeds,
//! per-cell aggregation and the baseline comparisons behind both tables.

mod config;
mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{load_dataset, DatasetEntry, EnsembleConfig, ExperimentConfig, PreprocessorConfig, PREPROCESSOR_IDS};
pub use report::{emit_report, render_report, ReportFormat};

use crate::dataset::{split, TabularDataset};
use crate::ensemble::{bootstrap_resample, ensemble_fit, Combiner, EnsembleModel, MemberSpec};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricReport};
use crate::models::{ClassifierSpec, Prediction};
use crate::pipeline::{FittedPipeline, FittedTransform};
use crate::rng::{derive_seed, replicate_seed};
use crate::stats::{compare_conditions, Direction, SampleSet, TestResult};

/// Identity of one grid cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub dataset: String,
    pub model: String,
    /// Pre-processor ids in table order; `["none"]` is the baseline.
    pub pipeline: Vec<String>,
    /// Set for ensembles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combiner: Option<Combiner>,
}

impl CellId {
    pub fn single(dataset: &str, model: &str, preprocessor: &str) -> Self {
        Self {
            dataset: dataset.into(),
            model: model.into(),
            pipeline: vec![preprocessor.into()],
            combiner: None,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.combiner.is_none() && self.pipeline == ["none"]
    }

    /// Table label: `Baseline`, `LFR`, `LFR+OP`, ...
    pub fn label(&self) -> String {
        if self.is_baseline() {
            return "Baseline".into();
        }
        self.pipeline.iter().map(|p| p.to_uppercase()).collect::<Vec<_>>().join("+")
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.dataset, self.model, self.label())?;
        if let Some(c) = self.combiner {
            write!(f, "/{}", c.name())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed_index: usize,
    pub seed: u64,
    pub report: MetricReport,
}

/// A cell that could not be evaluated for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub seed_index: usize,
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Label of the reference cell (`Baseline` or a single pre-processor).
    pub against: String,
    pub metric: String,
    pub verdict: Direction,
    /// Absent when either side has no successful seeds.
    pub test: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub id: CellId,
    pub reports: Vec<SeedReport>,
    pub failures: Vec<CellFailure>,
    pub mean_ndi: Option<f64>,
    pub mean_f1: Option<f64>,
    pub comparisons: Vec<Comparison>,
}

impl CellResult {
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.reports
            .iter()
            .map(|r| match metric {
                "ndi" => r.report.ndi,
                "f1" => r.report.f1,
                "accuracy" => r.report.accuracy,
                _ => r.report.di,
            })
            .collect()
    }

    pub fn comparison(&self, against: &str, metric: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.against == against && c.metric == metric)
    }
}

/// Run-wide choices, recorded with every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seeds: Vec<u64>,
    pub lfr_training_data: String,
    pub test_features: String,
    pub tie_rule: String,
    pub seed_policy: String,
}

impl RunMetadata {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            seeds: (0..cfg.n_seeds).map(|i| replicate_seed(cfg.master_seed, i)).collect(),
            lfr_training_data: "reconstructed features and thresholded labels".into(),
            test_features: "lfr: reconstructed through fitted prototypes; rw, op, none: unchanged".into(),
            tie_rule: "mean member probability >= 0.5 predicts 1".into(),
            seed_policy: "shared seeds across cells; per-stage streams derived from (master_seed, seed index, stage)".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResults {
    pub config: ExperimentConfig,
    pub metadata: RunMetadata,
    pub cells: Vec<CellResult>,
}

impl GridResults {
    pub fn cell(&self, id: &CellId) -> Option<&CellResult> {
        self.cells.iter().find(|c| &c.id == id)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn failure_count(&self) -> usize {
        self.cells.iter().map(|c| c.failures.len()).sum()
    }
}

/// Every cell of the grid for one dataset and model, in table order.
pub fn grid_cells(cfg: &ExperimentConfig, dataset: &str, model: &str) -> Vec<CellId> {
    let included = cfg.included();
    let mut cells = vec![CellId::single(dataset, model, "none")];
    cells.extend(included.iter().map(|p| CellId::single(dataset, model, p)));
    let mut sets: Vec<Vec<&str>> = Vec::new();
    if cfg.ensembles.pairs {
        for i in 0..included.len() {
            for j in i + 1..included.len() {
                sets.push(vec![included[i], included[j]]);
            }
        }
    }
    if cfg.ensembles.all && included.len() >= 3 {
        sets.push(included.clone());
    }
    for &combiner in &cfg.ensembles.combiners {
        for set in &sets {
            cells.push(CellId {
                dataset: dataset.into(),
                model: model.into(),
                pipeline: set.iter().map(|s| s.to_string()).collect(),
                combiner: Some(combiner),
            });
        }
    }
    cells
}

/// Cloneable record of an error, shared by every cell that depends on the
/// failed fit.
#[derive(Debug, Clone)]
struct Failed {
    kind: String,
    message: String,
}

impl From<&Error> for Failed {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failed {
    fn from(e: Error) -> Self {
        Self::from(&e)
    }
}

type Outcome = std::result::Result<MetricReport, Failed>;
type Fitted<T> = std::result::Result<T, Failed>;

/// All cells of one dataset for one seed. Pre-processors are fitted once and
/// shared by every model and ensemble that uses them.
fn run_dataset_seed(
    cfg: &ExperimentConfig,
    entry: &DatasetEntry,
    ds: &TabularDataset,
    seed_index: usize,
) -> Vec<(CellId, usize, Outcome)> {
    let seed = replicate_seed(cfg.master_seed, seed_index);
    let name = entry.preset.as_str();
    let parts = match split(ds, cfg.train_fraction, derive_seed(seed, "split")) {
        Ok(p) => p,
        Err(e) => {
            return cfg
                .models
                .iter()
                .flat_map(|m| grid_cells(cfg, name, m.name()))
                .map(|id| (id, seed_index, Err(Failed::from(&e))))
                .collect();
        }
    };
    let mut ids = vec!["none"];
    ids.extend(cfg.included());
    let transforms: BTreeMap<&str, Fitted<(FittedTransform, TabularDataset)>> = ids
        .iter()
        .map(|&id| {
            let t = cfg
                .preprocessor(entry, id)
                .and_then(|spec| FittedTransform::fit(&spec, &parts.train, seed))
                .map_err(Failed::from);
            (id, t)
        })
        .collect();

    let mut out = Vec::new();
    for model in &cfg.models {
        let mut singles: BTreeMap<&str, Fitted<FittedPipeline>> = BTreeMap::new();
        for &id in &ids {
            let fitted = match &transforms[id] {
                Ok((t, data)) => model
                    .fit(data, derive_seed(seed, "model"))
                    .map(|classifier| FittedPipeline {
                        preprocessor: cfg.preprocessor(entry, id).expect("validated"),
                        transform: t.clone(),
                        classifier,
                    })
                    .map_err(Failed::from),
                Err(e) => Err(e.clone()),
            };
            singles.insert(id, fitted);
        }
        for id in grid_cells(cfg, name, model.name()) {
            let outcome = match id.combiner {
                None => {
                    let p = &singles[id.pipeline[0].as_str()];
                    match p {
                        Ok(p) => p
                            .predict(&parts.test)
                            .and_then(|pred| evaluate(&pred, &parts.test))
                            .map_err(Failed::from),
                        Err(e) => Err(e.clone()),
                    }
                }
                Some(combiner) => run_ensemble(cfg, entry, model, &id, combiner, &singles, &transforms, &parts.train, &parts.test, seed),
            };
            out.push((id, seed_index, outcome));
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn run_ensemble(
    cfg: &ExperimentConfig,
    entry: &DatasetEntry,
    model: &ClassifierSpec,
    id: &CellId,
    combiner: Combiner,
    singles: &BTreeMap<&str, Fitted<FittedPipeline>>,
    transforms: &BTreeMap<&str, Fitted<(FittedTransform, TabularDataset)>>,
    train: &TabularDataset,
    test: &TabularDataset,
    seed: u64,
) -> Outcome {
    let member_err = |index: usize, p: &str, e: &Failed| Failed {
        kind: "member".into(),
        message: format!("ensemble member {index} ({p}+{}) failed ({}): {}", model.name(), e.kind, e.message),
    };
    let prediction: Result<Prediction> = match combiner {
        Combiner::Majority => {
            let mut members = Vec::new();
            for (i, p) in id.pipeline.iter().enumerate() {
                match &singles[p.as_str()] {
                    Ok(m) => members.push(m.clone()),
                    Err(e) => return Err(member_err(i, p, e)),
                }
            }
            EnsembleModel::from_members(members, combiner, seed).and_then(|m| m.predict(test))
        }
        Combiner::Bagging => {
            let mut members = Vec::new();
            for (i, p) in id.pipeline.iter().enumerate() {
                let (t, data) = match &transforms[p.as_str()] {
                    Ok(v) => v,
                    Err(e) => return Err(member_err(i, p, e)),
                };
                let member = bootstrap_resample(data, seed.wrapping_add(i as u64))
                    .and_then(|d| model.fit(&d, derive_seed(seed, "model")))
                    .map(|classifier| FittedPipeline {
                        preprocessor: cfg.preprocessor(entry, p).expect("validated"),
                        transform: t.clone(),
                        classifier,
                    })
                    .map_err(|e| member_err(i, p, &Failed::from(e)))?;
                members.push(member);
            }
            EnsembleModel::from_members(members, combiner, seed).and_then(|m| m.predict(test))
        }
        Combiner::Stacking => {
            let specs: Result<Vec<MemberSpec>> = id
                .pipeline
                .iter()
                .map(|p| Ok(MemberSpec::new(cfg.preprocessor(entry, p)?, model.clone())))
                .collect();
            specs
                .and_then(|specs| ensemble_fit(train, &specs, combiner, seed))
                .and_then(|m| m.predict(test))
        }
    };
    prediction.and_then(|pred| evaluate(&pred, test)).map_err(Failed::from)
}

/// Runs one cell for one seed from scratch (no sharing with other cells);
/// yields the same report as the grid. Errors name the cell.
pub fn run_cell(cfg: &ExperimentConfig, cell: &CellId, seed_index: usize) -> Result<MetricReport> {
    let wrap = |f: Failed| Error::Cell {
        cell: cell.to_string(),
        kind: f.kind,
        message: f.message,
    };
    let entry = cfg.dataset(&cell.dataset)?;
    let model = cfg.model(&cell.model)?;
    let ds = load_dataset(entry, cfg.master_seed)?;
    let seed = replicate_seed(cfg.master_seed, seed_index);
    let parts = split(&ds, cfg.train_fraction, derive_seed(seed, "split"))?;
    match cell.combiner {
        None => {
            let run = || -> Result<MetricReport> {
                let spec = cfg.preprocessor(entry, &cell.pipeline[0])?;
                let p = FittedPipeline::fit(&spec, model, &parts.train, seed)?;
                evaluate(&p.predict(&parts.test)?, &parts.test)
            };
            run().map_err(|e| wrap(Failed::from(e)))
        }
        Some(combiner) => {
            let mut transforms = BTreeMap::new();
            let mut singles = BTreeMap::new();
            for p in &cell.pipeline {
                let spec = cfg.preprocessor(entry, p)?;
                transforms.insert(p.as_str(), FittedTransform::fit(&spec, &parts.train, seed).map_err(Failed::from));
                singles.insert(p.as_str(), FittedPipeline::fit(&spec, model, &parts.train, seed).map_err(Failed::from));
            }
            run_ensemble(cfg, entry, model, cell, combiner, &singles, &transforms, &parts.train, &parts.test, seed)
                .map_err(wrap)
        }
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn compare(reference: &CellResult, cell: &CellResult, metric: &str, alpha: f64) -> Comparison {
    let a = reference.values(metric);
    let b = cell.values(metric);
    let test = if a.is_empty() || b.is_empty() {
        None
    } else {
        compare_conditions(
            &SampleSet::new(metric, &reference.id.label(), a),
            &SampleSet::new(metric, &cell.id.label(), b),
            alpha,
        )
        .ok()
    };
    let verdict = match &test {
        Some(t) if t.significant => t.direction,
        _ => Direction::None,
    };
    Comparison {
        against: reference.id.label(),
        metric: metric.into(),
        verdict,
        test,
    }
}

/// Adds the baseline comparisons: single pre-processors against the
/// baseline, ensembles against each of their constituents.
fn attach_comparisons(cells: &mut [CellResult], alpha: f64) {
    let snapshot: Vec<CellResult> = cells.to_vec();
    let find = |dataset: &str, model: &str, pre: &str| {
        snapshot.iter().find(|c| c.id == CellId::single(dataset, model, pre))
    };
    for cell in cells.iter_mut() {
        let refs: Vec<&str> = if cell.id.is_baseline() {
            vec![]
        } else if cell.id.combiner.is_none() {
            vec!["none"]
        } else {
            cell.id.pipeline.iter().map(|s| s.as_str()).collect()
        };
        let mut comparisons = Vec::new();
        for r in refs {
            if let Some(reference) = find(&cell.id.dataset, &cell.id.model, r) {
                for metric in ["ndi", "f1"] {
                    comparisons.push(compare(reference, cell, metric, alpha));
                }
            }
        }
        cell.comparisons = comparisons;
    }
}

/// Runs every cell for every seed on `jobs` threads (0 = all cores) and
/// aggregates. Results do not depend on `jobs` or scheduling.
pub fn run_grid(cfg: &ExperimentConfig, jobs: usize) -> Result<GridResults> {
    cfg.validate()?;
    let datasets: Vec<(&DatasetEntry, TabularDataset)> = cfg
        .datasets
        .iter()
        .map(|d| load_dataset(d, cfg.master_seed).map(|ds| (d, ds)))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|d| (0..cfg.n_seeds).map(move |s| (d, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Vec<(CellId, usize, Outcome)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(d, s)| run_dataset_seed(cfg, datasets[d].0, &datasets[d].1, s))
            .collect()
    });

    let mut order: Vec<CellId> = Vec::new();
    for (entry, _) in &datasets {
        for m in &cfg.models {
            order.extend(grid_cells(cfg, &entry.preset, m.name()));
        }
    }
    let mut by_cell: BTreeMap<CellId, (Vec<SeedReport>, Vec<CellFailure>)> = BTreeMap::new();
    for (id, seed_index, outcome) in outcomes.into_iter().flatten() {
        let seed = replicate_seed(cfg.master_seed, seed_index);
        let slot = by_cell.entry(id).or_default();
        match outcome {
            Ok(report) => slot.0.push(SeedReport { seed_index, seed, report }),
            Err(e) => slot.1.push(CellFailure {
                seed_index,
                seed,
                kind: e.kind,
                message: e.message,
            }),
        }
    }
    let mut cells: Vec<CellResult> = order
        .into_iter()
        .map(|id| {
            let (mut reports, mut failures) = by_cell.remove(&id).unwrap_or_default();
            reports.sort_by_key(|r| r.seed_index);
            failures.sort_by_key(|f| f.seed_index);
            let ndi: Vec<f64> = reports.iter().map(|r| r.report.ndi).collect();
            let f1: Vec<f64> = reports.iter().map(|r| r.report.f1).collect();
            CellResult {
                id,
                mean_ndi: mean(&ndi),
                mean_f1: mean(&f1),
                reports,
                failures,
                comparisons: Vec::new(),
            }
        })
        .collect();
    attach_comparisons(&mut cells, cfg.alpha);
    Ok(GridResults {
        config: cfg.clone(),
        metadata: RunMetadata::new(cfg),
        cells,
    })
}
