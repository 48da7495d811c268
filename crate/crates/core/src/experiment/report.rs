use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CellId, CellResult, GridResults};
use crate::ensemble::Combiner;
use crate::error::{Error, Result};
use crate::stats::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn file_name(&self) -> &'static str {
        match self {
            ReportFormat::Json => "results.json",
            ReportFormat::Csv => "results.csv",
            ReportFormat::Markdown => "report.md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

pub fn render_report(results: &GridResults, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(results)? + "\n"),
        ReportFormat::Csv => render_csv(results),
        ReportFormat::Markdown => Ok(render_markdown(results)),
    }
}

/// Writes the report into `out_dir` and returns the file path.
pub fn emit_report(results: &GridResults, format: ReportFormat, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(format.file_name());
    let text = render_report(results, format)?;
    std::fs::write(&path, text).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        v.to_string()
    }
}

fn render_csv(results: &GridResults) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record([
        "dataset", "model", "pipeline", "combiner", "seed_index", "seed", "status", "ndi", "di", "f1", "accuracy",
        "error_kind", "error",
    ])
    .map_err(csv_err)?;
    for cell in &results.cells {
        let id = &cell.id;
        let pipeline = id.pipeline.join("+");
        let combiner = id.combiner.map(|c| c.name()).unwrap_or("");
        let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
        for r in &cell.reports {
            rows.push((
                r.seed_index,
                vec![
                    r.seed_index.to_string(),
                    r.seed.to_string(),
                    "ok".into(),
                    num(r.report.ndi),
                    num(r.report.di),
                    num(r.report.f1),
                    num(r.report.accuracy),
                    String::new(),
                    String::new(),
                ],
            ));
        }
        for f in &cell.failures {
            rows.push((
                f.seed_index,
                vec![
                    f.seed_index.to_string(),
                    f.seed.to_string(),
                    "failed".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    f.kind.clone(),
                    f.message.clone(),
                ],
            ));
        }
        rows.sort_by_key(|r| r.0);
        for (_, rest) in rows {
            let mut record = vec![id.dataset.clone(), id.model.clone(), pipeline.clone(), combiner.to_string()];
            record.extend(rest);
            w.write_record(&record).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

fn model_title(model: &str) -> &str {
    match model {
        "logistic" => "Logistic Regression",
        "forest" => "Random Forest",
        other => other,
    }
}

fn marker(d: Direction) -> &'static str {
    match d {
        Direction::Improved => " ▲",
        Direction::Worsened => " ▼",
        Direction::None => "",
    }
}

fn entry(cell: Option<&CellResult>, metric: &str, against: Option<&str>) -> String {
    let Some(cell) = cell else { return "-".into() };
    let value = if metric == "ndi" { cell.mean_ndi } else { cell.mean_f1 };
    let mut s = match value {
        Some(v) => format!("{v:.3}"),
        None => "n/a".into(),
    };
    if let Some(c) = against.and_then(|a| cell.comparison(a, metric)) {
        s.push_str(marker(c.verdict));
    }
    if !cell.failures.is_empty() {
        let _ = write!(s, " ({} failed)", cell.failures.len());
    }
    s
}

fn table(out: &mut String, columns: &[String], rows: &[(String, String, Vec<String>)]) {
    let _ = writeln!(out, "| Performance | Dataset | {} |", columns.join(" | "));
    let _ = writeln!(out, "|---|---|{}", "---|".repeat(columns.len()));
    for (perf, dataset, values) in rows {
        let _ = writeln!(out, "| {perf} | {dataset} | {} |", values.join(" | "));
    }
    out.push('\n');
}

fn render_markdown(results: &GridResults) -> String {
    let cfg = &results.config;
    let mut out = String::from("# Fairness pre-processing results\n\n");
    let _ = writeln!(
        out,
        "{} seeds, master seed {}. Values are means over successful seeds. ▲ improved / ▼ worsened: Mann-Whitney U at alpha = {}; no marker: no significant difference.\n",
        cfg.n_seeds, cfg.master_seed, cfg.alpha
    );
    let datasets: Vec<String> = cfg.datasets.iter().map(|d| d.preset.clone()).collect();
    let included: Vec<&str> = cfg.included();
    let find = |id: &CellId| results.cell(id);
    let metrics = [("Fairness", "ndi"), ("Accuracy", "f1")];

    for model in &cfg.models {
        let m = model.name();
        if !results.cells.iter().any(|c| c.id.model == m) {
            continue;
        }
        let _ = writeln!(out, "## Pre-processing vs baseline, {}\n", model_title(m));
        let mut columns = vec!["Baseline".to_string()];
        columns.extend(included.iter().map(|p| p.to_uppercase()));
        let mut rows = Vec::new();
        for (perf, metric) in metrics {
            for (i, d) in datasets.iter().enumerate() {
                let mut values = vec![entry(find(&CellId::single(d, m, "none")), metric, None)];
                for p in &included {
                    values.push(entry(find(&CellId::single(d, m, p)), metric, Some("Baseline")));
                }
                rows.push((if i == 0 { perf.to_string() } else { String::new() }, d.clone(), values));
            }
        }
        table(&mut out, &columns, &rows);
    }

    for &combiner in &cfg.ensembles.combiners {
        for model in &cfg.models {
            let m = model.name();
            for p in &included {
                let others: Vec<&str> = included.iter().copied().filter(|q| q != p).collect();
                let ensemble_id = |set: Vec<&str>, d: &str| {
                    let mut pipeline: Vec<String> = set.iter().map(|s| s.to_string()).collect();
                    pipeline.sort_by_key(|s| included.iter().position(|i| i == s));
                    CellId {
                        dataset: d.into(),
                        model: m.into(),
                        pipeline,
                        combiner: Some(combiner),
                    }
                };
                let mut sets: Vec<(String, Vec<&str>)> = Vec::new();
                if cfg.ensembles.pairs {
                    sets.extend(others.iter().map(|q| (format!("+{}", q.to_uppercase()), vec![*p, *q])));
                }
                if cfg.ensembles.all && included.len() >= 3 {
                    sets.push(("All".into(), included.clone()));
                }
                if sets.is_empty() || !results.cells.iter().any(|c| c.id.model == m && c.id.combiner == Some(combiner)) {
                    continue;
                }
                let _ = writeln!(
                    out,
                    "## Ensembles ({}): {} with {}\n",
                    combiner_title(combiner),
                    p.to_uppercase(),
                    model_title(m)
                );
                let mut columns = vec![p.to_uppercase()];
                columns.extend(sets.iter().map(|(label, _)| label.clone()));
                let against = p.to_uppercase();
                let mut rows = Vec::new();
                for (perf, metric) in metrics {
                    for (i, d) in datasets.iter().enumerate() {
                        let mut values = vec![entry(find(&CellId::single(d, m, p)), metric, None)];
                        for (_, set) in &sets {
                            values.push(entry(find(&ensemble_id(set.clone(), d)), metric, Some(&against)));
                        }
                        rows.push((if i == 0 { perf.to_string() } else { String::new() }, d.clone(), values));
                    }
                }
                table(&mut out, &columns, &rows);
            }
        }
    }

    let failures: Vec<&CellResult> = results.cells.iter().filter(|c| !c.failures.is_empty()).collect();
    if !failures.is_empty() {
        out.push_str("## Failed cells\n\n| Cell | Seed index | Kind | Message |\n|---|---|---|---|\n");
        for c in failures {
            for f in &c.failures {
                let _ = writeln!(out, "| {} | {} | {} | {} |", c.id, f.seed_index, f.kind, f.message.replace('|', "\\|"));
            }
        }
        out.push('\n');
    }
    out
}

fn combiner_title(c: Combiner) -> &'static str {
    match c {
        Combiner::Majority => "majority vote",
        Combiner::Bagging => "bagging",
        Combiner::Stacking => "stacking",
    }
}
