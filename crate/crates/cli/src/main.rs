use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fairboost::dataset::{encode_onehot, load_csv, presets, write_csv, Discretizer, EncodedKind, TabularDataset};
use fairboost::experiment::{emit_report, render_report, run_grid, ExperimentConfig, GridResults, ReportFormat};
use fairboost::metrics::evaluate_labels;
use fairboost::pipeline::OP_BINS;
use fairboost::preprocess::{lfr_fit, op_fit, op_transform, reweigh_fit, FittedPreprocessor, PreprocessorSpec};
use fairboost::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fairboost", version, about = "Fairness pre-processing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid and write results.json, results.csv and report.md.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of seeds.
        #[arg(long)]
        seeds: Option<usize>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        master_seed: Option<u64>,
    },
    /// Fit one pre-processor on a dataset and write the transformed rows
    /// (`.csv`) or the fitted model (`.json`).
    Transform {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset preset; required when the config lists several.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute the metric report for predicted labels.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        groups: PathBuf,
    },
    /// Render a results file as json, csv or markdown.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Rw,
    Lfr,
    Op,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Markdown,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
            Format::Markdown => ReportFormat::Markdown,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(config: &Path, out: &Path, seeds: Option<usize>, jobs: usize, master_seed: Option<u64>) -> Result<serde_json::Value> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(n) = seeds {
        cfg.n_seeds = n;
    }
    if let Some(s) = master_seed {
        cfg.master_seed = s;
    }
    let results = run_grid(&cfg, jobs)?;
    let mut files = Vec::new();
    for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
        files.push(emit_report(&results, format, out)?.display().to_string());
    }
    Ok(json!({
        "status": "ok",
        "cells": results.cells.len(),
        "reports": results.cells.iter().map(|c| c.reports.len()).sum::<usize>(),
        "failures": results.failure_count(),
        "files": files,
    }))
}

fn transform(config: &Path, algo: Algo, input: &Path, out: &Path, dataset: Option<&str>, seed: Option<u64>) -> Result<serde_json::Value> {
    let cfg = ExperimentConfig::from_file(config)?;
    let entry = match dataset {
        Some(name) => cfg.dataset(name)?,
        None if cfg.datasets.len() == 1 => &cfg.datasets[0],
        None => return Err(Error::Config("config lists several datasets; pass --dataset".into())),
    };
    let spec = presets::by_name(&entry.preset).ok_or_else(|| Error::Config(format!("unknown preset `{}`", entry.preset)))?;
    let ds = load_csv(input, &spec)?;
    let seed = seed.unwrap_or(cfg.master_seed);
    let (fitted, data): (FittedPreprocessor, TabularDataset) = match algo {
        Algo::Rw => {
            let model = reweigh_fit(&ds)?;
            let data = model.apply(&ds)?;
            (FittedPreprocessor::Rw(model), data)
        }
        Algo::Lfr => {
            let PreprocessorSpec::Lfr(params) = cfg.preprocessor(entry, "lfr")? else { unreachable!() };
            let encoded = encode_onehot(&ds)?;
            let model = lfr_fit(&encoded, &params, seed)?;
            let data = model.transform_training(&encoded)?;
            (FittedPreprocessor::Lfr(model), data)
        }
        Algo::Op => {
            let PreprocessorSpec::Op(params) = cfg.preprocessor(entry, "op")? else { unreachable!() };
            let discrete = if ds.schema().iter().any(|c| matches!(c.kind, EncodedKind::Continuous)) {
                Discretizer::fit(&ds, OP_BINS)?.transform(&ds)?
            } else {
                ds.clone()
            };
            let model = op_fit(&discrete, &params)?;
            let data = op_transform(&model, &discrete, seed)?;
            (FittedPreprocessor::Op(model), data)
        }
    };
    let as_json = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if as_json {
        let text = serde_json::to_string_pretty(&fitted)? + "\n";
        std::fs::write(out, text).map_err(io_err(out))?;
    } else {
        write_csv(&data, out)?;
    }
    Ok(json!({
        "status": "ok",
        "algo": match algo { Algo::Rw => "rw", Algo::Lfr => "lfr", Algo::Op => "op" },
        "rows": data.n_rows(),
        "out": out.display().to_string(),
    }))
}

/// Reads a single column of 0/1 values; a non-numeric first line is a header.
fn read_binary_column(path: &Path) -> Result<Vec<u8>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cell = line.split(',').next().unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        match cell {
            "0" => values.push(0),
            "1" => values.push(1),
            _ if i == 0 => {}
            other => {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    message: format!("line {}: expected 0 or 1, got `{other}`", i + 1),
                })
            }
        }
    }
    Ok(values)
}

fn evaluate(pred: &Path, truth: &Path, groups: &Path) -> Result<serde_json::Value> {
    let report = evaluate_labels(&read_binary_column(pred)?, &read_binary_column(truth)?, &read_binary_column(groups)?)?;
    Ok(serde_json::to_value(report)?)
}

fn report(results: &Path, format: Format, out: Option<&Path>) -> Result<Option<String>> {
    let text = std::fs::read_to_string(results).map_err(io_err(results))?;
    let grid = GridResults::from_json(&text)?;
    let rendered = render_report(&grid, format.into())?;
    match out {
        Some(path) => {
            std::fs::write(path, rendered).map_err(io_err(path))?;
            Ok(None)
        }
        None => Ok(Some(rendered)),
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({ "status": "error", "kind": kind, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "status": "error", "kind": "usage", "message": e.to_string().trim() }));
            return ExitCode::from(2);
        }
    };
    let outcome = match &cli.command {
        Command::Run { config, out, seeds, jobs, master_seed } => run(config, out, *seeds, *jobs, *master_seed).map(|v| v.to_string()),
        Command::Transform { config, algo, input, out, dataset, seed } => {
            transform(config, *algo, input, out, dataset.as_deref(), *seed).map(|v| v.to_string())
        }
        Command::Evaluate { pred, truth, groups } => evaluate(pred, truth, groups).map(|v| v.to_string()),
        Command::Report { results, format, out } => {
            report(results, *format, out.as_deref()).map(|text| text.unwrap_or_default())
        }
    };
    match outcome {
        Ok(text) => {
            if !text.is_empty() {
                print!("{text}");
                if !text.ends_with('\n') {
                    println!();
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
