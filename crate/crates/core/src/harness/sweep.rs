//! Parameter sweeps: one run per (value, seed) cell, executed in parallel,
//! followed by summary tables recomputed from the per-cell files.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{HyperMode, RunConfig};
use crate::harness::run::{read_meta, run_experiment, write_json, TRACE_FILE};
use crate::harness::trace::{fmt_f64, RunTrace};

pub const MANIFEST_FILE: &str = "sweep.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_BY_VALUE_FILE: &str = "summary_by_value.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    K,
    I,
    #[serde(rename = "eta")]
    Eta,
    T,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::K => "K",
            SweepAxis::I => "I",
            SweepAxis::Eta => "eta",
            SweepAxis::T => "T",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" => Ok(SweepAxis::K),
            "I" => Ok(SweepAxis::I),
            "eta" => Ok(SweepAxis::Eta),
            "T" => Ok(SweepAxis::T),
            _ => Err(Error::Config(format!(
                "unknown sweep axis {s:?}; expected K, I, eta or T"
            ))),
        }
    }
}

/// Values are kept as the user wrote them so directory names are stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub axis: SweepAxis,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
}

impl SweepManifest {
    pub fn cell_dir(&self, root: &Path, value: &str, seed: u64) -> PathBuf {
        root.join(format!("{}-{value}", self.axis)).join(format!("seed-{seed}"))
    }
}

fn parse_count(axis: SweepAxis, value: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(Error::Config(format!(
            "{axis} values must be positive integers, got {value:?}"
        ))),
    }
}

/// Applies one sweep value to a copy of `base`.
pub fn apply_axis(base: &RunConfig, axis: SweepAxis, value: &str, seed: u64) -> Result<RunConfig> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.out_dir = None;
    match axis {
        SweepAxis::K => cfg.problem.set_clients(parse_count(axis, value)?)?,
        SweepAxis::I => {
            let i = parse_count(axis, value)?;
            if i > cfg.hyper.horizon {
                return Err(Error::Config(format!("I = {i} exceeds T = {}", cfg.hyper.horizon)));
            }
            cfg.hyper.local_period = Some(i);
        }
        SweepAxis::T => {
            let t = parse_count(axis, value)?;
            if cfg.hyper.local_period.is_some_and(|i| i > t) {
                return Err(Error::Config(format!("T = {t} is below the configured I")));
            }
            cfg.hyper.horizon = t;
        }
        SweepAxis::Eta => {
            if cfg.hyper.mode != HyperMode::Fixed {
                return Err(Error::Config("an eta sweep needs hyper.mode = \"fixed\"".into()));
            }
            let eta: f64 = value
                .parse()
                .ok()
                .filter(|v: &f64| *v >= 0.0 && v.is_finite())
                .ok_or_else(|| Error::Config(format!("eta values must be non-negative numbers, got {value:?}")))?;
            cfg.hyper.eta = Some(eta);
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis: String,
    pub value: String,
    pub seed: u64,
    pub final_grad_norm_sq: f64,
    pub avg_grad_norm_sq: f64,
    pub min_sync_x0: Option<f64>,
    pub final_x0: f64,
    pub comm_highdim_up: u64,
    pub comm_lowdim_up: u64,
    pub reals_up: u64,
    pub samples_consumed: u64,
    pub sampled_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSummary {
    pub value: String,
    pub runs: usize,
    pub final_grad_norm_sq_mean: f64,
    pub final_grad_norm_sq_std: f64,
    pub avg_grad_norm_sq_mean: f64,
    pub avg_grad_norm_sq_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub manifest: SweepManifest,
    pub rows: Vec<SummaryRow>,
    pub by_value: Vec<ValueSummary>,
}

/// Runs every (value, seed) cell under `out_dir` and writes the summaries.
pub fn sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<SweepSummary> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::Config("a sweep needs at least one value and one seed".into()));
    }
    let manifest = SweepManifest {
        axis,
        values: values.to_vec(),
        seeds: seeds.to_vec(),
    };
    let mut cells = Vec::new();
    for v in values {
        for &s in seeds {
            cells.push((apply_axis(base, axis, v, s)?, manifest.cell_dir(out_dir, v, s)));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    cells
        .par_iter()
        .map(|(cfg, dir)| run_experiment(cfg, Some(dir)).map(|_| ()))
        .collect::<Result<Vec<()>>>()?;
    report(out_dir)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Reads a sweep directory and returns its summary, recomputed from each cell's files.
pub fn summarize(dir: &Path) -> Result<SweepSummary> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SweepManifest = serde_json::from_str(&text)?;
    let mut rows = Vec::new();
    let mut by_value = Vec::new();
    for v in &manifest.values {
        let mut finals = Vec::new();
        let mut avgs = Vec::new();
        for &s in &manifest.seeds {
            let cell = manifest.cell_dir(dir, v, s);
            let trace_path = cell.join(TRACE_FILE);
            let file = File::open(&trace_path).map_err(|e| Error::io(&trace_path, e))?;
            let trace = RunTrace::read_csv(file)?;
            let meta = read_meta(&cell)?;
            let last = trace
                .last()
                .ok_or_else(|| Error::Numerical(format!("{} has no rows", trace_path.display())))?;
            let row = SummaryRow {
                axis: manifest.axis.to_string(),
                value: v.clone(),
                seed: s,
                final_grad_norm_sq: last.grad_norm_sq,
                avg_grad_norm_sq: trace.mean_grad_norm_sq(),
                min_sync_x0: meta.min_sync_x0,
                final_x0: last.mean_x0,
                comm_highdim_up: last.comm_highdim_up,
                comm_lowdim_up: last.comm_lowdim_up,
                reals_up: last.reals_up,
                samples_consumed: last.samples_consumed,
                sampled_index: meta.sampled_index,
            };
            finals.push(row.final_grad_norm_sq);
            avgs.push(row.avg_grad_norm_sq);
            rows.push(row);
        }
        let (fm, fs_) = mean_std(&finals);
        let (am, as_) = mean_std(&avgs);
        by_value.push(ValueSummary {
            value: v.clone(),
            runs: finals.len(),
            final_grad_norm_sq_mean: fm,
            final_grad_norm_sq_std: fs_,
            avg_grad_norm_sq_mean: am,
            avg_grad_norm_sq_std: as_,
        });
    }
    Ok(SweepSummary {
        manifest,
        rows,
        by_value,
    })
}

/// Regenerates `summary.csv` and `summary_by_value.csv` for a sweep directory.
pub fn report(dir: &Path) -> Result<SweepSummary> {
    let summary = summarize(dir)?;
    write_summary(dir, &summary)?;
    Ok(summary)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_summary(dir: &Path, s: &SweepSummary) -> Result<()> {
    let path = dir.join(SUMMARY_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([
        "axis",
        "value",
        "seed",
        "final_grad_norm_sq",
        "avg_grad_norm_sq",
        "min_sync_x0",
        "final_x0",
        "comm_highdim_up",
        "comm_lowdim_up",
        "reals_up",
        "samples_consumed",
        "sampled_index",
    ])?;
    for r in &s.rows {
        w.write_record([
            r.axis.clone(),
            r.value.clone(),
            r.seed.to_string(),
            fmt_f64(r.final_grad_norm_sq),
            fmt_f64(r.avg_grad_norm_sq),
            opt(r.min_sync_x0),
            fmt_f64(r.final_x0),
            r.comm_highdim_up.to_string(),
            r.comm_lowdim_up.to_string(),
            r.reals_up.to_string(),
            r.samples_consumed.to_string(),
            r.sampled_index.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(SUMMARY_BY_VALUE_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([
        "value",
        "runs",
        "final_grad_norm_sq_mean",
        "final_grad_norm_sq_std",
        "avg_grad_norm_sq_mean",
        "avg_grad_norm_sq_std",
    ])?;
    for v in &s.by_value {
        w.write_record([
            v.value.clone(),
            v.runs.to_string(),
            fmt_f64(v.final_grad_norm_sq_mean),
            fmt_f64(v.final_grad_norm_sq_std),
            fmt_f64(v.avg_grad_norm_sq_mean),
            fmt_f64(v.avg_grad_norm_sq_std),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}
