use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::algorithms::{run_algorithm, FederatedRunResult, HyperParams, RunOptions};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::problems::{eval_true_grad_phi, eval_true_phi, LipschitzConstants};
use crate::schedule::TheorySchedule;
use crate::vector::norm_sq;

pub const TRACE_FILE: &str = "trace.csv";
pub const META_FILE: &str = "meta.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInfo {
    pub name: String,
    pub dim_x: usize,
    pub dim_g: usize,
    #[serde(rename = "K")]
    pub clients: usize,
    pub constants: LipschitzConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedHyper {
    /// First-iteration values; schedules are constant.
    pub eta: f64,
    pub beta: f64,
    #[serde(rename = "I")]
    pub local_period: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub batch_h: String,
    pub batch_g: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommTotals {
    pub highdim_up: u64,
    pub lowdim_up: u64,
    pub highdim_down: u64,
    pub lowdim_down: u64,
    pub reals_up: u64,
    pub reals_down: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: RunConfig,
    pub problem: ProblemInfo,
    pub hyper: ResolvedHyper,
    pub schedule: Option<TheorySchedule>,
    pub final_x: Vec<f64>,
    pub final_phi: f64,
    pub final_grad_norm_sq: f64,
    /// `a(T)`
    pub sampled_index: usize,
    pub sampled_grad_norm_sq: f64,
    /// Smallest first coordinate of `x̄` over the model-sharing steps.
    pub min_sync_x0: Option<f64>,
    pub sync_rounds: usize,
    pub comm: CommTotals,
    pub samples_consumed: u64,
    pub trace_rows: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub result: FederatedRunResult,
    pub meta: RunMeta,
    pub out_dir: Option<PathBuf>,
}

fn resolved_hyper(hp: &HyperParams) -> ResolvedHyper {
    ResolvedHyper {
        eta: hp.eta[0],
        beta: hp.beta[0],
        local_period: hp.local_period,
        horizon: hp.horizon,
        batch_h: hp.batch.batch_h.to_string(),
        batch_g: hp.batch.batch_g.to_string(),
    }
}

/// Builds the problem, resolves the schedule, runs the algorithm and, when an
/// output directory is given (argument first, then the config), writes
/// `trace.csv`, `meta.json` and `timing.json` there.
pub fn run_experiment(config: &RunConfig, out_dir: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let started = Instant::now();
    let problem = config.build_problem()?;
    let (hp, schedule) = config.hyper.resolve(&problem)?;
    if hp.local_period > hp.horizon {
        return Err(Error::Config(format!(
            "local period {} exceeds the horizon {}",
            hp.local_period, hp.horizon
        )));
    }
    let x0 = config.initial_point(&problem)?;
    let opts = RunOptions {
        seed: config.seed,
        cadence: config.cadence,
        store_iterates: config.store_iterates,
    };
    let result = run_algorithm(config.algorithm, &problem, &hp, &x0, &opts)?;

    let (d, dg) = (problem.dim_x(), problem.dim_g());
    let mut warnings = result.warnings.clone();
    if let Some(s) = &schedule {
        if s.horizon_sufficient == Some(false) {
            warnings.push(format!(
                "T = {} is below the threshold T_th = {:?}",
                s.horizon, s.t_threshold
            ));
        }
    }
    let meta = RunMeta {
        config: config.clone(),
        problem: ProblemInfo {
            name: problem.name().to_string(),
            dim_x: d,
            dim_g: dg,
            clients: problem.num_clients(),
            constants: *problem.constants(),
        },
        hyper: resolved_hyper(&hp),
        schedule,
        final_x: result.final_mean.clone(),
        final_phi: eval_true_phi(&problem, &result.final_mean)?,
        final_grad_norm_sq: norm_sq(&eval_true_grad_phi(&problem, &result.final_mean)?),
        sampled_index: result.sampled_index,
        sampled_grad_norm_sq: norm_sq(&eval_true_grad_phi(&problem, &result.sampled_iterate)?),
        min_sync_x0: result.sync_points.iter().map(|s| s.mean[0]).reduce(f64::min),
        sync_rounds: result.sync_points.len(),
        comm: CommTotals {
            highdim_up: result.comm.highdim_up,
            lowdim_up: result.comm.lowdim_up,
            highdim_down: result.comm.highdim_down,
            lowdim_down: result.comm.lowdim_down,
            reals_up: result.comm.reals_up(d, dg),
            reals_down: result.comm.reals_down(d, dg),
        },
        samples_consumed: result.samples_consumed,
        trace_rows: result.trace.rows.len(),
        warnings,
    };

    let target = out_dir.map(Path::to_path_buf).or_else(|| config.out_dir.clone());
    if let Some(dir) = &target {
        write_outputs(dir, &result, &meta, started.elapsed().as_secs_f64())?;
    }
    Ok(RunOutcome {
        result,
        meta,
        out_dir: target,
    })
}

fn write_outputs(dir: &Path, result: &FederatedRunResult, meta: &RunMeta, seconds: f64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trace_path = dir.join(TRACE_FILE);
    let file = File::create(&trace_path).map_err(|e| Error::io(&trace_path, e))?;
    result.trace.write_csv(BufWriter::new(file))?;
    write_json(&dir.join(META_FILE), meta)?;
    write_json(
        &dir.join(TIMING_FILE),
        &serde_json::json!({ "wallclock_seconds": seconds }),
    )
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_meta(dir: &Path) -> Result<RunMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
