//! Synchronous round simulations of the federated algorithms.
//!
//! Every algorithm runs the same skeleton: `T` iterations of per-client local
//! work, a server reduction over clients in id order, and model averaging
//! whenever `(t + 1) mod I == 0`. When `I` does not divide `T` one extra
//! averaging is appended after the last iteration so `x̄ᵀ` is well defined.

mod fedavg;
mod feddro;
mod parallel_sgd;

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use fedavg::{run_modified_fedavg, run_vanilla_fedavg, FedAvgCase};
pub use feddro::run_feddro;
pub use parallel_sgd::run_parallel_sgd;

use crate::error::{check_dim, Error, Result};
use crate::estimators::BatchSpec;
use crate::harness::trace::{client_mean, record_metrics, CommCounters, RunTrace};
use crate::problems::CompositionalProblem;

/// One client's local state.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub x: Vec<f64>,
    /// Model at the start of the previous iteration.
    pub x_prev: Vec<f64>,
    /// Local embedding estimate.
    pub y: Vec<f64>,
    pub rng: ChaCha8Rng,
}

/// Random stream `stream` under `seed`. Clients use stream `id + 1`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const SELECTION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Step size per iteration, length `T`.
    pub eta: Vec<f64>,
    /// Momentum parameter per iteration, length `T`.
    pub beta: Vec<f64>,
    pub local_period: usize,
    pub horizon: usize,
    pub batch: BatchSpec,
    pub clients: usize,
}

impl HyperParams {
    /// Constant step size and momentum over the whole horizon.
    pub fn constant(
        eta: f64,
        beta: f64,
        local_period: usize,
        horizon: usize,
        batch: BatchSpec,
        clients: usize,
    ) -> Self {
        Self {
            eta: vec![eta; horizon],
            beta: vec![beta; horizon],
            local_period,
            horizon,
            batch,
            clients,
        }
    }

    /// Checks the schedule against `problem` and clamps `β > 1` to 1.
    /// Returns human-readable warnings for every adjustment.
    pub fn normalize(&mut self, problem: &CompositionalProblem) -> Result<Vec<String>> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon T must be >= 1"));
        }
        if self.local_period == 0 {
            return Err(Error::invalid("local period I must be >= 1"));
        }
        if self.clients != problem.num_clients() {
            return Err(Error::invalid(format!(
                "hyperparameters are for {} clients but the problem has {}",
                self.clients,
                problem.num_clients()
            )));
        }
        self.batch.validate()?;
        if self.eta.len() != self.horizon {
            return Err(Error::invalid(format!(
                "step-size schedule has length {} but T = {}",
                self.eta.len(),
                self.horizon
            )));
        }
        if self.beta.len() != self.horizon {
            return Err(Error::invalid(format!(
                "momentum schedule has length {} but T = {}",
                self.beta.len(),
                self.horizon
            )));
        }
        if let Some((t, e)) = self
            .eta
            .iter()
            .enumerate()
            .find(|(_, e)| !(**e >= 0.0 && e.is_finite()))
        {
            return Err(Error::invalid(format!("step size at t = {t} is invalid: {e}")));
        }
        let mut warnings = Vec::new();
        let mut clamped = 0usize;
        for b in self.beta.iter_mut() {
            if *b > 1.0 {
                *b = 1.0;
                clamped += 1;
            }
        }
        if clamped > 0 {
            let msg = format!("{clamped} momentum values above 1 clamped to 1");
            warn!("{msg}");
            warnings.push(msg);
        }
        if let Some((t, b)) = self.beta.iter().enumerate().find(|(_, b)| !(0.0..=1.0).contains(*b)) {
            return Err(Error::invalid(format!("momentum parameter at t = {t} is invalid: {b}")));
        }
        Ok(warnings)
    }
}

/// Run-level options that do not affect the algorithm's mathematics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: u64,
    /// Record a trace row every `cadence` iterations (plus the initial row).
    pub cadence: usize,
    /// Keep every `x̄ᵗ`; otherwise only the randomly selected one is retained.
    pub store_iterates: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            cadence: 1,
            store_iterates: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "fedavg-case1")]
    FedAvgCase1,
    #[serde(rename = "fedavg-case2")]
    FedAvgCase2,
    #[serde(rename = "modified-fedavg")]
    ModifiedFedAvg,
    #[serde(rename = "feddro")]
    FedDro,
    #[serde(rename = "parallel-sgd")]
    ParallelSgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::FedAvgCase1,
        Algorithm::FedAvgCase2,
        Algorithm::ModifiedFedAvg,
        Algorithm::FedDro,
        Algorithm::ParallelSgd,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Algorithm::FedAvgCase1 => "fedavg-case1",
            Algorithm::FedAvgCase2 => "fedavg-case2",
            Algorithm::ModifiedFedAvg => "modified-fedavg",
            Algorithm::FedDro => "feddro",
            Algorithm::ParallelSgd => "parallel-sgd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm tag {s:?}")))
    }
}

/// Server mean `x̄` at one model-sharing step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncPoint {
    /// Iteration count after which the averaging happened.
    pub t: usize,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FederatedRunResult {
    pub algorithm: Algorithm,
    pub trace: RunTrace,
    pub final_mean: Vec<f64>,
    /// `a(T)`, uniform on `{1, …, T}`.
    pub sampled_index: usize,
    pub sampled_iterate: Vec<f64>,
    pub comm: CommCounters,
    pub samples_consumed: u64,
    pub sync_points: Vec<SyncPoint>,
    /// `x̄ᵗ` for `t = 0..=T` when stored.
    pub iterates: Option<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
}

impl FederatedRunResult {
    pub fn reals_up(&self, dim_x: usize, dim_g: usize) -> u64 {
        self.comm.reals_up(dim_x, dim_g)
    }
}

/// Arithmetic mean, accumulated as a running mean in client-id order so that
/// identical inputs reproduce exactly.
pub fn aggregate_mean(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty set of vectors"))?;
    let mut acc = first.to_vec();
    for (i, v) in vectors.iter().enumerate().skip(1) {
        check_dim("aggregated vector", acc.len(), v.len())?;
        let w = 1.0 / (i + 1) as f64;
        for (a, b) in acc.iter_mut().zip(v.iter()) {
            *a += (b - *a) * w;
        }
    }
    Ok(acc)
}

/// Run any algorithm by tag.
pub fn run_algorithm(
    algorithm: Algorithm,
    problem: &CompositionalProblem,
    hp: &HyperParams,
    x0: &[f64],
    opts: &RunOptions,
) -> Result<FederatedRunResult> {
    match algorithm {
        Algorithm::FedAvgCase1 => run_vanilla_fedavg(problem, hp, FedAvgCase::I, x0, opts),
        Algorithm::FedAvgCase2 => run_vanilla_fedavg(problem, hp, FedAvgCase::II, x0, opts),
        Algorithm::ModifiedFedAvg => run_modified_fedavg(problem, hp, x0, opts),
        Algorithm::FedDro => run_feddro(problem, hp, x0, opts),
        Algorithm::ParallelSgd => run_parallel_sgd(problem, hp, x0, opts),
    }
}

/// Shared bookkeeping for the round loop.
pub(crate) struct Driver<'a> {
    pub problem: &'a CompositionalProblem,
    pub hp: HyperParams,
    pub states: Vec<ClientState>,
    pub comm: CommCounters,
    pub samples: u64,
    rounds: usize,
    opts: RunOptions,
    trace: RunTrace,
    sync_points: Vec<SyncPoint>,
    iterates: Option<Vec<Vec<f64>>>,
    selected: usize,
    selected_iterate: Option<Vec<f64>>,
    warnings: Vec<String>,
}

impl<'a> Driver<'a> {
    pub fn new(
        problem: &'a CompositionalProblem,
        hp: &HyperParams,
        x0: &[f64],
        y0: Vec<f64>,
        opts: &RunOptions,
    ) -> Result<Self> {
        check_dim("x0", problem.dim_x(), x0.len())?;
        check_dim("y0", problem.dim_g(), y0.len())?;
        if opts.cadence == 0 {
            return Err(Error::invalid("metric cadence must be >= 1"));
        }
        let mut hp = hp.clone();
        let warnings = hp.normalize(problem)?;
        let states = (0..problem.num_clients())
            .map(|id| ClientState {
                id,
                x: x0.to_vec(),
                x_prev: x0.to_vec(),
                y: y0.clone(),
                rng: stream_rng(opts.seed, id as u64 + 1),
            })
            .collect();
        let selected = stream_rng(opts.seed, SELECTION_STREAM).random_range(1..=hp.horizon);
        Ok(Self {
            problem,
            hp,
            states,
            comm: CommCounters::default(),
            samples: 0,
            rounds: 0,
            opts: *opts,
            trace: RunTrace::default(),
            sync_points: Vec::new(),
            iterates: opts.store_iterates.then(Vec::new),
            selected,
            selected_iterate: None,
            warnings,
        })
    }

    pub fn k(&self) -> usize {
        self.states.len()
    }

    pub fn horizon(&self) -> usize {
        self.hp.horizon
    }

    /// Whether model sharing follows iteration `t`.
    pub fn is_sync(&self, t: usize) -> bool {
        let i = self.hp.local_period;
        (t + 1).is_multiple_of(i) || (t + 1 == self.hp.horizon && !self.hp.horizon.is_multiple_of(i))
    }

    /// Averages client models, broadcasts the mean and returns it.
    pub fn share_models(&mut self, t: usize) -> Vec<f64> {
        let mean = client_mean(&self.states);
        for s in self.states.iter_mut() {
            s.x.copy_from_slice(&mean);
        }
        let k = self.k() as u64;
        self.comm.highdim_up += k;
        self.comm.highdim_down += k;
        self.rounds += 1;
        self.sync_points.push(SyncPoint {
            t: t + 1,
            mean: mean.clone(),
        });
        mean
    }

    /// Averages the given per-client embeddings on the server and broadcasts the mean.
    pub fn share_embeddings(&mut self, ys: &[Vec<f64>]) -> Vec<f64> {
        let refs: Vec<&[f64]> = ys.iter().map(|y| y.as_slice()).collect();
        let mean = aggregate_mean(&refs).expect("one embedding per client");
        let k = self.k() as u64;
        self.comm.lowdim_up += k;
        self.comm.lowdim_down += k;
        for s in self.states.iter_mut() {
            s.y.copy_from_slice(&mean);
        }
        mean
    }

    /// Records the state before the first iteration.
    pub fn start(&mut self, y_bar: &[f64]) {
        let mean = client_mean(&self.states);
        if let Some(it) = self.iterates.as_mut() {
            it.push(mean);
        }
        self.record(0, y_bar);
    }

    /// Bookkeeping after iteration `t` (state is now `x̄^{t+1}`).
    /// `y_bar` is evaluated lazily and only when a row is due.
    pub fn end_iteration(&mut self, t: usize, y_bar: impl FnOnce(&Self) -> Vec<f64>) {
        let step = t + 1;
        let needs_mean = self.iterates.is_some() || step == self.selected;
        if needs_mean {
            let mean = client_mean(&self.states);
            if step == self.selected {
                self.selected_iterate = Some(mean.clone());
            }
            if let Some(it) = self.iterates.as_mut() {
                it.push(mean);
            }
        }
        if step.is_multiple_of(self.opts.cadence) {
            let y = y_bar(self);
            self.record(step, &y);
        }
    }

    fn record(&mut self, t: usize, y_bar: &[f64]) {
        let row = record_metrics(
            self.problem,
            &self.states,
            t,
            self.rounds,
            y_bar,
            &self.comm,
            self.samples,
        );
        self.trace.rows.push(row);
    }

    pub fn finish(self, algorithm: Algorithm) -> FederatedRunResult {
        let final_mean = client_mean(&self.states);
        FederatedRunResult {
            algorithm,
            trace: self.trace,
            final_mean,
            sampled_index: self.selected,
            sampled_iterate: self.selected_iterate.expect("a(T) lies within the horizon"),
            comm: self.comm,
            samples_consumed: self.samples,
            sync_points: self.sync_points,
            iterates: self.iterates,
            warnings: self.warnings,
        }
    }
}
