//! Declarative TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, HyperParams};
use crate::error::{Error, Result};
use crate::estimators::{BatchSize, BatchSpec};
use crate::harness::csv_io::load_csv_dataset;
use crate::problems::{
    build_chi2_dro, build_counterexample, build_erm, build_kl_dro, build_quadratic, partition_dataset, Chi2Form,
    ClientDataset, CompositionalProblem, LossFamily, PartitionScheme, QuadraticSpec, SyntheticLogistic,
};
use crate::schedule::{theory_schedule, LbarVariant, TheorySchedule};

/// Where a dataset-backed problem gets its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic {
        n_total: usize,
        dim: usize,
        imbalance_ratio: f64,
        #[serde(default = "one")]
        separation: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

fn default_partition() -> PartitionScheme {
    PartitionScheme::UniformShard
}

/// Data and partitioning shared by the dataset-backed problem kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub data: DataSource,
    pub clients: usize,
    #[serde(default = "default_partition")]
    pub partition: PartitionScheme,
    #[serde(default)]
    pub partition_seed: u64,
    #[serde(default = "default_loss")]
    pub loss: LossFamily,
    /// Radius of the parameter ball the declared constants hold on.
    #[serde(default = "one")]
    pub radius: f64,
}

fn default_loss() -> LossFamily {
    LossFamily::Logistic
}

impl DataSpec {
    /// Loads or generates the data and splits it across clients.
    /// Relative CSV paths are resolved against `base`.
    pub fn shards(&self, base: Option<&Path>) -> Result<Vec<ClientDataset>> {
        if self.clients == 0 {
            return Err(Error::Config("clients must be >= 1".into()));
        }
        let data = match &self.data {
            DataSource::Synthetic {
                n_total,
                dim,
                imbalance_ratio,
                separation,
                seed,
            } => SyntheticLogistic {
                n_total: *n_total,
                dim: *dim,
                imbalance_ratio: *imbalance_ratio,
                separation: *separation,
                seed: *seed,
            }
            .generate()?,
            DataSource::Csv { path } => {
                let resolved = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                load_csv_dataset(&resolved)?
            }
        };
        if data.len() < self.clients {
            return Err(Error::Config(format!(
                "dataset has {} rows, fewer than the {} clients",
                data.len(),
                self.clients
            )));
        }
        partition_dataset(&data, self.clients, self.partition, self.partition_seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemConfig {
    Counterexample,
    KlDro {
        lambda: f64,
        #[serde(flatten)]
        data: DataSpec,
    },
    Chi2Dro {
        lambda: f64,
        #[serde(default = "default_chi2_form")]
        form: Chi2Form,
        #[serde(flatten)]
        data: DataSpec,
    },
    Erm {
        #[serde(flatten)]
        data: DataSpec,
    },
    Quadratic(QuadraticSpec),
}

fn default_chi2_form() -> Chi2Form {
    Chi2Form::Printed
}

impl ProblemConfig {
    pub fn build(&self, base: Option<&Path>) -> Result<CompositionalProblem> {
        match self {
            ProblemConfig::Counterexample => Ok(build_counterexample()),
            ProblemConfig::KlDro { lambda, data } => build_kl_dro(&data.shards(base)?, *lambda, data.loss, data.radius),
            ProblemConfig::Chi2Dro { lambda, form, data } => {
                build_chi2_dro(&data.shards(base)?, *lambda, data.loss, data.radius, *form)
            }
            ProblemConfig::Erm { data } => build_erm(&data.shards(base)?, data.loss, data.radius),
            ProblemConfig::Quadratic(spec) => build_quadratic(spec),
        }
    }

    pub fn clients(&self) -> usize {
        match self {
            ProblemConfig::Counterexample => 2,
            ProblemConfig::KlDro { data, .. } | ProblemConfig::Chi2Dro { data, .. } | ProblemConfig::Erm { data } => {
                data.clients
            }
            ProblemConfig::Quadratic(spec) => spec.clients,
        }
    }

    /// Changes the client count; the counterexample has exactly two clients.
    pub fn set_clients(&mut self, k: usize) -> Result<()> {
        match self {
            ProblemConfig::Counterexample => {
                return Err(Error::Config("the counterexample has a fixed client count of 2".into()))
            }
            ProblemConfig::KlDro { data, .. } | ProblemConfig::Chi2Dro { data, .. } | ProblemConfig::Erm { data } => {
                data.clients = k
            }
            ProblemConfig::Quadratic(spec) => spec.clients = k,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperMode {
    /// Step size and momentum derived from the problem constants.
    Theory,
    /// Step size and momentum given explicitly.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub mode: HyperMode,
    pub horizon: usize,
    /// Defaults to `I_max` in theory mode and to 1 in fixed mode.
    #[serde(default)]
    pub local_period: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_h: BatchSize,
    #[serde(default = "default_batch")]
    pub batch_g: BatchSize,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    /// Multiplies the derived step size in theory mode.
    #[serde(default = "one")]
    pub eta_scale: f64,
    #[serde(default)]
    pub lbar: LbarVariant,
}

fn default_batch() -> BatchSize {
    BatchSize::Draws(1)
}

impl HyperConfig {
    pub fn batch(&self) -> BatchSpec {
        BatchSpec {
            batch_h: self.batch_h,
            batch_g: self.batch_g,
        }
    }

    /// Resolves the per-iteration schedule. In theory mode the schedule report
    /// is returned as well.
    pub fn resolve(&self, problem: &CompositionalProblem) -> Result<(HyperParams, Option<TheorySchedule>)> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        let batch = self.batch();
        batch.validate()?;
        let k = problem.num_clients();
        match self.mode {
            HyperMode::Theory => {
                if self.eta.is_some() || self.beta.is_some() {
                    return Err(Error::Config(
                        "eta/beta cannot be set in theory mode; use eta_scale".into(),
                    ));
                }
                if !(self.eta_scale > 0.0 && self.eta_scale.is_finite()) {
                    return Err(Error::Config(format!(
                        "eta_scale must be positive, got {}",
                        self.eta_scale
                    )));
                }
                let b = batch.batch_g.nominal();
                let mut sched = theory_schedule(problem.constants(), b, k, self.horizon, self.local_period, self.lbar)?;
                let period = self.local_period.unwrap_or(sched.i_max);
                let eta = sched.eta * self.eta_scale;
                if self.eta_scale != 1.0 {
                    sched
                        .notes
                        .push(format!("step size scaled by {} to {eta}", self.eta_scale));
                }
                let hp = HyperParams::constant(eta, sched.beta, period, self.horizon, batch, k);
                Ok((hp, Some(sched)))
            }
            HyperMode::Fixed => {
                let eta = self.eta.ok_or_else(|| Error::Config("fixed mode needs eta".into()))?;
                let hp = HyperParams::constant(
                    eta,
                    self.beta.unwrap_or(1.0),
                    self.local_period.unwrap_or(1),
                    self.horizon,
                    batch,
                    k,
                );
                Ok((hp, None))
            }
        }
    }
}

fn default_cadence() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    /// Initial model; zeros when omitted.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub store_iterates: bool,
    pub problem: ProblemConfig,
    pub hyper: HyperConfig,
    /// Directory relative dataset paths resolve against; set by [`RunConfig::load`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.cadence == 0 {
            return Err(Error::Config("cadence must be >= 1".into()));
        }
        if self.hyper.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.hyper.local_period == Some(0) {
            return Err(Error::Config("local_period must be >= 1".into()));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<CompositionalProblem> {
        self.problem.build(self.base_dir.as_deref())
    }

    pub fn initial_point(&self, problem: &CompositionalProblem) -> Result<Vec<f64>> {
        match &self.x0 {
            Some(x) if x.len() != problem.dim_x() => Err(Error::Config(format!(
                "x0 has {} entries but the problem dimension is {}",
                x.len(),
                problem.dim_x()
            ))),
            Some(x) => Ok(x.clone()),
            None => Ok(vec![0.0; problem.dim_x()]),
        }
    }
}
