//! Per-client stochastic estimators: the chain-rule gradient and the hybrid
//! momentum estimate of the inner function value.

use std::fmt;

use rand::RngCore;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::problems::{ClientOracle, OuterMap, Sample};
use crate::vector::{axpy, scale};

/// Per-iteration sample count for one oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    /// `n >= 1` independent draws, with replacement.
    Draws(usize),
    /// Exact full-information evaluation.
    Full,
}

impl BatchSize {
    pub fn draws(n: usize) -> Result<Self> {
        if n == 0 {
            Err(Error::invalid("batch size must be >= 1"))
        } else {
            Ok(BatchSize::Draws(n))
        }
    }

    /// Batch size used by the step-size formulas; a full batch counts as 1.
    pub fn nominal(&self) -> usize {
        match self {
            BatchSize::Draws(n) => *n,
            BatchSize::Full => 1,
        }
    }
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::Draws(n) => write!(f, "{n}"),
            BatchSize::Full => f.write_str("full"),
        }
    }
}

impl Serialize for BatchSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Draws(n) => s.serialize_u64(*n as u64),
            BatchSize::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(u64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(0) => Err(de::Error::custom("batch size must be >= 1")),
            Repr::N(n) => Ok(BatchSize::Draws(n as usize)),
            Repr::S(s) if s == "full" => Ok(BatchSize::Full),
            Repr::S(s) => Err(de::Error::custom(format!(
                "batch size must be a positive integer or \"full\", got {s:?}"
            ))),
        }
    }
}

/// Batch sizes `|b_h|` and `|b_g|` drawn by each client every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub batch_h: BatchSize,
    pub batch_g: BatchSize,
}

impl BatchSpec {
    pub fn new(batch_h: usize, batch_g: usize) -> Result<Self> {
        Ok(Self {
            batch_h: BatchSize::draws(batch_h)?,
            batch_g: BatchSize::draws(batch_g)?,
        })
    }

    pub fn full() -> Self {
        Self {
            batch_h: BatchSize::Full,
            batch_g: BatchSize::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in [self.batch_h, self.batch_g] {
            if b == BatchSize::Draws(0) {
                return Err(Error::invalid("batch size must be >= 1"));
            }
        }
        Ok(())
    }
}

/// Draws a batch of `g` samples. A full batch is the single exact sample.
pub fn draw_g_batch(client: &dyn ClientOracle, size: BatchSize, rng: &mut dyn RngCore) -> Vec<Sample> {
    match size {
        BatchSize::Full => vec![Sample::Exact],
        BatchSize::Draws(n) => (0..n).map(|_| client.draw_g(rng)).collect(),
    }
}

pub fn draw_h_batch(client: &dyn ClientOracle, size: BatchSize, rng: &mut dyn RngCore) -> Vec<Sample> {
    match size {
        BatchSize::Full => vec![Sample::Exact],
        BatchSize::Draws(n) => (0..n).map(|_| client.draw_h(rng)).collect(),
    }
}

/// Per-sample evaluations a batch costs.
pub fn batch_cost(client: &dyn ClientOracle, batch: &[Sample]) -> usize {
    batch
        .iter()
        .map(|s| match s {
            Sample::Exact => client.exact_cost(),
            _ => 1,
        })
        .sum()
}

fn check_batch(batch: &[Sample]) -> Result<()> {
    if batch.is_empty() {
        Err(Error::invalid("empty sample batch"))
    } else {
        Ok(())
    }
}

/// Empirical mean of `g_k(x; ζ)` over an explicit batch.
pub fn batch_mean_g_on(client: &dyn ClientOracle, x: &[f64], batch: &[Sample]) -> Result<Vec<f64>> {
    check_dim("x", client.dim_x(), x.len())?;
    check_batch(batch)?;
    Ok(mean_g(client, x, batch))
}

pub(crate) fn mean_g(client: &dyn ClientOracle, x: &[f64], batch: &[Sample]) -> Vec<f64> {
    let mut acc = vec![0.0; client.dim_g()];
    let mut buf = vec![0.0; client.dim_g()];
    for s in batch {
        client.g(x, s, &mut buf);
        axpy(1.0, &buf, &mut acc);
    }
    scale(1.0 / batch.len() as f64, &mut acc);
    acc
}

/// Empirical mean of `batch_g` fresh draws of `g_k(x; ζ)`.
pub fn batch_mean_g(
    client: &dyn ClientOracle,
    x: &[f64],
    batch_g: BatchSize,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    if batch_g == BatchSize::Draws(0) {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let batch = draw_g_batch(client, batch_g, rng);
    batch_mean_g_on(client, x, &batch)
}

/// Chain-rule stochastic gradient
/// `mean_{ξ∈b_h} ∇h_k(x;ξ) + (mean_{ζ∈b_g} ∇g_k(x;ζ)) · ∇f(ȳ)` on explicit batches.
pub fn stochastic_phi_grad_on(
    client: &dyn ClientOracle,
    outer: OuterMap,
    x: &[f64],
    y_bar: &[f64],
    h_batch: &[Sample],
    g_batch: &[Sample],
) -> Result<Vec<f64>> {
    check_dim("x", client.dim_x(), x.len())?;
    check_dim("y_bar", client.dim_g(), y_bar.len())?;
    check_batch(h_batch)?;
    check_batch(g_batch)?;
    Ok(phi_grad(client, &outer.grad(y_bar), x, h_batch, g_batch))
}

pub(crate) fn phi_grad(
    client: &dyn ClientOracle,
    outer_grad: &[f64],
    x: &[f64],
    h_batch: &[Sample],
    g_batch: &[Sample],
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    if !client.h_is_zero() {
        let wh = 1.0 / h_batch.len() as f64;
        for s in h_batch {
            client.add_grad_h(x, s, wh, &mut grad);
        }
    }
    if outer_grad.iter().any(|v| *v != 0.0) {
        let wg = 1.0 / g_batch.len() as f64;
        for s in g_batch {
            client.add_grad_g_dot(x, s, outer_grad, wg, &mut grad);
        }
    }
    grad
}

/// [`stochastic_phi_grad_on`] with freshly drawn batches.
pub fn stochastic_phi_grad(
    client: &dyn ClientOracle,
    outer: OuterMap,
    x: &[f64],
    y_bar: &[f64],
    batch: BatchSpec,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    batch.validate()?;
    let g_batch = draw_g_batch(client, batch.batch_g, rng);
    let h_batch = draw_h_batch(client, batch.batch_h, rng);
    stochastic_phi_grad_on(client, outer, x, y_bar, &h_batch, &g_batch)
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "momentum parameter must lie in [0, 1], got {beta}"
        )))
    }
}

/// Hybrid momentum update of the local embedding estimate on one shared batch:
///
/// `y_t = (1 - β)(y_prev - ĝ(x_prev)) + ĝ(x_t)`, where `ĝ` is the batch mean
/// and both evaluations use the same samples.
pub fn momentum_embedding_update_on(
    client: &dyn ClientOracle,
    x_t: &[f64],
    x_prev: &[f64],
    y_prev: &[f64],
    beta: f64,
    g_batch: &[Sample],
) -> Result<Vec<f64>> {
    check_beta(beta)?;
    check_dim("x_t", client.dim_x(), x_t.len())?;
    check_dim("x_prev", client.dim_x(), x_prev.len())?;
    check_dim("y_prev", client.dim_g(), y_prev.len())?;
    check_batch(g_batch)?;
    Ok(momentum_update(client, x_t, x_prev, y_prev, beta, g_batch))
}

pub(crate) fn momentum_update(
    client: &dyn ClientOracle,
    x_t: &[f64],
    x_prev: &[f64],
    y_prev: &[f64],
    beta: f64,
    g_batch: &[Sample],
) -> Vec<f64> {
    let mut y = mean_g(client, x_t, g_batch);
    if beta < 1.0 {
        let g_prev = mean_g(client, x_prev, g_batch);
        for ((yi, yp), gp) in y.iter_mut().zip(y_prev).zip(&g_prev) {
            *yi += (1.0 - beta) * (yp - gp);
        }
    }
    y
}

/// [`momentum_embedding_update_on`] with a freshly drawn batch.
pub fn momentum_embedding_update(
    client: &dyn ClientOracle,
    x_t: &[f64],
    x_prev: &[f64],
    y_prev: &[f64],
    beta: f64,
    batch_g: BatchSize,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    check_beta(beta)?;
    if batch_g == BatchSize::Draws(0) {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let batch = draw_g_batch(client, batch_g, rng);
    momentum_embedding_update_on(client, x_t, x_prev, y_prev, beta, &batch)
}
