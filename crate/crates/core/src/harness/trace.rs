//! Per-iteration metric rows and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::algorithms::ClientState;
use crate::error::{Error, Result};
use crate::problems::{eval_true_phi, grad_phi_unchecked, CompositionalProblem};
use crate::vector::{dist_sq, norm_sq};

/// Message tallies. Each count is one vector sent by one client (up) or
/// received by one client (down); high-dimensional messages carry `d` reals,
/// low-dimensional ones `d_g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommCounters {
    pub highdim_up: u64,
    pub lowdim_up: u64,
    pub highdim_down: u64,
    pub lowdim_down: u64,
}

impl CommCounters {
    /// Total real numbers uploaded.
    pub fn reals_up(&self, dim_x: usize, dim_g: usize) -> u64 {
        self.highdim_up * dim_x as u64 + self.lowdim_up * dim_g as u64
    }

    pub fn reals_down(&self, dim_x: usize, dim_g: usize) -> u64 {
        self.highdim_down * dim_x as u64 + self.lowdim_down * dim_g as u64
    }
}

/// One metric row, taken at the clients' instantaneous mean model `x̄ᵗ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    /// Model-sharing rounds completed so far.
    pub round: usize,
    /// `|∇Φ(x̄ᵗ)|²`, exact.
    pub grad_norm_sq: f64,
    /// `(1/K) Σ |x_k - x̄|²`
    pub drift: f64,
    /// `|ȳ - g(x̄ᵗ)|²` for the algorithm's current embedding estimate `ȳ`.
    pub embed_bias: f64,
    pub comm_highdim_up: u64,
    pub comm_lowdim_up: u64,
    pub comm_highdim_down: u64,
    pub comm_lowdim_down: u64,
    pub reals_up: u64,
    pub samples_consumed: u64,
    pub phi: f64,
    /// First coordinate of `x̄ᵗ`.
    pub mean_x0: f64,
}

pub const TRACE_COLUMNS: [&str; 13] = [
    "t",
    "round",
    "grad_norm_sq",
    "drift",
    "embed_bias",
    "comm_highdim_up",
    "comm_lowdim_up",
    "comm_highdim_down",
    "comm_lowdim_down",
    "reals_up",
    "samples_consumed",
    "phi",
    "mean_x0",
];

/// Floats are written with 17 significant digits so they round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Mean of `grad_norm_sq` over the recorded rows.
    pub fn mean_grad_norm_sq(&self) -> f64 {
        if self.rows.is_empty() {
            return f64::NAN;
        }
        self.rows.iter().map(|r| r.grad_norm_sq).sum::<f64>() / self.rows.len() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.round.to_string(),
                fmt_f64(r.grad_norm_sq),
                fmt_f64(r.drift),
                fmt_f64(r.embed_bias),
                r.comm_highdim_up.to_string(),
                r.comm_lowdim_up.to_string(),
                r.comm_highdim_down.to_string(),
                r.comm_lowdim_down.to_string(),
                r.reals_up.to_string(),
                r.samples_consumed.to_string(),
                fmt_f64(r.phi),
                fmt_f64(r.mean_x0),
            ])?;
        }
        w.flush().map_err(|e| Error::io("trace.csv", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != TRACE_COLUMNS {
            return Err(Error::Numerical(format!("unexpected trace header: {headers:?}")));
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            rows.push(rec?);
        }
        Ok(Self { rows })
    }
}

/// Computes the metric row for the current client states.
pub fn record_metrics(
    problem: &CompositionalProblem,
    states: &[ClientState],
    t: usize,
    round: usize,
    y_bar: &[f64],
    counters: &CommCounters,
    samples_consumed: u64,
) -> TraceRow {
    let mean = client_mean(states);
    let drift = states.iter().map(|s| dist_sq(&s.x, &mean)).sum::<f64>() / states.len() as f64;
    let g = problem.inner_unchecked(&mean);
    TraceRow {
        t,
        round,
        grad_norm_sq: norm_sq(&grad_phi_unchecked(problem, &mean)),
        drift,
        embed_bias: dist_sq(y_bar, &g),
        comm_highdim_up: counters.highdim_up,
        comm_lowdim_up: counters.lowdim_up,
        comm_highdim_down: counters.highdim_down,
        comm_lowdim_down: counters.lowdim_down,
        reals_up: counters.reals_up(problem.dim_x(), problem.dim_g()),
        samples_consumed,
        phi: eval_true_phi(problem, &mean).unwrap_or(f64::NAN),
        mean_x0: mean[0],
    }
}

pub(crate) fn client_mean(states: &[ClientState]) -> Vec<f64> {
    let xs: Vec<&[f64]> = states.iter().map(|s| s.x.as_slice()).collect();
    crate::algorithms::aggregate_mean(&xs).expect("client states are nonempty and uniform")
}
