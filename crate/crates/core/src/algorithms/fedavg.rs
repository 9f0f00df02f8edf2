//! Deterministic FedAvg variants for compositional problems.

use serde::{Deserialize, Serialize};

use super::{Algorithm, Driver, FederatedRunResult, HyperParams, RunOptions};
use crate::error::Result;
use crate::estimators::{mean_g, phi_grad};
use crate::problems::{CompositionalProblem, Sample};
use crate::vector::axpy;

/// Which quantities vanilla FedAvg shares at a sync step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FedAvgCase {
    /// Models only; each client re-evaluates its own `g_k(x̄)`.
    I,
    /// Models, then the embeddings `g_k(x̄)` are averaged as well.
    II,
}

const EXACT: [Sample; 1] = [Sample::Exact];

fn exact_cost(problem: &CompositionalProblem, k: usize) -> u64 {
    let c = problem.client(k);
    let h = if c.h_is_zero() { 0 } else { c.exact_cost() };
    (c.exact_cost() + h) as u64
}

fn exact_g(problem: &CompositionalProblem, k: usize, x: &[f64]) -> Vec<f64> {
    mean_g(problem.client(k), x, &EXACT)
}

fn local_step(problem: &CompositionalProblem, k: usize, x: &mut [f64], y: &[f64], eta: f64) {
    let client = problem.client(k);
    let grad = phi_grad(client, &problem.outer().grad(y), x, &EXACT, &EXACT);
    axpy(-eta, &grad, x);
}

fn mean_embedding(d: &Driver<'_>) -> Vec<f64> {
    let ys: Vec<&[f64]> = d.states.iter().map(|s| s.y.as_slice()).collect();
    super::aggregate_mean(&ys).expect("one embedding per client")
}

/// Vanilla FedAvg: local steps use each client's own embedding `y_k = g_k(x_k)`.
pub fn run_vanilla_fedavg(
    problem: &CompositionalProblem,
    hp: &HyperParams,
    case: FedAvgCase,
    x0: &[f64],
    opts: &RunOptions,
) -> Result<FederatedRunResult> {
    let mut d = Driver::new(problem, hp, x0, vec![0.0; problem.dim_g()], opts)?;
    for k in 0..d.k() {
        d.states[k].y = exact_g(problem, k, x0);
    }
    if case == FedAvgCase::II {
        let ys: Vec<Vec<f64>> = d.states.iter().map(|s| s.y.clone()).collect();
        d.share_embeddings(&ys);
        // The initial broadcast is setup, not part of the run's traffic.
        d.comm = Default::default();
    }
    let y0 = mean_embedding(&d);
    d.start(&y0);

    for t in 0..d.horizon() {
        let eta = d.hp.eta[t];
        for k in 0..d.k() {
            let s = &mut d.states[k];
            s.x_prev.copy_from_slice(&s.x);
            local_step(problem, k, &mut s.x, &s.y, eta);
            s.y = exact_g(problem, k, &s.x);
            d.samples += exact_cost(problem, k);
        }
        if d.is_sync(t) {
            let mean = d.share_models(t);
            let ys: Vec<Vec<f64>> = (0..d.k()).map(|k| exact_g(problem, k, &mean)).collect();
            match case {
                FedAvgCase::I => {
                    for (s, y) in d.states.iter_mut().zip(ys) {
                        s.y = y;
                    }
                }
                FedAvgCase::II => {
                    d.share_embeddings(&ys);
                }
            }
        }
        d.end_iteration(t, mean_embedding);
    }
    let tag = match case {
        FedAvgCase::I => Algorithm::FedAvgCase1,
        FedAvgCase::II => Algorithm::FedAvgCase2,
    };
    Ok(d.finish(tag))
}

/// FedAvg with the embedding mean `ȳ = (1/K) Σ g_k(x_k)` shared every iteration.
pub fn run_modified_fedavg(
    problem: &CompositionalProblem,
    hp: &HyperParams,
    x0: &[f64],
    opts: &RunOptions,
) -> Result<FederatedRunResult> {
    let mut d = Driver::new(problem, hp, x0, vec![0.0; problem.dim_g()], opts)?;
    let y0 = problem.inner_unchecked(x0);
    d.start(&y0);

    for t in 0..d.horizon() {
        let eta = d.hp.eta[t];
        let ys: Vec<Vec<f64>> = (0..d.k()).map(|k| exact_g(problem, k, &d.states[k].x)).collect();
        let y_bar = d.share_embeddings(&ys);
        for k in 0..d.k() {
            let s = &mut d.states[k];
            s.x_prev.copy_from_slice(&s.x);
            local_step(problem, k, &mut s.x, &y_bar, eta);
            d.samples += exact_cost(problem, k);
        }
        if d.is_sync(t) {
            d.share_models(t);
        }
        d.end_iteration(t, |d| {
            let ys: Vec<Vec<f64>> = (0..d.k()).map(|k| exact_g(problem, k, &d.states[k].x)).collect();
            let refs: Vec<&[f64]> = ys.iter().map(|y| y.as_slice()).collect();
            super::aggregate_mean(&refs).expect("one embedding per client")
        });
    }
    Ok(d.finish(Algorithm::ModifiedFedAvg))
}
