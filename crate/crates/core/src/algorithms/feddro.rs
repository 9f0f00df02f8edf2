use super::{Algorithm, Driver, FederatedRunResult, HyperParams, RunOptions};
use crate::error::Result;
use crate::estimators::{batch_cost, draw_g_batch, draw_h_batch, momentum_update, phi_grad};
use crate::problems::CompositionalProblem;
use crate::vector::axpy;

/// Federated compositional optimization with a shared momentum embedding.
///
/// Each iteration every client refreshes its embedding with the hybrid
/// momentum update on a fresh `g` batch, the server averages the embeddings
/// and broadcasts `ȳ`, and every client takes one step along the chain-rule
/// gradient evaluated at `ȳ`. The same `g` batch serves both estimates.
/// Models are averaged every `I` iterations.
pub fn run_feddro(
    problem: &CompositionalProblem,
    hp: &HyperParams,
    x0: &[f64],
    opts: &RunOptions,
) -> Result<FederatedRunResult> {
    let mut d = Driver::new(problem, hp, x0, vec![0.0; problem.dim_g()], opts)?;
    let y0 = problem.inner_unchecked(x0);
    d.start(&y0);
    let outer = problem.outer();
    let batch = d.hp.batch;

    for t in 0..d.horizon() {
        let eta = d.hp.eta[t];
        let beta = if t == 0 { 1.0 } else { d.hp.beta[t] };
        let mut batches = Vec::with_capacity(d.k());
        let mut ys = Vec::with_capacity(d.k());
        for s in d.states.iter_mut() {
            let client = problem.client(s.id);
            let g_batch = draw_g_batch(client, batch.batch_g, &mut s.rng);
            let h_batch = if client.h_is_zero() {
                Vec::new()
            } else {
                draw_h_batch(client, batch.batch_h, &mut s.rng)
            };
            ys.push(momentum_update(client, &s.x, &s.x_prev, &s.y, beta, &g_batch));
            batches.push((g_batch, h_batch));
        }
        let y_bar = d.share_embeddings(&ys);
        let grad_f = outer.grad(&y_bar);
        for (s, (g_batch, h_batch)) in d.states.iter_mut().zip(&batches) {
            let client = problem.client(s.id);
            let grad = phi_grad(client, &grad_f, &s.x, h_batch, g_batch);
            s.x_prev.copy_from_slice(&s.x);
            axpy(-eta, &grad, &mut s.x);
            d.samples += (batch_cost(client, g_batch) + batch_cost(client, h_batch)) as u64;
        }
        if d.is_sync(t) {
            d.share_models(t);
        }
        d.end_iteration(t, |d| d.states[0].y.clone());
    }
    Ok(d.finish(Algorithm::FedDro))
}
