use super::{Algorithm, Driver, FederatedRunResult, HyperParams, RunOptions};
use crate::error::{Error, Result};
use crate::estimators::{batch_cost, draw_h_batch, phi_grad};
use crate::problems::CompositionalProblem;
use crate::vector::axpy;

/// Local SGD on `h` alone with model averaging every `I` iterations.
pub fn run_parallel_sgd(
    problem: &CompositionalProblem,
    hp: &HyperParams,
    x0: &[f64],
    opts: &RunOptions,
) -> Result<FederatedRunResult> {
    if !problem.outer().is_constant() {
        return Err(Error::invalid(format!(
            "parallel SGD needs a constant outer function, but {} has a non-constant one",
            problem.name()
        )));
    }
    let mut d = Driver::new(problem, hp, x0, vec![0.0; problem.dim_g()], opts)?;
    let y0 = problem.inner_unchecked(x0);
    d.start(&y0);
    let zero = vec![0.0; problem.dim_g()];

    for t in 0..d.horizon() {
        let eta = d.hp.eta[t];
        let size = d.hp.batch.batch_h;
        for s in d.states.iter_mut() {
            let client = problem.client(s.id);
            let h_batch = draw_h_batch(client, size, &mut s.rng);
            let grad = phi_grad(client, &zero, &s.x, &h_batch, &h_batch);
            s.x_prev.copy_from_slice(&s.x);
            axpy(-eta, &grad, &mut s.x);
            d.samples += batch_cost(client, &h_batch) as u64;
        }
        if d.is_sync(t) {
            d.share_models(t);
        }
        d.end_iteration(t, |d| {
            let mean = crate::harness::trace::client_mean(&d.states);
            problem.inner_unchecked(&mean)
        });
    }
    Ok(d.finish(Algorithm::ParallelSgd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::BatchSpec;
    use crate::problems::{build_counterexample, build_quadratic, QuadraticSpec};
    use approx::assert_relative_eq;

    fn plain_quadratic() -> CompositionalProblem {
        build_quadratic(&QuadraticSpec {
            clients: 1,
            dim: 2,
            composite: false,
            ..QuadraticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn one_gradient_step() {
        let p = plain_quadratic();
        let hp = HyperParams::constant(0.1, 1.0, 1, 1, BatchSpec::full(), 1);
        let r = run_parallel_sgd(&p, &hp, &[1.0, 0.0], &RunOptions::default()).unwrap();
        assert_relative_eq!(r.final_mean[0], 0.9, epsilon = 1e-15);
        assert_relative_eq!(r.final_mean[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn period_equal_to_horizon_syncs_once() {
        let p = plain_quadratic();
        let hp = HyperParams::constant(0.1, 1.0, 7, 7, BatchSpec::full(), 1);
        let r = run_parallel_sgd(&p, &hp, &[1.0, 0.0], &RunOptions::default()).unwrap();
        assert_eq!(r.sync_points.len(), 1);
        assert_eq!(r.sync_points[0].t, 7);
    }

    #[test]
    fn zero_step_and_rejection() {
        let p = plain_quadratic();
        let hp = HyperParams::constant(0.0, 1.0, 2, 5, BatchSpec::full(), 1);
        let r = run_parallel_sgd(&p, &hp, &[1.0, 2.0], &RunOptions::default()).unwrap();
        assert!(r.iterates.unwrap().iter().all(|x| x == &[1.0, 2.0]));
        let hp2 = HyperParams::constant(0.1, 1.0, 2, 5, BatchSpec::full(), 2);
        assert!(run_parallel_sgd(&build_counterexample(), &hp2, &[0.5], &RunOptions::default()).is_err());
    }
}
