//! Independent verification oracles.
//!
//! Nothing here shares code paths with the algorithms it checks beyond the
//! exact `Φ`/`∇Φ` evaluation: gradients are checked by central differences,
//! DRO reformulations against a direct maximization over sample weights, and
//! FedDRO against a plain gradient-descent loop.

mod simplex;
mod suite;

pub use simplex::{brute_force_dro_value, dro_objective, project_simplex, Divergence, DroSolution, SimplexPoint};
pub use suite::{merged_counterexample, random_ball_point, verify_suite, CheckResult, SuiteOptions, VerifyReport};

use crate::error::{check_dim, Error, Result};
use crate::problems::{eval_true_grad_phi, CompositionalProblem};

/// Central differences `(f(x + h eᵢ) - f(x - h eᵢ)) / 2h`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite function value while differencing coordinate {i}"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// `‖a - b‖ / max(1, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}

/// Plain gradient descent on the exact objective: `x_{t+1} = x_t - η ∇Φ(x_t)`.
/// Returns `T + 1` iterates starting with `x0`.
pub fn centralized_gd_reference(
    problem: &CompositionalProblem,
    eta: f64,
    horizon: usize,
    x0: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_dim("x0", problem.dim_x(), x0.len())?;
    let mut iterates = Vec::with_capacity(horizon + 1);
    let mut x = x0.to_vec();
    iterates.push(x.clone());
    for _ in 0..horizon {
        let g = eval_true_grad_phi(problem, &x)?;
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= eta * gi;
        }
        iterates.push(x.clone());
    }
    Ok(iterates)
}
