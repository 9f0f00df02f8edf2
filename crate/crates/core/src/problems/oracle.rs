use std::fmt;

use rand::{Rng, RngCore};

/// One stochastic draw for a client oracle.
///
/// `Exact` evaluates the full-information local function (the mean over all
/// local samples for finite-sample clients, the noise-free value otherwise).
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Exact,
    Row(usize),
    Noise(Vec<f64>),
}

/// Sampling and exact oracle for one client's `h_k` and `g_k`.
///
/// Callers are responsible for dimension checks; implementations may assume
/// `x.len() == dim_x()` and `out`/`w` slices sized to match.
pub trait ClientOracle: Send + Sync + fmt::Debug {
    fn dim_x(&self) -> usize;
    fn dim_g(&self) -> usize;

    /// Local sample count for finite-sample clients, `None` for analytic ones.
    fn sample_count(&self) -> Option<usize>;

    fn draw_h(&self, rng: &mut dyn RngCore) -> Sample;
    fn draw_g(&self, rng: &mut dyn RngCore) -> Sample;

    fn h(&self, x: &[f64], s: &Sample) -> f64;
    /// `out += scale * ∇h_k(x; s)`
    fn add_grad_h(&self, x: &[f64], s: &Sample, scale: f64, out: &mut [f64]);

    /// `out = g_k(x; s)`
    fn g(&self, x: &[f64], s: &Sample, out: &mut [f64]);
    /// `out += scale * ∇g_k(x; s) · w` where `∇g_k` is the `dim_x × dim_g` Jacobian transpose.
    fn add_grad_g_dot(&self, x: &[f64], s: &Sample, w: &[f64], scale: f64, out: &mut [f64]);

    /// True when `h_k` is identically zero, which lets callers skip work.
    fn h_is_zero(&self) -> bool {
        false
    }

    /// Number of per-sample evaluations one exact call costs.
    fn exact_cost(&self) -> usize {
        self.sample_count().unwrap_or(1)
    }
}

pub(crate) fn draw_row(n: usize, rng: &mut dyn RngCore) -> Sample {
    Sample::Row(rng.random_range(0..n))
}
