//! Concrete client oracles.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::ClientDataset;
use super::loss::LossFamily;
use super::oracle::{draw_row, ClientOracle, Sample};
use crate::vector::{axpy, dot};

/// Deterministic affine embedding `g_k(x) = W x + b` with `h_k ≡ 0`.
#[derive(Debug, Clone)]
pub struct AffineClient {
    dim_x: usize,
    /// `dim_g × dim_x`, row-major.
    weights: Vec<f64>,
    offset: Vec<f64>,
}

impl AffineClient {
    pub fn new(dim_x: usize, weights: Vec<f64>, offset: Vec<f64>) -> Self {
        assert_eq!(weights.len(), dim_x * offset.len());
        Self { dim_x, weights, offset }
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.dim_x..(j + 1) * self.dim_x]
    }
}

impl ClientOracle for AffineClient {
    fn dim_x(&self) -> usize {
        self.dim_x
    }

    fn dim_g(&self) -> usize {
        self.offset.len()
    }

    fn sample_count(&self) -> Option<usize> {
        None
    }

    fn draw_h(&self, _rng: &mut dyn RngCore) -> Sample {
        Sample::Exact
    }

    fn draw_g(&self, _rng: &mut dyn RngCore) -> Sample {
        Sample::Exact
    }

    fn h(&self, _x: &[f64], _s: &Sample) -> f64 {
        0.0
    }

    fn add_grad_h(&self, _x: &[f64], _s: &Sample, _scale: f64, _out: &mut [f64]) {}

    fn g(&self, x: &[f64], _s: &Sample, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(j), x) + self.offset[j];
        }
    }

    fn add_grad_g_dot(&self, _x: &[f64], _s: &Sample, w: &[f64], scale: f64, out: &mut [f64]) {
        for (j, wj) in w.iter().enumerate() {
            axpy(scale * wj, self.row(j), out);
        }
    }

    fn h_is_zero(&self) -> bool {
        true
    }
}

/// How per-sample losses are mapped into `(h_k, g_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum LossTransform {
    /// `h ≡ 0`, `g = exp(ℓ/λ)`
    KlDual { lambda: f64 },
    /// `g = ℓ`, `h = -ℓ²/(2λ)`
    Chi2Printed { lambda: f64 },
    /// `g = ℓ`, `h = ℓ + ℓ²/(2λ)`
    Chi2Interior { lambda: f64 },
    /// `g ≡ 0`, `h = ℓ`
    Erm,
}

/// Finite-sample client whose oracles are built from a per-sample loss.
#[derive(Debug, Clone)]
pub struct DatasetClient {
    shard: ClientDataset,
    loss: LossFamily,
    transform: LossTransform,
}

impl DatasetClient {
    pub fn new(shard: ClientDataset, loss: LossFamily, transform: LossTransform) -> Self {
        assert!(!shard.data.is_empty());
        Self { shard, loss, transform }
    }

    pub fn shard(&self) -> &ClientDataset {
        &self.shard
    }

    fn n(&self) -> usize {
        self.shard.data.len()
    }

    /// `(ℓ, dℓ/dz)` for row `i`.
    fn loss_at(&self, x: &[f64], i: usize) -> (f64, f64) {
        let data = &self.shard.data;
        let z = dot(data.row(i), x);
        let y = data.label(i);
        (self.loss.value(z, y), self.loss.derivative(z, y))
    }

    /// Per-row losses at `x`.
    pub fn losses(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.loss_at(x, i).0).collect()
    }

    fn rows(&self, s: &Sample) -> RowIter {
        match s {
            Sample::Row(i) => RowIter::One(Some(*i)),
            Sample::Exact => RowIter::All(0..self.n()),
            Sample::Noise(_) => panic!("dataset client received a noise sample"),
        }
    }

    fn weight(&self, s: &Sample) -> f64 {
        match s {
            Sample::Exact => 1.0 / self.n() as f64,
            _ => 1.0,
        }
    }

    fn h_row(&self, x: &[f64], i: usize) -> f64 {
        let (l, _) = self.loss_at(x, i);
        match self.transform {
            LossTransform::KlDual { .. } => 0.0,
            LossTransform::Chi2Printed { lambda } => -l * l / (2.0 * lambda),
            LossTransform::Chi2Interior { lambda } => l + l * l / (2.0 * lambda),
            LossTransform::Erm => l,
        }
    }

    /// dh/dz for row `i`.
    fn h_slope(&self, x: &[f64], i: usize) -> f64 {
        let (l, dl) = self.loss_at(x, i);
        match self.transform {
            LossTransform::KlDual { .. } => 0.0,
            LossTransform::Chi2Printed { lambda } => -l * dl / lambda,
            LossTransform::Chi2Interior { lambda } => dl + l * dl / lambda,
            LossTransform::Erm => dl,
        }
    }

    /// `(g, dg/dz)` for row `i`.
    fn g_row(&self, x: &[f64], i: usize) -> (f64, f64) {
        let (l, dl) = self.loss_at(x, i);
        match self.transform {
            LossTransform::KlDual { lambda } => {
                let e = (l / lambda).exp();
                (e, e * dl / lambda)
            }
            LossTransform::Chi2Printed { .. } | LossTransform::Chi2Interior { .. } => (l, dl),
            LossTransform::Erm => (0.0, 0.0),
        }
    }
}

enum RowIter {
    One(Option<usize>),
    All(std::ops::Range<usize>),
}

impl Iterator for RowIter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match self {
            RowIter::One(i) => i.take(),
            RowIter::All(r) => r.next(),
        }
    }
}

impl ClientOracle for DatasetClient {
    fn dim_x(&self) -> usize {
        self.shard.data.dim()
    }

    fn dim_g(&self) -> usize {
        1
    }

    fn sample_count(&self) -> Option<usize> {
        Some(self.n())
    }

    fn draw_h(&self, rng: &mut dyn RngCore) -> Sample {
        draw_row(self.n(), rng)
    }

    fn draw_g(&self, rng: &mut dyn RngCore) -> Sample {
        draw_row(self.n(), rng)
    }

    fn h(&self, x: &[f64], s: &Sample) -> f64 {
        let w = self.weight(s);
        self.rows(s).map(|i| w * self.h_row(x, i)).sum()
    }

    fn add_grad_h(&self, x: &[f64], s: &Sample, scale: f64, out: &mut [f64]) {
        if self.h_is_zero() {
            return;
        }
        let w = scale * self.weight(s);
        for i in self.rows(s) {
            axpy(w * self.h_slope(x, i), self.shard.data.row(i), out);
        }
    }

    fn g(&self, x: &[f64], s: &Sample, out: &mut [f64]) {
        let w = self.weight(s);
        out[0] = self.rows(s).map(|i| w * self.g_row(x, i).0).sum();
    }

    fn add_grad_g_dot(&self, x: &[f64], s: &Sample, w: &[f64], scale: f64, out: &mut [f64]) {
        if matches!(self.transform, LossTransform::Erm) {
            return;
        }
        let c = scale * self.weight(s) * w[0];
        for i in self.rows(s) {
            axpy(c * self.g_row(x, i).1, self.shard.data.row(i), out);
        }
    }

    fn h_is_zero(&self) -> bool {
        matches!(self.transform, LossTransform::KlDual { .. })
    }
}

/// Analytic stochastic quadratic client with a scalar linear embedding:
///
/// `h_k(x; ξ) = μ/2 |x - c_k|² + ξᵀx`, `ξ ~ N(0, σ_h²/d · I)`
/// `g_k(x; ζ) = (a_k + ζ_a)ᵀx + b_k + ζ_b`, `ζ_a ~ N(0, σ_g²/d · I)`, `ζ_b ~ N(0, σ_g²)`
#[derive(Debug, Clone)]
pub struct NoisyQuadraticClient {
    pub center: Vec<f64>,
    pub curvature: f64,
    pub slope: Vec<f64>,
    pub intercept: f64,
    pub sigma_h: f64,
    pub sigma_g: f64,
}

impl NoisyQuadraticClient {
    fn dim(&self) -> usize {
        self.center.len()
    }
}

impl ClientOracle for NoisyQuadraticClient {
    fn dim_x(&self) -> usize {
        self.dim()
    }

    fn dim_g(&self) -> usize {
        1
    }

    fn sample_count(&self) -> Option<usize> {
        None
    }

    fn draw_h(&self, rng: &mut dyn RngCore) -> Sample {
        if self.sigma_h == 0.0 {
            return Sample::Exact;
        }
        let s = self.sigma_h / (self.dim() as f64).sqrt();
        Sample::Noise(
            (0..self.dim())
                .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    }

    fn draw_g(&self, rng: &mut dyn RngCore) -> Sample {
        if self.sigma_g == 0.0 {
            return Sample::Exact;
        }
        let s = self.sigma_g / (self.dim() as f64).sqrt();
        let mut noise: Vec<f64> = (0..self.dim())
            .map(|_| s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        noise.push(self.sigma_g * rng.sample::<f64, _>(StandardNormal));
        Sample::Noise(noise)
    }

    fn h(&self, x: &[f64], s: &Sample) -> f64 {
        let base = 0.5 * self.curvature * crate::vector::dist_sq(x, &self.center);
        match s {
            Sample::Noise(xi) => base + dot(xi, x),
            _ => base,
        }
    }

    fn add_grad_h(&self, x: &[f64], s: &Sample, scale: f64, out: &mut [f64]) {
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(&self.center) {
            *o += scale * self.curvature * (xi - ci);
        }
        if let Sample::Noise(xi) = s {
            axpy(scale, xi, out);
        }
    }

    fn g(&self, x: &[f64], s: &Sample, out: &mut [f64]) {
        out[0] = dot(&self.slope, x) + self.intercept;
        if let Sample::Noise(z) = s {
            let d = self.dim();
            out[0] += dot(&z[..d], x) + z[d];
        }
    }

    fn add_grad_g_dot(&self, _x: &[f64], s: &Sample, w: &[f64], scale: f64, out: &mut [f64]) {
        axpy(scale * w[0], &self.slope, out);
        if let Sample::Noise(z) = s {
            axpy(scale * w[0], &z[..self.dim()], out);
        }
    }
}
