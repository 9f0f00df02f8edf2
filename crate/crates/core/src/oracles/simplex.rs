use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    p: Vec<f64>,
}

impl SimplexPoint {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("simplex point must have at least one coordinate"));
        }
        if let Some(v) = p.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::invalid(format!("simplex coordinates must be >= 0, got {v}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::invalid(format!("simplex coordinates sum to {sum}, not 1")));
        }
        Ok(Self { p })
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            p: vec![1.0 / m as f64; m],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.p
    }
}

/// Euclidean projection onto `{p : Σ pᵢ = 1, pᵢ ≥ 0}` by the sort-and-threshold method.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|vi| (vi - theta).max(0.0)).collect()
}

/// Penalty used in the inner maximization over sample weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Divergence {
    /// `Σ pᵢ ln(m pᵢ)`
    Kl,
    /// `(m/2) Σ (pᵢ - 1/m)²`
    Chi2,
}

impl Divergence {
    pub fn value(&self, p: &[f64]) -> f64 {
        let m = p.len() as f64;
        match self {
            Divergence::Kl => p.iter().filter(|v| **v > 0.0).map(|v| v * (m * v).ln()).sum(),
            Divergence::Chi2 => 0.5 * m * p.iter().map(|v| (v - 1.0 / m) * (v - 1.0 / m)).sum::<f64>(),
        }
    }
}

/// `Σ pᵢ ℓᵢ - λ D(p, 1/m)`.
pub fn dro_objective(losses: &[f64], lambda: f64, divergence: Divergence, p: &[f64]) -> f64 {
    let linear: f64 = p.iter().zip(losses).map(|(a, b)| a * b).sum();
    linear - lambda * divergence.value(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroSolution {
    pub value: f64,
    pub maximizer: SimplexPoint,
    /// First-order optimality residual of the maximizer (see [`brute_force_dro_value`]).
    pub kkt_residual: f64,
    pub iterations: usize,
}

const PGA_TOLERANCE: f64 = 1e-10;
const PGA_MAX_ITER: usize = 100_000;

/// Maximizes `Σ pᵢ ℓᵢ - λ D(p, 1/m)` over the simplex.
///
/// KL has the closed-form softmax maximizer. χ² runs projected gradient
/// ascent from the uniform point with step `1/(λm)` (the objective is
/// `λm`-strongly concave) until the gradient mapping falls below 1e-10.
///
/// `kkt_residual` is `max_{pᵢ>0} (max_j ∇_j - ∇ᵢ)`: zero exactly when every
/// support coordinate attains the largest partial derivative, which together
/// with concavity certifies global optimality. For KL the support is full and
/// the residual measures how far `ℓᵢ - λ ln(m pᵢ)` is from constant.
pub fn brute_force_dro_value(losses: &[f64], lambda: f64, divergence: Divergence) -> Result<DroSolution> {
    if losses.is_empty() {
        return Err(Error::invalid("need at least one loss value"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numerical("non-finite loss value".into()));
    }
    let m = losses.len();
    match divergence {
        Divergence::Kl => {
            let top = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = losses.iter().map(|l| ((l - top) / lambda).exp()).collect();
            let total: f64 = w.iter().sum();
            let value = top + lambda * (total / m as f64).ln();
            let p: Vec<f64> = w.iter().map(|v| v / total).collect();
            let grad: Vec<f64> = p
                .iter()
                .zip(losses)
                .map(|(pi, l)| l - lambda * (m as f64 * pi).ln())
                .collect();
            let kkt_residual = support_residual(&p, &grad);
            Ok(DroSolution {
                value,
                maximizer: normalized(p),
                kkt_residual,
                iterations: 0,
            })
        }
        Divergence::Chi2 => {
            let mf = m as f64;
            let step = 1.0 / (lambda * mf);
            let grad_at = |p: &[f64]| -> Vec<f64> {
                p.iter()
                    .zip(losses)
                    .map(|(pi, l)| l - lambda * mf * (pi - 1.0 / mf))
                    .collect()
            };
            let mut p = vec![1.0 / mf; m];
            let mut iterations = 0;
            loop {
                let g = grad_at(&p);
                let trial: Vec<f64> = p.iter().zip(&g).map(|(pi, gi)| pi + step * gi).collect();
                let next = project_simplex(&trial);
                let mapping = next.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / step;
                p = next;
                iterations += 1;
                if mapping <= PGA_TOLERANCE {
                    break;
                }
                if iterations >= PGA_MAX_ITER {
                    return Err(Error::Numerical(format!(
                        "projected gradient ascent did not converge in {PGA_MAX_ITER} iterations (mapping norm {mapping:e})"
                    )));
                }
            }
            let kkt_residual = support_residual(&p, &grad_at(&p));
            let value = dro_objective(losses, lambda, Divergence::Chi2, &p);
            Ok(DroSolution {
                value,
                maximizer: normalized(p),
                kkt_residual,
                iterations,
            })
        }
    }
}

fn support_residual(p: &[f64], grad: &[f64]) -> f64 {
    let top = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    p.iter()
        .zip(grad)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(_, g)| top - g)
        .fold(0.0, f64::max)
}

// Rounding can leave the sum a few ulps off 1.
fn normalized(mut p: Vec<f64>) -> SimplexPoint {
    let s: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= s;
    }
    SimplexPoint { p }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn equal_losses_give_uniform() {
        for div in [Divergence::Kl, Divergence::Chi2] {
            let s = brute_force_dro_value(&[0.8; 5], 0.3, div).unwrap();
            assert_relative_eq!(s.value, 0.8, epsilon = 1e-12);
            for v in s.maximizer.as_slice() {
                assert_relative_eq!(*v, 0.2, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn kl_softmax_value() {
        let s = brute_force_dro_value(&[1.0, 2.0, 3.0], 1.0, Divergence::Kl).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(s.value, ((e + e * e + e * e * e) / 3.0).ln(), epsilon = 1e-14);
        assert!(s.kkt_residual <= 1e-10);
        // The closed form equals the penalized objective at its maximizer.
        let direct = dro_objective(&[1.0, 2.0, 3.0], 1.0, Divergence::Kl, s.maximizer.as_slice());
        assert_relative_eq!(direct, s.value, epsilon = 1e-12);
    }

    #[test]
    fn kl_survives_large_losses() {
        let s = brute_force_dro_value(&[800.0, 801.0], 0.5, Divergence::Kl).unwrap();
        assert!(s.value.is_finite());
        assert!(s.value > 800.0 && s.value < 801.0);
    }

    #[test]
    fn chi2_boundary_solution() {
        let s = brute_force_dro_value(&[0.0, 2.0], 1.0, Divergence::Chi2).unwrap();
        assert_relative_eq!(s.value, 1.5, epsilon = 1e-12);
        assert_relative_eq!(s.maximizer.as_slice()[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.maximizer.as_slice()[1], 1.0, epsilon = 1e-12);
        assert!(s.kkt_residual <= 1e-8);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(brute_force_dro_value(&[], 1.0, Divergence::Kl).is_err());
        assert!(brute_force_dro_value(&[1.0], 0.0, Divergence::Chi2).is_err());
        assert!(brute_force_dro_value(&[f64::NAN], 1.0, Divergence::Kl).is_err());
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexPoint::new(vec![0.25; 4]).is_ok());
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(v in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            let p = project_simplex(&v);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // Idempotent on its own output.
            let q = project_simplex(&p);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn chi2_solution_is_certified(
            losses in prop::collection::vec(0.0f64..3.0, 1..12),
            lambda in 0.05f64..5.0,
        ) {
            let s = brute_force_dro_value(&losses, lambda, Divergence::Chi2).unwrap();
            prop_assert!(s.kkt_residual <= 1e-8);
            // Never below the uniform-weights value, never above the largest loss.
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            let top = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.value >= mean - 1e-12 && s.value <= top + 1e-12);
        }

        #[test]
        fn kl_duality(losses in prop::collection::vec(0.0f64..3.0, 1..12), lambda in 0.05f64..5.0) {
            let s = brute_force_dro_value(&losses, lambda, Divergence::Kl).unwrap();
            let direct = dro_objective(&losses, lambda, Divergence::Kl, s.maximizer.as_slice());
            prop_assert!((direct - s.value).abs() <= 1e-8);
            prop_assert!(s.kkt_residual <= 1e-10 * (1.0 + lambda));
        }
    }
}
