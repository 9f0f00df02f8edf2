use serde::{Deserialize, Serialize};

/// Per-sample loss `ℓ(x; (a, y))` as a function of the margin `z = aᵀx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossFamily {
    /// Binary cross-entropy on labels in {0, 1}: `softplus(z) - y z`.
    Logistic,
    /// `(z - y)^2 / 2`
    Squared,
}

impl LossFamily {
    pub fn value(&self, z: f64, label: f64) -> f64 {
        match self {
            LossFamily::Logistic => softplus(z) - label * z,
            LossFamily::Squared => 0.5 * (z - label) * (z - label),
        }
    }

    /// dℓ/dz
    pub fn derivative(&self, z: f64, label: f64) -> f64 {
        match self {
            LossFamily::Logistic => sigmoid(z) - label,
            LossFamily::Squared => z - label,
        }
    }

    /// Upper bounds `(max ℓ, max |dℓ/dz| / |a|, max d²ℓ/dz² / |a|^2)` over `|z| <= a_max * radius`.
    pub(crate) fn bounds(&self, a_max: f64, y_max: f64, radius: f64) -> LossBounds {
        let z_max = a_max * radius;
        match self {
            LossFamily::Logistic => LossBounds {
                value: std::f64::consts::LN_2 + z_max * (1.0 + y_max),
                grad: a_max * (1.0 + y_max),
                smooth: 0.25 * a_max * a_max,
            },
            LossFamily::Squared => LossBounds {
                value: 0.5 * (z_max + y_max).powi(2),
                grad: a_max * (z_max + y_max),
                smooth: a_max * a_max,
            },
        }
    }
}

/// Conservative bounds on a loss family over a parameter ball.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LossBounds {
    pub value: f64,
    pub grad: f64,
    pub smooth: f64,
}

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_matches_naive_form() {
        for &(z, y) in &[(0.3, 1.0), (-2.0, 0.0), (5.0, 0.0), (-1.0, 1.0)] {
            let naive = -(y * sigmoid(z).ln() + (1.0 - y) * (1.0 - sigmoid(z)).ln());
            assert!((LossFamily::Logistic.value(z, y) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn softplus_is_stable_for_large_margins() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
    }

    #[test]
    fn derivatives_match_central_differences() {
        for loss in [LossFamily::Logistic, LossFamily::Squared] {
            for &(z, y) in &[(0.7, 1.0), (-1.3, 0.0), (2.0, 0.5)] {
                let h = 1e-6;
                let fd = (loss.value(z + h, y) - loss.value(z - h, y)) / (2.0 * h);
                assert!((fd - loss.derivative(z, y)).abs() < 1e-8, "{loss:?}");
            }
        }
    }
}
