use serde::{Deserialize, Serialize};

/// Deterministic outer map `f: R^{d_g} -> R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OuterMap {
    /// `sqrt(|y|^2 + shift)`
    SqrtShift { shift: f64 },
    /// `scale * ln(y)`, scalar embedding only.
    ScaledLog { scale: f64 },
    /// `coef / 2 * |y|^2`
    Quadratic { coef: f64 },
    /// `f ≡ 0`; the problem reduces to plain minimization of `h`.
    Zero,
}

impl OuterMap {
    pub fn value(&self, y: &[f64]) -> f64 {
        match *self {
            OuterMap::SqrtShift { shift } => (crate::vector::norm_sq(y) + shift).sqrt(),
            OuterMap::ScaledLog { scale } => scale * y[0].ln(),
            OuterMap::Quadratic { coef } => 0.5 * coef * crate::vector::norm_sq(y),
            OuterMap::Zero => 0.0,
        }
    }

    pub fn grad(&self, y: &[f64]) -> Vec<f64> {
        match *self {
            OuterMap::SqrtShift { shift } => {
                let r = (crate::vector::norm_sq(y) + shift).sqrt();
                y.iter().map(|v| v / r).collect()
            }
            OuterMap::ScaledLog { scale } => {
                let mut g = vec![0.0; y.len()];
                g[0] = scale / y[0];
                g
            }
            OuterMap::Quadratic { coef } => y.iter().map(|v| coef * v).collect(),
            OuterMap::Zero => vec![0.0; y.len()],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, OuterMap::Zero) || matches!(self, OuterMap::Quadratic { coef } if *coef == 0.0)
    }
}
