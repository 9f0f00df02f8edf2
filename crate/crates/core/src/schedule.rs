//! Theory-derived hyperparameters and constants for FedDRO.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::LipschitzConstants;

/// Smoothness constant of `Φ`: `L_h + B_f L_g + B_g² L_f`.
pub fn compute_l_phi(c: &LipschitzConstants) -> Result<f64> {
    c.validate()?;
    Ok(c.l_h + c.b_f * c.l_g + c.b_g * c.b_g * c.l_f)
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::invalid(format!("{name} must be >= 1")))
    } else {
        Ok(())
    }
}

/// `η = sqrt(b K / T)`.
pub fn derive_stepsize(batch: usize, clients: usize, horizon: usize) -> Result<f64> {
    check_positive("batch size", batch)?;
    check_positive("client count", clients)?;
    check_positive("horizon", horizon)?;
    Ok(((batch * clients) as f64 / horizon as f64).sqrt())
}

/// Momentum parameter, possibly clamped to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beta {
    pub value: f64,
    /// Unclamped `c_β · η`.
    pub raw: f64,
    pub clamped: bool,
}

/// `β = min(1, 4 B_g⁴ L_f² η)`.
pub fn derive_beta(c: &LipschitzConstants, eta: f64) -> Result<Beta> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("step size must be positive, got {eta}")));
    }
    c.validate()?;
    let raw = c_beta(c) * eta;
    let clamped = raw > 1.0;
    if clamped {
        warn!("momentum parameter {raw:.6} exceeds 1; clamped to 1");
    }
    Ok(Beta {
        value: raw.min(1.0),
        raw,
        clamped,
    })
}

fn c_beta(c: &LipschitzConstants) -> f64 {
    4.0 * c.b_g.powi(4) * c.l_f * c.l_f
}

/// The three lower bounds on `T` whose maximum is the horizon threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTerms {
    pub smoothness: f64,
    pub momentum: f64,
    pub local_updates: f64,
}

impl ThresholdTerms {
    pub fn max(&self) -> f64 {
        self.smoothness.max(self.momentum).max(self.local_updates)
    }
}

pub fn threshold_terms(
    c: &LipschitzConstants,
    batch: usize,
    clients: usize,
    local_period: usize,
) -> Result<ThresholdTerms> {
    check_positive("batch size", batch)?;
    check_positive("client count", clients)?;
    check_positive("local period", local_period)?;
    let l_phi = compute_l_phi(c)?;
    let bk = (batch * clients) as f64;
    let bg2 = c.b_g * c.b_g;
    let smooth_sq = c.l_h * c.l_h + c.b_f * c.b_f * c.l_g * c.l_g;
    let denom = c.l_h * c.l_h + 2.0 * c.b_f * c.b_f * c.l_g * c.l_g + 4.0 * bg2 * bg2 * c.l_f * c.l_f;
    if denom == 0.0 {
        return Err(Error::invalid(
            "degenerate constants: L_h, B_f L_g and B_g² L_f are all zero",
        ));
    }
    let i = local_period as f64;
    Ok(ThresholdTerms {
        smoothness: 4.0 * (l_phi * bk + 8.0 * bg2).powi(2) / bk,
        momentum: bg2 * bg2 * (96.0 * smooth_sq).powi(2) / (bk * denom * denom),
        local_updates: 216.0 * smooth_sq * i * i * bk,
    })
}

/// Minimum horizon `T_th` for the convergence guarantee.
pub fn compute_t_threshold(c: &LipschitzConstants, batch: usize, clients: usize, local_period: usize) -> Result<f64> {
    Ok(threshold_terms(c, batch, clients, local_period)?.max())
}

/// `max(1, floor(T^{1/4} / (bK)^{3/4}))`.
pub fn max_local_updates(horizon: usize, batch: usize, clients: usize) -> usize {
    let t = horizon.max(1) as f64;
    let bk = (batch.max(1) * clients.max(1)) as f64;
    // Nudge before flooring so exact powers (4096^{1/4} = 8) survive rounding.
    let v = t.powf(0.25) / bk.powf(0.75);
    ((v * (1.0 + 1e-12)).floor() as usize).max(1)
}

/// Which definition of `L̄_{f,g}` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LbarVariant {
    /// `10 L_h² + B_f² L_g² + 40 B_g⁴ L_f²`
    #[default]
    Printed,
    /// `10 L_h² + 20 B_f² L_g² + 40 B_g⁴ L_f²`, matching the coefficient pattern of the surrounding bounds.
    Doubled,
}

/// Constants appearing in the FedDRO rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub l_phi: f64,
    pub l_bar: f64,
    pub l_bar_variant: LbarVariant,
    pub c_beta: f64,
    #[serde(rename = "C_sigma_h")]
    pub c_sigma_h: f64,
    #[serde(rename = "C_sigma_g")]
    pub c_sigma_g: f64,
    #[serde(rename = "C_Delta_h")]
    pub c_delta_h: f64,
    #[serde(rename = "C_Delta_g")]
    pub c_delta_g: f64,
}

pub fn compute_theory_constants(c: &LipschitzConstants, variant: LbarVariant) -> Result<TheoryConstants> {
    let l_phi = compute_l_phi(c)?;
    let bf2 = c.b_f * c.b_f;
    let bg2 = c.b_g * c.b_g;
    let lg_coef = match variant {
        LbarVariant::Printed => 1.0,
        LbarVariant::Doubled => 20.0,
    };
    let l_bar = 10.0 * c.l_h * c.l_h + lg_coef * bf2 * c.l_g * c.l_g + 40.0 * bg2 * bg2 * c.l_f * c.l_f;
    let cb = c_beta(c);
    Ok(TheoryConstants {
        l_phi,
        l_bar,
        l_bar_variant: variant,
        c_beta: cb,
        c_sigma_h: 2.0 * l_bar + 4.0 * l_phi + 8.0 * bg2,
        c_sigma_g: 2.0 * bf2 * l_bar + 4.0 * l_phi * bf2 + 4.0 * cb * cb + 8.0 * bf2 * bg2,
        c_delta_h: 6.0 * l_bar + 96.0 * bg2,
        c_delta_g: 6.0 * bf2 * l_bar + 96.0 * bf2 * bg2,
    })
}

/// Full schedule report written into run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySchedule {
    pub eta: f64,
    pub beta: f64,
    pub beta_raw: f64,
    pub beta_clamped: bool,
    pub c_beta: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "T_th")]
    pub t_threshold: Option<f64>,
    /// Whether `T >= T_th` at the chosen local period.
    pub horizon_sufficient: Option<bool>,
    #[serde(rename = "I_max")]
    pub i_max: usize,
    pub batch: usize,
    #[serde(rename = "K")]
    pub clients: usize,
    pub constants: TheoryConstants,
    pub notes: Vec<String>,
}

/// Derives `η`, `β`, `I_max`, `T_th` and the rate constants for one configuration.
/// `local_period` defaults to `I_max` when not given.
pub fn theory_schedule(
    c: &LipschitzConstants,
    batch: usize,
    clients: usize,
    horizon: usize,
    local_period: Option<usize>,
    variant: LbarVariant,
) -> Result<TheorySchedule> {
    let eta = derive_stepsize(batch, clients, horizon)?;
    let beta = derive_beta(c, eta)?;
    let i_max = max_local_updates(horizon, batch, clients);
    let constants = compute_theory_constants(c, variant)?;
    let mut notes = vec![
        "L_bar printed as 10 L_h^2 + B_f^2 L_g^2 + 40 B_g^4 L_f^2; neighbouring bounds use 20 B_f^2 L_g^2 (see l_bar_variant)"
            .to_string(),
    ];
    let period = local_period.unwrap_or(i_max);
    let t_threshold = match compute_t_threshold(c, batch, clients, period) {
        Ok(t) => Some(t),
        Err(e) => {
            notes.push(format!("T_th unavailable: {e}"));
            None
        }
    };
    if beta.clamped {
        notes.push(format!("beta clamped from {} to 1", beta.raw));
    }
    Ok(TheorySchedule {
        eta,
        beta: beta.value,
        beta_raw: beta.raw,
        beta_clamped: beta.clamped,
        c_beta: constants.c_beta,
        horizon,
        t_threshold,
        horizon_sufficient: t_threshold.map(|t| horizon as f64 >= t),
        i_max,
        batch,
        clients,
        constants,
        notes,
    })
}
