//! The `verify` suite: oracle-backed checks with measured errors.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{brute_force_dro_value, centralized_gd_reference, finite_diff_grad, relative_error, Divergence};
use crate::algorithms::{run_feddro, HyperParams, RunOptions};
use crate::error::Result;
use crate::estimators::BatchSpec;
use crate::problems::{
    build_chi2_dro, build_counterexample, build_erm, build_kl_dro, build_quadratic, eval_true_grad_phi, eval_true_phi,
    AffineClient, Chi2Form, ClientDataset, ClientOracle, CompositionalProblem, LossFamily, PartitionScheme,
    QuadraticSpec, SyntheticLogistic,
};
use crate::vector::dot;

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-5;
pub const DUALITY_TOLERANCE: f64 = 1e-8;
pub const KKT_TOLERANCE: f64 = 1e-8;
pub const REDUCTION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub problem: String,
    pub passed: bool,
    /// Worst measured error over the check's test points.
    pub measured: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    pub gradient_points: usize,
    pub dro_points: usize,
    pub reduction_steps: usize,
    /// Only the deterministic counterexample checks.
    pub counterexample_only: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            gradient_points: 20,
            dro_points: 10,
            reduction_steps: 100,
            counterexample_only: false,
        }
    }
}

/// Uniform point in the Euclidean ball of the given radius.
pub fn random_ball_point(dim: usize, radius: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    for a in v.iter_mut() {
        *a *= r / norm;
    }
    v
}

/// Per-sample losses over all shards, in shard order.
pub fn shard_losses(shards: &[ClientDataset], loss: LossFamily, x: &[f64]) -> Vec<f64> {
    shards
        .iter()
        .flat_map(|s| (0..s.data.len()).map(move |i| loss.value(dot(s.data.row(i), x), s.data.label(i))))
        .collect()
}

/// Analytic vs central-difference gradient at `points` random points of the unit ball.
pub fn check_gradient(problem: &CompositionalProblem, points: usize, rng: &mut impl Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x = random_ball_point(problem.dim_x(), 1.0, rng);
        let analytic = eval_true_grad_phi(problem, &x)?;
        let numeric = finite_diff_grad(|z| eval_true_phi(problem, z).unwrap_or(f64::NAN), &x, FD_STEP)?;
        worst = worst.max(relative_error(&numeric, &analytic));
    }
    Ok(CheckResult {
        name: "gradient-consistency".into(),
        problem: problem.name().into(),
        passed: worst <= FD_TOLERANCE,
        measured: worst,
        tolerance: FD_TOLERANCE,
        detail: None,
    })
}

/// KL reformulation vs the direct maximization over sample weights.
/// Shards must have equal sizes so the client average is the sample average.
pub fn check_kl_duality(
    shards: &[ClientDataset],
    lambda: f64,
    loss: LossFamily,
    points: usize,
    rng: &mut impl Rng,
) -> Result<CheckResult> {
    let problem = build_kl_dro(shards, lambda, loss, 1.0)?;
    let mut worst: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for _ in 0..points {
        let x = random_ball_point(problem.dim_x(), 1.0, rng);
        let oracle = brute_force_dro_value(&shard_losses(shards, loss, &x), lambda, Divergence::Kl)?;
        worst = worst.max((eval_true_phi(&problem, &x)? - oracle.value).abs());
        worst_kkt = worst_kkt.max(oracle.kkt_residual);
    }
    Ok(CheckResult {
        name: "kl-duality".into(),
        problem: problem.name().into(),
        passed: worst <= DUALITY_TOLERANCE && worst_kkt <= 1e-10,
        measured: worst,
        tolerance: DUALITY_TOLERANCE,
        detail: Some(format!(
            "max first-order residual of the softmax maximizer {worst_kkt:.3e}"
        )),
    })
}

/// χ² reformulations vs the projected-gradient oracle.
///
/// Returns two checks. The printed form is expected to differ from the oracle
/// by exactly `mean(ℓ) + Var(ℓ)/λ` at points with an interior maximizer; the
/// measured error is the deviation from that predicted gap. The interior form
/// must match the oracle there and upper-bound it everywhere.
pub fn check_chi2(
    shards: &[ClientDataset],
    lambda: f64,
    loss: LossFamily,
    points: usize,
    rng: &mut impl Rng,
) -> Result<Vec<CheckResult>> {
    let printed = build_chi2_dro(shards, lambda, loss, 1.0, Chi2Form::Printed)?;
    let interior = build_chi2_dro(shards, lambda, loss, 1.0, Chi2Form::Interior)?;
    let mut gap_dev: f64 = 0.0;
    let mut interior_dev: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut boundary = 0usize;
    let mut gaps = Vec::with_capacity(points);
    for _ in 0..points {
        let x = random_ball_point(printed.dim_x(), 1.0, rng);
        let losses = shard_losses(shards, loss, &x);
        let oracle = brute_force_dro_value(&losses, lambda, Divergence::Chi2)?;
        worst_kkt = worst_kkt.max(oracle.kkt_residual);
        let m = losses.len() as f64;
        let mean = losses.iter().sum::<f64>() / m;
        let var = losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / m;
        let gap = oracle.value - eval_true_phi(&printed, &x)?;
        gaps.push(gap);
        let phi_int = eval_true_phi(&interior, &x)?;
        if oracle.maximizer.as_slice().iter().all(|p| *p > 0.0) {
            gap_dev = gap_dev.max((gap - (mean + var / lambda)).abs());
            interior_dev = interior_dev.max((phi_int - oracle.value).abs());
        } else {
            boundary += 1;
            // The interior value relaxes p >= 0, so it can only overshoot.
            interior_dev = interior_dev.max((oracle.value - phi_int).max(0.0));
        }
    }
    let summary = gaps.iter().map(|g| format!("{g:.6}")).collect::<Vec<_>>().join(", ");
    Ok(vec![
        CheckResult {
            name: "chi2-printed-gap".into(),
            problem: printed.name().into(),
            passed: gap_dev <= DUALITY_TOLERANCE && worst_kkt <= KKT_TOLERANCE,
            measured: gap_dev,
            tolerance: DUALITY_TOLERANCE,
            detail: Some(format!(
                "oracle minus printed objective at each point: [{summary}]; {boundary} boundary maximizers; max KKT residual {worst_kkt:.3e}"
            )),
        },
        CheckResult {
            name: "chi2-interior-equality".into(),
            problem: interior.name().into(),
            passed: interior_dev <= DUALITY_TOLERANCE && worst_kkt <= KKT_TOLERANCE,
            measured: interior_dev,
            tolerance: DUALITY_TOLERANCE,
            detail: None,
        },
    ])
}

/// FedDRO with one client, `I = 1`, full batches and `β ≡ 1` against plain gradient descent.
pub fn check_reduction(problem: &CompositionalProblem, eta: f64, steps: usize, x0: &[f64]) -> Result<CheckResult> {
    let hp = HyperParams::constant(eta, 1.0, 1, steps, BatchSpec::full(), problem.num_clients());
    let run = run_feddro(problem, &hp, x0, &RunOptions::default())?;
    let reference = centralized_gd_reference(problem, eta, steps, x0)?;
    let iterates = run.iterates.expect("iterates are stored by default");
    let worst = iterates
        .iter()
        .zip(&reference)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max);
    Ok(CheckResult {
        name: "feddro-gd-reduction".into(),
        problem: problem.name().into(),
        passed: problem.num_clients() == 1 && worst <= REDUCTION_TOLERANCE,
        measured: worst,
        tolerance: REDUCTION_TOLERANCE,
        detail: Some(format!("{steps} steps, eta = {eta}")),
    })
}

/// The counterexample with its two clients merged into one: `g(x) = x`, same `Φ`.
pub fn merged_counterexample() -> Result<CompositionalProblem> {
    let p = build_counterexample();
    let merged: Arc<dyn ClientOracle> = Arc::new(AffineClient::new(1, vec![1.0], vec![0.0]));
    p.with_clients(vec![merged])
}

fn dro_shards(seed: u64, clients: usize) -> Result<Vec<ClientDataset>> {
    let gen = SyntheticLogistic {
        n_total: 50,
        dim: 5,
        imbalance_ratio: 0.25,
        separation: 1.0,
        seed,
    };
    Ok(gen.generate_partitioned(clients, PartitionScheme::UniformShard)?.1)
}

/// Runs every oracle-backed check.
pub fn verify_suite(opts: &SuiteOptions) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();

    let counter = build_counterexample();
    checks.push(check_gradient(&counter, opts.gradient_points, &mut rng)?);
    checks.push(check_reduction(
        &merged_counterexample()?,
        0.1,
        opts.reduction_steps,
        &[0.5],
    )?);

    if !opts.counterexample_only {
        let shards = dro_shards(opts.seed, 2)?;
        let loss = LossFamily::Logistic;
        let quad = build_quadratic(&QuadraticSpec {
            clients: 4,
            dim: 5,
            heterogeneity: 0.5,
            sigma_h: 0.1,
            sigma_g: 0.1,
            seed: opts.seed,
            ..QuadraticSpec::default()
        })?;
        let problems = [
            build_kl_dro(&shards, 1.0, loss, 1.0)?,
            build_chi2_dro(&shards, 1.0, loss, 1.0, Chi2Form::Printed)?,
            build_chi2_dro(&shards, 1.0, loss, 1.0, Chi2Form::Interior)?,
            build_erm(&shards, loss, 1.0)?,
            quad,
        ];
        for p in &problems {
            checks.push(check_gradient(p, opts.gradient_points, &mut rng)?);
        }
        checks.push(check_kl_duality(&shards, 1.0, loss, opts.dro_points, &mut rng)?);
        checks.extend(check_chi2(&shards, 5.0, loss, opts.dro_points, &mut rng)?);

        let single_quad = build_quadratic(&QuadraticSpec {
            clients: 1,
            dim: 5,
            heterogeneity: 0.5,
            seed: opts.seed,
            ..QuadraticSpec::default()
        })?;
        checks.push(check_reduction(&single_quad, 0.1, opts.reduction_steps, &[0.5; 5])?);
        let single_kl = build_kl_dro(&dro_shards(opts.seed, 1)?, 1.0, loss, 1.0)?;
        checks.push(check_reduction(&single_kl, 0.5, opts.reduction_steps, &[0.0; 5])?);
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        seed: opts.seed,
        passed,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_suite_passes() {
        let r = verify_suite(&SuiteOptions {
            counterexample_only: true,
            ..SuiteOptions::default()
        })
        .unwrap();
        assert!(r.passed, "{r:#?}");
        assert_eq!(r.checks.len(), 2);
    }

    #[test]
    fn full_suite_passes() {
        let r = verify_suite(&SuiteOptions::default()).unwrap();
        let failed: Vec<_> = r.failures().collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }

    #[test]
    fn merged_counterexample_has_same_objective() {
        let a = build_counterexample();
        let b = merged_counterexample().unwrap();
        for x in [-1.0, 0.0, 0.5, 2.0] {
            assert_eq!(eval_true_phi(&a, &[x]).unwrap(), eval_true_phi(&b, &[x]).unwrap());
        }
    }

    #[test]
    fn ball_points_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1, 2, 7] {
            for _ in 0..50 {
                let x = random_ball_point(d, 1.0, &mut rng);
                assert!(x.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12);
            }
        }
    }
}
