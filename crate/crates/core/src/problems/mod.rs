//! Federated compositional objectives `Φ(x) = (1/K)Σ h_k(x) + f((1/K)Σ g_k(x))`.

mod clients;
mod dataset;
mod loss;
mod oracle;
mod outer;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use clients::{AffineClient, DatasetClient, LossTransform, NoisyQuadraticClient};
pub use dataset::{partition_dataset, ClientDataset, Dataset, PartitionScheme, SyntheticLogistic, LABEL_SKEW_RETRIES};
pub use loss::{sigmoid, softplus, LossFamily};
pub use oracle::{ClientOracle, Sample};
pub use outer::OuterMap;

use crate::error::{check_dim, Error, Result};
use crate::vector::{axpy, dist_sq, norm_sq};

/// Smoothness, Lipschitz, variance and heterogeneity constants of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LipschitzConstants {
    pub l_f: f64,
    pub l_h: f64,
    pub l_g: f64,
    pub b_f: f64,
    pub b_g: f64,
    pub sigma_h: f64,
    pub sigma_g: f64,
    pub delta_h: f64,
    pub delta_g: f64,
}

impl LipschitzConstants {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("L_f", self.l_f),
            ("L_h", self.l_h),
            ("L_g", self.l_g),
            ("B_f", self.b_f),
            ("B_g", self.b_g),
            ("sigma_h", self.sigma_h),
            ("sigma_g", self.sigma_g),
            ("Delta_h", self.delta_h),
            ("Delta_g", self.delta_g),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "constant {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CompositionalProblem {
    name: String,
    dim_x: usize,
    dim_g: usize,
    clients: Vec<Arc<dyn ClientOracle>>,
    outer: OuterMap,
    constants: LipschitzConstants,
}

impl CompositionalProblem {
    pub fn new(
        name: impl Into<String>,
        clients: Vec<Arc<dyn ClientOracle>>,
        outer: OuterMap,
        constants: LipschitzConstants,
    ) -> Result<Self> {
        let first = clients
            .first()
            .ok_or_else(|| Error::invalid("a problem needs at least one client"))?;
        let (dim_x, dim_g) = (first.dim_x(), first.dim_g());
        for c in &clients {
            check_dim("client dim_x", dim_x, c.dim_x())?;
            check_dim("client dim_g", dim_g, c.dim_g())?;
        }
        constants.validate()?;
        Ok(Self {
            name: name.into(),
            dim_x,
            dim_g,
            clients,
            outer,
            constants,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_g(&self) -> usize {
        self.dim_g
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn client(&self, k: usize) -> &dyn ClientOracle {
        self.clients[k].as_ref()
    }

    pub fn clients(&self) -> &[Arc<dyn ClientOracle>] {
        &self.clients
    }

    pub fn outer(&self) -> OuterMap {
        self.outer
    }

    pub fn constants(&self) -> &LipschitzConstants {
        &self.constants
    }

    /// Same objective with the client oracles replaced, e.g. by instrumented wrappers.
    pub fn with_clients(&self, clients: Vec<Arc<dyn ClientOracle>>) -> Result<Self> {
        Self::new(self.name.clone(), clients, self.outer, self.constants)
    }

    /// Exact inner mean `g(x) = (1/K)Σ g_k(x)`.
    pub fn inner(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("x", self.dim_x, x.len())?;
        Ok(self.inner_unchecked(x))
    }

    pub(crate) fn inner_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim_g];
        let mut buf = vec![0.0; self.dim_g];
        for c in &self.clients {
            c.g(x, &Sample::Exact, &mut buf);
            axpy(1.0, &buf, &mut acc);
        }
        crate::vector::scale(1.0 / self.clients.len() as f64, &mut acc);
        acc
    }
}

/// Exact `Φ(x)`.
pub fn eval_true_phi(problem: &CompositionalProblem, x: &[f64]) -> Result<f64> {
    check_dim("x", problem.dim_x, x.len())?;
    let k = problem.num_clients() as f64;
    let h: f64 = problem.clients.iter().map(|c| c.h(x, &Sample::Exact)).sum::<f64>() / k;
    Ok(h + problem.outer.value(&problem.inner_unchecked(x)))
}

/// Exact `∇Φ(x) = (1/K)Σ ∇h_k(x) + (1/K)Σ ∇g_k(x) · ∇f(g(x))`.
pub fn eval_true_grad_phi(problem: &CompositionalProblem, x: &[f64]) -> Result<Vec<f64>> {
    check_dim("x", problem.dim_x, x.len())?;
    Ok(grad_phi_unchecked(problem, x))
}

pub(crate) fn grad_phi_unchecked(problem: &CompositionalProblem, x: &[f64]) -> Vec<f64> {
    let w = problem.outer.grad(&problem.inner_unchecked(x));
    let scale = 1.0 / problem.num_clients() as f64;
    let mut grad = vec![0.0; problem.dim_x];
    for c in &problem.clients {
        c.add_grad_h(x, &Sample::Exact, scale, &mut grad);
        c.add_grad_g_dot(x, &Sample::Exact, &w, scale, &mut grad);
    }
    grad
}

/// The two-client scalar problem on which vanilla FedAvg provably stalls:
/// `g_1(x) = 4x - 4`, `g_2(x) = -2x + 4`, `f(y) = sqrt(y² + 4)`, `h ≡ 0`,
/// so that `Φ(x) = sqrt(x² + 4)` with minimizer 0.
pub fn build_counterexample() -> CompositionalProblem {
    let clients: Vec<Arc<dyn ClientOracle>> = vec![
        Arc::new(AffineClient::new(1, vec![4.0], vec![-4.0])),
        Arc::new(AffineClient::new(1, vec![-2.0], vec![4.0])),
    ];
    let constants = LipschitzConstants {
        l_f: 0.5,
        b_f: 1.0,
        b_g: 4.0,
        delta_g: 3.0,
        ..Default::default()
    };
    CompositionalProblem::new("counterexample", clients, OuterMap::SqrtShift { shift: 4.0 }, constants)
        .expect("counterexample is well formed")
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("lambda must be positive, got {lambda}")))
    }
}

fn check_shards(shards: &[ClientDataset]) -> Result<usize> {
    let first = shards
        .first()
        .ok_or_else(|| Error::invalid("at least one client dataset is required"))?;
    let dim = first.data.dim();
    for (k, s) in shards.iter().enumerate() {
        if s.data.is_empty() {
            return Err(Error::invalid(format!("client {k} holds no samples")));
        }
        check_dim("client feature dimension", dim, s.data.dim())?;
    }
    Ok(dim)
}

fn check_radius(radius: f64) -> Result<()> {
    if radius >= 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "domain radius must be finite and >= 0, got {radius}"
        )))
    }
}

fn data_bounds(shards: &[ClientDataset], loss: LossFamily, radius: f64) -> loss::LossBounds {
    let a_max = shards.iter().map(|s| s.data.max_row_norm()).fold(0.0, f64::max);
    let y_max = shards.iter().map(|s| s.data.max_abs_label()).fold(0.0, f64::max);
    loss.bounds(a_max, y_max, radius)
}

fn dataset_clients(shards: &[ClientDataset], loss: LossFamily, transform: LossTransform) -> Vec<Arc<dyn ClientOracle>> {
    shards
        .iter()
        .map(|s| Arc::new(DatasetClient::new(s.clone(), loss, transform)) as Arc<dyn ClientOracle>)
        .collect()
}

/// KL-penalized DRO: `g_k(x)` is the local mean of `exp(ℓ/λ)` and `f(y) = λ ln y`,
/// so `Φ(x) = λ ln((1/m) Σ exp(ℓ_i/λ))`, the optimal value of the KL-penalized
/// inner maximization over sample weights. Minimizers coincide with the
/// unscaled `ln((1/m) Σ exp(ℓ_i/λ))` form.
///
/// Declared constants are conservative bounds over the ball of radius `radius`.
pub fn build_kl_dro(
    shards: &[ClientDataset],
    lambda: f64,
    loss: LossFamily,
    radius: f64,
) -> Result<CompositionalProblem> {
    check_lambda(lambda)?;
    check_shards(shards)?;
    check_radius(radius)?;
    let lb = data_bounds(shards, loss, radius);
    let e = (lb.value / lambda).exp();
    let b_g = e * lb.grad / lambda;
    // f = λ ln y on y >= 1 since losses are nonnegative.
    let constants = LipschitzConstants {
        l_f: lambda,
        b_f: lambda,
        l_h: 0.0,
        l_g: e * (lb.grad * lb.grad / (lambda * lambda) + lb.smooth / lambda),
        b_g,
        sigma_h: 0.0,
        sigma_g: (e - 1.0).max(b_g),
        delta_h: 0.0,
        delta_g: 2.0 * b_g,
    };
    CompositionalProblem::new(
        "kl-dro",
        dataset_clients(shards, loss, LossTransform::KlDual { lambda }),
        OuterMap::ScaledLog { scale: lambda },
        constants,
    )
}

/// Which χ²-DRO reformulation to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chi2Form {
    /// `h = -(1/2λ) mean(ℓ²)`, `f(y) = y²/(2λ)`, `g = mean(ℓ)`; evaluates to `-Var(ℓ)/(2λ)`.
    Printed,
    /// `h = mean(ℓ) + (1/2λ) mean(ℓ²)`, `f(y) = -y²/(2λ)`, `g = mean(ℓ)`; evaluates to
    /// `mean(ℓ) + Var(ℓ)/(2λ)`, the inner maximum whenever it is attained in the
    /// simplex interior.
    Interior,
}

pub fn build_chi2_dro(
    shards: &[ClientDataset],
    lambda: f64,
    loss: LossFamily,
    radius: f64,
    form: Chi2Form,
) -> Result<CompositionalProblem> {
    check_lambda(lambda)?;
    check_shards(shards)?;
    check_radius(radius)?;
    let lb = data_bounds(shards, loss, radius);
    let sq_smooth = (lb.grad * lb.grad + lb.value * lb.smooth) / lambda;
    let sq_grad = lb.value * lb.grad / lambda;
    let (transform, outer, l_h, sigma_h, name) = match form {
        Chi2Form::Printed => (
            LossTransform::Chi2Printed { lambda },
            OuterMap::Quadratic { coef: 1.0 / lambda },
            sq_smooth,
            sq_grad,
            "chi2-dro",
        ),
        Chi2Form::Interior => (
            LossTransform::Chi2Interior { lambda },
            OuterMap::Quadratic { coef: -1.0 / lambda },
            lb.smooth + sq_smooth,
            lb.grad + sq_grad,
            "chi2-dro-interior",
        ),
    };
    let constants = LipschitzConstants {
        l_f: 1.0 / lambda,
        b_f: lb.value / lambda,
        l_h,
        l_g: lb.smooth,
        b_g: lb.grad,
        sigma_h,
        sigma_g: lb.value.max(lb.grad),
        delta_h: 2.0 * sigma_h,
        delta_g: 2.0 * lb.grad,
    };
    CompositionalProblem::new(name, dataset_clients(shards, loss, transform), outer, constants)
}

/// Plain empirical risk `h_k = mean(ℓ)` with `f ≡ 0`; the non-compositional baseline.
pub fn build_erm(shards: &[ClientDataset], loss: LossFamily, radius: f64) -> Result<CompositionalProblem> {
    check_shards(shards)?;
    check_radius(radius)?;
    let lb = data_bounds(shards, loss, radius);
    let constants = LipschitzConstants {
        l_h: lb.smooth,
        sigma_h: lb.grad,
        delta_h: 2.0 * lb.grad,
        ..Default::default()
    };
    CompositionalProblem::new(
        "erm",
        dataset_clients(shards, loss, LossTransform::Erm),
        OuterMap::Zero,
        constants,
    )
}

/// Heterogeneous stochastic quadratic family used for rate and drift experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    pub clients: usize,
    pub dim: usize,
    #[serde(default = "one")]
    pub curvature: f64,
    /// Scale of the spread of client centers, slopes and intercepts.
    #[serde(default)]
    pub heterogeneity: f64,
    #[serde(default)]
    pub sigma_h: f64,
    #[serde(default)]
    pub sigma_g: f64,
    /// When false the outer map is zero and only `h` is minimized.
    #[serde(default = "yes")]
    pub composite: bool,
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl Default for QuadraticSpec {
    fn default() -> Self {
        Self {
            clients: 1,
            dim: 1,
            curvature: 1.0,
            heterogeneity: 0.0,
            sigma_h: 0.0,
            sigma_g: 0.0,
            composite: true,
            radius: 1.0,
            seed: 0,
        }
    }
}

/// Client `k` gets `h_k = μ/2 |x - c_k|²` and `g_k = a_kᵀx + b_k` (plus noise), with
/// `c_k`, `a_k - a`, `b_k` spread by `heterogeneity`, around the common slope
/// `a = (1/√d, …, 1/√d)`; `f(y) = y²/2` when `composite`.
pub fn build_quadratic(spec: &QuadraticSpec) -> Result<CompositionalProblem> {
    if spec.clients == 0 || spec.dim == 0 {
        return Err(Error::invalid("quadratic problem needs clients >= 1 and dim >= 1"));
    }
    for (name, v) in [
        ("curvature", spec.curvature),
        ("heterogeneity", spec.heterogeneity),
        ("sigma_h", spec.sigma_h),
        ("sigma_g", spec.sigma_g),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    check_radius(spec.radius)?;
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = |scale: f64| -> f64 { scale * rng.sample::<f64, _>(StandardNormal) };
    let base = 1.0 / (d as f64).sqrt();
    let het = spec.heterogeneity;
    let clients: Vec<NoisyQuadraticClient> = (0..spec.clients)
        .map(|_| NoisyQuadraticClient {
            center: (0..d).map(|_| normal(het)).collect(),
            curvature: spec.curvature,
            slope: (0..d).map(|_| base + normal(0.5 * het * base)).collect(),
            intercept: normal(het),
            sigma_h: spec.sigma_h,
            sigma_g: spec.sigma_g,
        })
        .collect();

    let k = clients.len() as f64;
    let mean_of = |f: &dyn Fn(&NoisyQuadraticClient) -> &Vec<f64>| -> Vec<f64> {
        let mut m = vec![0.0; d];
        for c in &clients {
            axpy(1.0 / k, f(c), &mut m);
        }
        m
    };
    let center_mean = mean_of(&|c| &c.center);
    let slope_mean = mean_of(&|c| &c.slope);
    let max_dev = |f: &dyn Fn(&NoisyQuadraticClient) -> &Vec<f64>, m: &[f64]| {
        clients.iter().map(|c| dist_sq(f(c), m).sqrt()).fold(0.0, f64::max)
    };
    let slope_max = clients.iter().map(|c| norm_sq(&c.slope)).fold(0.0, f64::max);
    let (l_f, b_f) = if spec.composite {
        let b = clients
            .iter()
            .map(|c| norm_sq(&c.slope).sqrt() * spec.radius + c.intercept.abs())
            .fold(0.0, f64::max);
        (1.0, b)
    } else {
        (0.0, 0.0)
    };
    let constants = LipschitzConstants {
        l_f,
        b_f,
        l_h: spec.curvature,
        l_g: 0.0,
        b_g: (slope_max + spec.sigma_g * spec.sigma_g).sqrt(),
        sigma_h: spec.sigma_h,
        sigma_g: spec.sigma_g,
        delta_h: spec.curvature * max_dev(&|c| &c.center, &center_mean),
        delta_g: max_dev(&|c| &c.slope, &slope_mean),
    };
    let outer = if spec.composite {
        OuterMap::Quadratic { coef: 1.0 }
    } else {
        OuterMap::Zero
    };
    let clients = clients
        .into_iter()
        .map(|c| Arc::new(c) as Arc<dyn ClientOracle>)
        .collect();
    CompositionalProblem::new("quadratic", clients, outer, constants)
}
