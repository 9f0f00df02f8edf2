//! Acceptance criteria A1–A9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use feddro::algorithms::{
    run_feddro, run_modified_fedavg, run_vanilla_fedavg, FedAvgCase, FederatedRunResult, HyperParams, RunOptions,
};
use feddro::estimators::BatchSpec;
use feddro::harness::{run_experiment, RunConfig, TRACE_FILE};
use feddro::oracles::{brute_force_dro_value, centralized_gd_reference, merged_counterexample, Divergence};
use feddro::problems::{
    build_chi2_dro, build_counterexample, build_erm, build_kl_dro, build_quadratic, eval_true_grad_phi, eval_true_phi,
    Chi2Form, ClientDataset, CompositionalProblem, LossFamily, PartitionScheme, QuadraticSpec, SyntheticLogistic,
};
use feddro::schedule::{theory_schedule, LbarVariant};

type Criterion<'a> = (&'a str, &'a str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// Closed-form derivative of `√(x² + 4)`.
fn counterexample_slope(x: f64) -> f64 {
    x / (x * x + 4.0).sqrt()
}

fn quiet() -> RunOptions {
    RunOptions {
        seed: 0,
        cadence: 1,
        store_iterates: false,
    }
}

// A1: vanilla FedAvg stalls on the counterexample.
fn a1() -> Outcome {
    let started = Instant::now();
    let p = build_counterexample();
    let mut failures = Vec::new();
    let mut worst_min = f64::INFINITY;
    let mut smallest_grad = f64::INFINITY;
    for eta in [0.005, 0.01, 0.02, 0.04] {
        for case in [FedAvgCase::I, FedAvgCase::II] {
            let hp = HyperParams::constant(eta, 1.0, 2, 5000, BatchSpec::full(), 2);
            let r = run_vanilla_fedavg(&p, &hp, case, &[0.5], &quiet()).unwrap();
            let min_sync = r.sync_points.iter().map(|s| s.mean[0]).fold(f64::INFINITY, f64::min);
            let x_t = r.final_mean[0];
            let grad_sq = counterexample_slope(x_t).powi(2);
            worst_min = worst_min.min(min_sync);
            smallest_grad = smallest_grad.min(grad_sq);
            if min_sync < 0.5 {
                failures.push(format!("{case:?} eta={eta}: min sync x = {min_sync}"));
            }
            if grad_sq < 0.04 {
                failures.push(format!("{case:?} eta={eta}: final |grad|^2 = {grad_sq}"));
            }
            if eta >= 0.02 && x_t < 1.0 {
                failures.push(format!("{case:?} eta={eta}: final x = {x_t}"));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 1.0 {
        failures.push(format!("runtime {secs:.2}s"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "min sync x = {worst_min:.4} (>= 0.5), min final |grad|^2 = {smallest_grad:.4} (>= 0.04), {secs:.2}s {}",
            failures.join("; ")
        ),
    )
}

const A2_FEDDRO: &str = r#"
algorithm = "feddro"
seed = 11
x0 = [0.5]
cadence = 10

[problem]
kind = "counterexample"

[hyper]
mode = "theory"
horizon = 10000
local_period = 10
batch_h = "full"
batch_g = "full"
eta_scale = 0.7071067811865476
"#;

// A2: modified FedAvg and FedDRO converge on the counterexample.
fn a2() -> Outcome {
    let started = Instant::now();
    let horizon = 10_000usize;
    let period = (horizon as f64).powf(0.25).floor() as usize;
    let cfg = RunConfig::from_toml(A2_FEDDRO).unwrap();
    let feddro = run_experiment(&cfg, None).unwrap();
    let eta = feddro.meta.hyper.eta;
    let sched = feddro.meta.schedule.clone().unwrap();
    let scale = eta / sched.eta;

    let p = build_counterexample();
    let hp = HyperParams::constant(eta, 1.0, period, horizon, BatchSpec::full(), 2);
    let modified = run_modified_fedavg(&p, &hp, &[0.5], &quiet()).unwrap();

    let x_dro = feddro.result.final_mean[0];
    let x_mod = modified.final_mean[0];
    let secs = started.elapsed().as_secs_f64();
    let ok = period == 10
        && feddro.meta.hyper.local_period == 10
        && (eta - (1.0 / horizon as f64).sqrt()).abs() < 1e-15
        && scale <= 1.0
        && feddro.meta.hyper.beta == 1.0
        && x_dro.abs() <= 0.05
        && x_mod.abs() <= 0.05
        && counterexample_slope(x_dro).powi(2) <= 1e-3
        && counterexample_slope(x_mod).powi(2) <= 1e-3
        && secs < 5.0;
    outcome(
        ok,
        format!(
            "eta = {eta} (theory x {scale:.4}), beta = {} (raw {:.3}), I = {period}: |x_T| feddro = {:.2e}, modified = {:.2e}, {secs:.2}s",
            feddro.meta.hyper.beta,
            sched.beta_raw,
            x_dro.abs(),
            x_mod.abs()
        ),
    )
}

fn rate_problem(clients: usize) -> CompositionalProblem {
    build_quadratic(&QuadraticSpec {
        clients,
        dim: 10,
        heterogeneity: 0.5,
        sigma_h: 0.5,
        sigma_g: 0.5,
        seed: 100,
        ..QuadraticSpec::default()
    })
    .unwrap()
}

fn theory_run(clients: usize, horizon: usize, seed: u64) -> FederatedRunResult {
    let p = rate_problem(clients);
    let batch = 4;
    let s = theory_schedule(p.constants(), batch, clients, horizon, Some(1), LbarVariant::Printed).unwrap();
    let hp = HyperParams::constant(
        s.eta,
        s.beta,
        1,
        horizon,
        BatchSpec::new(batch, batch).unwrap(),
        clients,
    );
    let opts = RunOptions {
        seed,
        cadence: 1,
        store_iterates: false,
    };
    run_feddro(&p, &hp, &vec![1.0; p.dim_x()], &opts).unwrap()
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

// A3: time-averaged stationarity improves like 1/√T.
fn a3() -> Outcome {
    let started = Instant::now();
    let avg = |t: usize| {
        SEEDS
            .iter()
            .map(|&s| theory_run(4, t, s).trace.mean_grad_norm_sq())
            .sum::<f64>()
            / 5.0
    };
    let short = avg(1024);
    let long = avg(4096);
    let ratio = long / short;
    let secs = started.elapsed().as_secs_f64();
    outcome(
        (0.3..=0.8).contains(&ratio) && secs < 30.0,
        format!("avg |grad|^2: T=1024 {short:.4e}, T=4096 {long:.4e}, ratio {ratio:.3} in [0.3, 0.8], {secs:.2}s"),
    )
}

// A4: more clients reach a fixed accuracy in fewer iterations.
fn a4() -> Outcome {
    let started = Instant::now();
    let ks = [1usize, 2, 4, 8];
    let mut inversions = Vec::new();
    let mut table = Vec::new();
    for &seed in &SEEDS {
        let runs: Vec<FederatedRunResult> = ks.iter().map(|&k| theory_run(k, 4096, seed)).collect();
        let eps = 2.0 * runs[3].trace.last().unwrap().grad_norm_sq;
        let hits: Vec<Option<usize>> = runs
            .iter()
            .map(|r| r.trace.rows.iter().find(|row| row.grad_norm_sq <= eps).map(|row| row.t))
            .collect();
        for w in hits.windows(2) {
            // Never reaching the target counts as an infinite hitting time.
            let (a, b) = (w[0].unwrap_or(usize::MAX), w[1].unwrap_or(usize::MAX));
            if b > a {
                inversions.push(if a == usize::MAX {
                    f64::INFINITY
                } else {
                    b as f64 / a as f64 - 1.0
                });
            }
        }
        table.push(
            hits.iter()
                .map(|h| h.map_or("never".to_string(), |t| t.to_string()))
                .collect::<Vec<_>>()
                .join("/"),
        );
    }
    let secs = started.elapsed().as_secs_f64();
    let ok = inversions.len() <= 1 && inversions.iter().all(|r| *r <= 0.10) && secs < 60.0;
    outcome(
        ok,
        format!(
            "hitting times K=1/2/4/8 per seed [{}], {} inversion(s) {:?}, {secs:.2}s",
            table.join(", "),
            inversions.len(),
            inversions
        ),
    )
}

fn logistic_shards(n: usize, clients: usize, seed: u64) -> Vec<ClientDataset> {
    SyntheticLogistic {
        n_total: n,
        dim: 5,
        imbalance_ratio: 0.25,
        separation: 1.0,
        seed,
    }
    .generate_partitioned(clients, PartitionScheme::UniformShard)
    .unwrap()
    .1
}

fn ball_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if x.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            return x;
        }
    }
}

// A5: the KL reformulation equals the inner maximum over sample weights.
fn a5() -> Outcome {
    let started = Instant::now();
    let shards = logistic_shards(50, 2, 21);
    let lambda = 0.7;
    let p = build_kl_dro(&shards, lambda, LossFamily::Logistic, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x = ball_point(&mut rng, 5);
        let losses: Vec<f64> = shards
            .iter()
            .flat_map(|s| {
                (0..s.data.len()).map(|i| {
                    let z: f64 = s.data.row(i).iter().zip(&x).map(|(a, b)| a * b).sum();
                    (1.0 + z.exp()).ln() - s.data.label(i) * z
                })
            })
            .collect();
        let oracle = brute_force_dro_value(&losses, lambda, Divergence::Kl).unwrap();
        worst = worst.max((eval_true_phi(&p, &x).unwrap() - oracle.value).abs());
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 1.0,
        format!("max |reformulated - oracle| = {worst:.3e} (<= 1e-8) over 10 points, {secs:.3}s"),
    )
}

// A6: FedDRO with one client and exact information is gradient descent.
fn a6() -> Outcome {
    let started = Instant::now();
    let quad = build_quadratic(&QuadraticSpec {
        clients: 1,
        dim: 4,
        heterogeneity: 0.7,
        seed: 3,
        ..QuadraticSpec::default()
    })
    .unwrap();
    let cases = [
        (merged_counterexample().unwrap(), 0.1, vec![0.5]),
        (quad, 0.2, vec![1.0, -0.5, 0.25, 2.0]),
    ];
    let mut worst: f64 = 0.0;
    for (p, eta, x0) in &cases {
        let hp = HyperParams::constant(*eta, 1.0, 1, 100, BatchSpec::full(), 1);
        let r = run_feddro(p, &hp, x0, &RunOptions::default()).unwrap();
        let reference = centralized_gd_reference(p, *eta, 100, x0).unwrap();
        for (a, b) in r.iterates.unwrap().iter().zip(&reference) {
            for (u, v) in a.iter().zip(b) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 1.0,
        format!("max iterate deviation over 100 steps = {worst:.3e} (<= 1e-10), {secs:.3}s"),
    )
}

// A7: communication ledger.
fn a7() -> Outcome {
    let p = build_quadratic(&QuadraticSpec {
        clients: 4,
        dim: 100,
        heterogeneity: 0.3,
        sigma_h: 0.1,
        sigma_g: 0.1,
        seed: 8,
        ..QuadraticSpec::default()
    })
    .unwrap();
    let hp = HyperParams::constant(0.05, 0.5, 8, 1024, BatchSpec::new(2, 2).unwrap(), 4);
    let r = run_feddro(&p, &hp, &vec![0.0; 100], &quiet()).unwrap();
    let last = r.trace.last().unwrap();
    let reals = r.reals_up(p.dim_x(), p.dim_g());
    let ok = p.dim_g() == 1
        && r.comm.highdim_up == 512
        && r.comm.lowdim_up == 4096
        && reals == 55_296
        && last.comm_highdim_up == 512
        && last.comm_lowdim_up == 4096
        && last.reals_up == 55_296;
    outcome(
        ok,
        format!(
            "highdim_up = {}, lowdim_up = {}, reals uploaded = {} (expect 512 / 4096 / 55296)",
            r.comm.highdim_up, r.comm.lowdim_up, reals
        ),
    )
}

fn central_difference(p: &CompositionalProblem, x: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (eval_true_phi(p, &a).unwrap() - eval_true_phi(p, &b).unwrap()) / (2.0 * h)
        })
        .collect()
}

// A8: analytic gradients agree with finite differences on every problem type.
fn a8() -> Outcome {
    let started = Instant::now();
    let shards = logistic_shards(60, 3, 4);
    let problems = vec![
        build_counterexample(),
        build_kl_dro(&shards, 1.0, LossFamily::Logistic, 1.0).unwrap(),
        build_chi2_dro(&shards, 1.0, LossFamily::Logistic, 1.0, Chi2Form::Printed).unwrap(),
        build_chi2_dro(&shards, 1.0, LossFamily::Logistic, 1.0, Chi2Form::Interior).unwrap(),
        build_erm(&shards, LossFamily::Squared, 1.0).unwrap(),
        build_quadratic(&QuadraticSpec {
            clients: 3,
            dim: 6,
            heterogeneity: 1.0,
            sigma_h: 0.2,
            sigma_g: 0.2,
            seed: 2,
            ..QuadraticSpec::default()
        })
        .unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut parts = Vec::new();
    let mut ok = true;
    for p in &problems {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let x = ball_point(&mut rng, p.dim_x());
            let g = eval_true_grad_phi(p, &x).unwrap();
            let fd = central_difference(p, &x);
            let diff = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst = worst.max(diff / norm.max(1.0));
        }
        ok &= worst <= 1e-5;
        parts.push(format!("{} {worst:.1e}", p.name()));
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        ok && secs < 1.0,
        format!("max relative error (<= 1e-5): {}, {secs:.3}s", parts.join(", ")),
    )
}

const A9_STOCHASTIC: &str = r#"
algorithm = "feddro"
seed = 5

[problem]
kind = "quadratic"
clients = 4
dim = 10
heterogeneity = 0.5
sigma_h = 0.5
sigma_g = 0.5
seed = 100

[hyper]
mode = "theory"
horizon = 1024
local_period = 4
batch_h = 4
batch_g = 4
"#;

const A9_DRO: &str = r#"
algorithm = "feddro"
seed = 9

[problem]
kind = "kl-dro"
lambda = 1.0
clients = 4
partition = { scheme = "label-skew", alpha = 0.5 }
data = { source = "synthetic", n_total = 400, dim = 5, imbalance_ratio = 0.1, seed = 2 }

[hyper]
mode = "fixed"
horizon = 300
eta = 0.1
beta = 0.3
local_period = 5
batch_h = 8
batch_g = 8
"#;

// A9: equal seeds give byte-identical traces.
fn a9(scratch: &Path) -> Outcome {
    let mut mismatched = Vec::new();
    for (name, text) in [("a2", A2_FEDDRO), ("a9-stochastic", A9_STOCHASTIC), ("a9-dro", A9_DRO)] {
        let cfg = RunConfig::from_toml(text).unwrap();
        let read = |run: &str| {
            let dir = scratch.join(name).join(run);
            run_experiment(&cfg, Some(&dir)).unwrap();
            fs::read(dir.join(TRACE_FILE)).unwrap()
        };
        if read("first") != read("second") {
            mismatched.push(name);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("3 configs run twice; mismatched: {mismatched:?}"),
    )
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("A1", "vanilla FedAvg non-convergence", Box::new(a1)),
        ("A2", "modified FedAvg / FedDRO convergence", Box::new(a2)),
        ("A3", "rate scaling in T", Box::new(a3)),
        ("A4", "linear speedup in K", Box::new(a4)),
        ("A5", "KL dual oracle equality", Box::new(a5)),
        ("A6", "reduction to gradient descent", Box::new(a6)),
        ("A7", "communication ledger", Box::new(a7)),
        ("A8", "gradient consistency", Box::new(a8)),
        ("A9", "determinism", Box::new(|| a9(scratch.path()))),
    ];
    let mut failed = 0;
    for (id, title, check) in &criteria {
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!("{id} {} {title}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
