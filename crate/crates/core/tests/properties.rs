use proptest::prelude::*;

use feddro::algorithms::{
    aggregate_mean, run_algorithm, run_feddro, run_modified_fedavg, Algorithm, HyperParams, RunOptions,
};
use feddro::estimators::BatchSpec;
use feddro::problems::{
    build_counterexample, build_quadratic, CompositionalProblem, LipschitzConstants, QuadraticSpec,
};
use feddro::schedule::{compute_t_threshold, derive_stepsize};

fn quadratic(clients: usize, dim: usize, het: f64, sigma: f64, seed: u64) -> CompositionalProblem {
    build_quadratic(&QuadraticSpec {
        clients,
        dim,
        heterogeneity: het,
        sigma_h: sigma,
        sigma_g: sigma,
        seed,
        ..QuadraticSpec::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ledger_and_post_sync_equality(k in 1usize..5, i in 1usize..7, t in 1usize..40, seed in 0u64..1000) {
        let p = quadratic(k, 3, 0.5, 0.3, seed);
        let hp = HyperParams::constant(0.05, 0.4, i, t, BatchSpec::new(2, 2).unwrap(), k);
        let r = run_feddro(&p, &hp, &[0.2, -0.1, 0.4], &RunOptions { seed, ..RunOptions::default() }).unwrap();
        let syncs = (t / i + usize::from(t % i != 0)) as u64;
        prop_assert_eq!(r.comm.lowdim_up, (k * t) as u64);
        prop_assert_eq!(r.comm.lowdim_down, (k * t) as u64);
        prop_assert_eq!(r.comm.highdim_up, k as u64 * syncs);
        prop_assert_eq!(r.sync_points.len() as u64, syncs);
        prop_assert_eq!(r.sync_points.last().unwrap().t, t);
        prop_assert!((1..=t).contains(&r.sampled_index));
        // Every row recorded right after a sync has zero drift.
        for row in &r.trace.rows {
            if row.t > 0 && (row.t % i == 0 || row.t == t) {
                prop_assert_eq!(row.drift, 0.0);
            }
        }
        for w in r.trace.rows.windows(2) {
            prop_assert!(w[1].comm_highdim_up >= w[0].comm_highdim_up);
            prop_assert!(w[1].samples_consumed > w[0].samples_consumed);
        }
    }

    #[test]
    fn every_algorithm_is_constant_at_zero_step(alg_idx in 0usize..4, i in 1usize..5) {
        let alg = [Algorithm::FedAvgCase1, Algorithm::FedAvgCase2, Algorithm::ModifiedFedAvg, Algorithm::FedDro][alg_idx];
        let p = build_counterexample();
        let hp = HyperParams::constant(0.0, 0.5, i, 12, BatchSpec::full(), 2);
        let r = run_algorithm(alg, &p, &hp, &[0.7], &RunOptions::default()).unwrap();
        prop_assert!(r.iterates.unwrap().iter().all(|x| x[0] == 0.7));
    }

    #[test]
    fn mean_of_copies_is_exact(v in prop::collection::vec(-1e6f64..1e6, 1..8), k in 1usize..12) {
        let copies: Vec<&[f64]> = (0..k).map(|_| v.as_slice()).collect();
        prop_assert_eq!(aggregate_mean(&copies).unwrap(), v);
    }

    #[test]
    fn stepsize_monotone(b in 1usize..32, k in 1usize..32, t in 1usize..100_000) {
        let eta = derive_stepsize(b, k, t).unwrap();
        prop_assert!(derive_stepsize(b + 1, k, t).unwrap() > eta);
        prop_assert!(derive_stepsize(b, k + 1, t).unwrap() > eta);
        prop_assert!(derive_stepsize(b, k, t + 1).unwrap() < eta);
    }

    #[test]
    fn threshold_implies_local_step_bound(
        l_h in 0.1f64..3.0, b_f in 0.0f64..3.0, l_g in 0.0f64..3.0, b_g in 0.0f64..3.0, l_f in 0.0f64..3.0,
        b in 1usize..8, k in 1usize..8, i in 1usize..8,
    ) {
        let c = LipschitzConstants { l_h, b_f, l_g, b_g, l_f, ..LipschitzConstants::default() };
        let t_th = compute_t_threshold(&c, b, k, i).unwrap();
        let bound = 1.0 / (3.0 * i as f64 * (24.0 * l_h * l_h + 24.0 * b_f * b_f * l_g * l_g).sqrt());
        for t in [t_th.ceil() as usize, 2 * t_th.ceil() as usize + 1] {
            let eta = derive_stepsize(b, k, t).unwrap();
            prop_assert!(eta <= bound * (1.0 + 1e-12), "eta {} bound {}", eta, bound);
        }
    }
}

#[test]
fn drift_grows_with_local_period() {
    let is = [1usize, 2, 4, 8];
    let mut inversions = 0;
    for seed in 0..5u64 {
        let p = quadratic(4, 5, 1.0, 0.2, 40 + seed);
        let drift: Vec<f64> = is
            .iter()
            .map(|&i| {
                let hp = HyperParams::constant(0.05, 0.5, i, 400, BatchSpec::new(2, 2).unwrap(), 4);
                let r = run_feddro(
                    &p,
                    &hp,
                    &[0.0; 5],
                    &RunOptions {
                        seed,
                        ..RunOptions::default()
                    },
                )
                .unwrap();
                r.trace.rows.iter().map(|row| row.drift).sum::<f64>() / r.trace.rows.len() as f64
            })
            .collect();
        inversions += drift.windows(2).filter(|w| w[1] < w[0]).count();
    }
    assert!(inversions <= 1, "{inversions} inversions");
}

#[test]
fn modified_fedavg_embedding_bias_tracks_drift() {
    // g is affine, so the mean of g_k(x_k) equals g(x̄) for any drift;
    // only a client-dependent slope makes the bias visible.
    let p = quadratic(2, 3, 1.0, 0.0, 6);
    let hp = HyperParams::constant(0.1, 1.0, 5, 20, BatchSpec::full(), 2);
    let r = run_modified_fedavg(&p, &hp, &[1.0, 0.0, -1.0], &RunOptions::default()).unwrap();
    for row in &r.trace.rows {
        if row.drift == 0.0 {
            assert!(row.embed_bias < 1e-24, "{row:?}");
        } else {
            assert!(row.embed_bias > 0.0, "{row:?}");
        }
    }
    assert!(r.trace.rows.iter().any(|row| row.drift > 0.0));
}

#[test]
fn single_client_has_no_drift() {
    let p = quadratic(1, 4, 0.0, 0.5, 1);
    let hp = HyperParams::constant(0.1, 0.5, 3, 30, BatchSpec::new(3, 3).unwrap(), 1);
    let r = run_feddro(&p, &hp, &[1.0; 4], &RunOptions::default()).unwrap();
    assert!(r.trace.rows.iter().all(|row| row.drift == 0.0));
}
