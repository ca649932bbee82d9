use std::f64::consts::PI;

use proptest::prelude::*;
use star_core::estimator::*;

/// Brute-force N_total over all Hadamard-test circuits: circuit m at level j
/// evolves for m·τ_j in steps of τ_j/(2N_j) with continuous N_j.
fn n_total_oracle(p: &QcelsParams, w: f64, eps_t: f64) -> f64 {
    let mut total = 0.0;
    for j in 1..=p.levels {
        let nj = p.tau(j) / 2.0 * (w / eps_t).sqrt();
        for m in 0..p.n_pairs {
            total += p.n_samples as f64 * 2.0 * m as f64 * nj;
        }
    }
    total
}

#[test]
fn qubit_counts() {
    for (n, d, want) in [(4, 9, 10530), (6, 11, 35090), (8, 11, 62194), (10, 11, 97042)] {
        assert_eq!(n_qubits(n, d), want);
    }
}

#[test]
fn split_lagrange_point() {
    // 1-D grid oracle for argmin of 1/(x·sqrt(1-x))
    let best = (1..100_000)
        .map(|i| i as f64 / 100_000.0)
        .min_by(|a, b| (1.0 / (a * (1.0 - a).sqrt())).total_cmp(&(1.0 / (b * (1.0 - b).sqrt()))))
        .unwrap();
    assert!((best - 2.0 / 3.0).abs() < 1e-4);
    let s = optimize_split(0.01, 64.0, 0.2, 0.06, 5, 100).unwrap();
    assert!((s.eps_qcels / 0.01 - 2.0 / 3.0).abs() < 0.01);
}

#[test]
fn calibration_inverts_n_max() {
    let s = optimize_split(0.01, 64.0, 1.0, 0.06, 5, 100).unwrap();
    let w = calibrate_w(3397.0, s.eps_qcels_normalized, s.eps_trotter_normalized, 0.06);
    let t = total_steps(&s.params, w, s.eps_trotter_normalized);
    assert!((t.n_max - 3397.0).abs() < 1e-9);
}

#[test]
fn report_is_pure() {
    let mut cfg = EstimateConfig::default();
    cfg.trotter.w_norm = Some(50.0);
    let a = serde_json::to_string(&build_report(&cfg, TrotterCost::Rough, None).unwrap()).unwrap();
    let b = serde_json::to_string(&build_report(&cfg, TrotterCost::Rough, None).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_noise_means_unit_pec() {
    let p = QcelsParams::new(1e-3, 0.06, 5, 100).unwrap();
    let circuits = hadamard_circuits(&p, &vec![7; p.levels], 0.0, 5);
    assert!(circuits.iter().all(|c| c.pec_factor == 1.0));
    let plain: f64 = circuits.iter().map(|c| 100.0 * circuit_clocks(c.steps as f64, 250.0) * 9.0 * 1e-6).sum();
    assert!((total_runtime(&circuits, 100, 250.0, 9) - plain).abs() < 1e-9 * plain);
}

#[test]
fn unknown_config_keys_rejected() {
    let err = serde_json::from_str::<EstimateConfig>(r#"{"qcels":{"delta":0.06,"bogus":1}}"#).unwrap_err();
    assert!(err.to_string().contains("bogus"));
}

proptest! {
    #[test]
    fn t_max_identity(eps in 1e-5f64..0.5, delta in 0.01f64..0.5, n in 2usize..10) {
        let p = QcelsParams::new(eps, delta, n, 100).unwrap();
        prop_assert!((p.t_max() - delta / eps).abs() <= 1e-12 * delta / eps);
        prop_assert_eq!(p.levels, (1.0 / eps).log2().ceil() as usize + 1);
    }

    #[test]
    fn closed_form_matches_circuit_sum(eps in 1e-4f64..0.1, w in 0.01f64..10.0, et in 1e-5f64..1e-2, ns in 0usize..200) {
        let p = QcelsParams::new(eps, 0.06, 5, ns).unwrap();
        let t = total_steps(&p, w, et);
        let oracle = n_total_oracle(&p, w, et);
        prop_assert!((t.n_total - oracle).abs() <= 1e-9 * oracle.max(1.0));
        let ratio_want = 2.0 * 4.0 * ns as f64 * (1.0 - 2f64.powi(-(p.levels as i32)));
        if ns > 0 {
            prop_assert!((t.n_total / t.n_max - ratio_want).abs() <= 1e-9 * ratio_want);
        }
    }

    #[test]
    fn steps_scale_linearly(tau in 0.01f64..100.0, w in 0.01f64..1.0, et in 1e-5f64..1e-2) {
        let raw = tau / 2.0 * (w / et).sqrt();
        prop_assert_eq!(trotter_steps_per_level(tau, w, et), raw.ceil().max(1.0) as u64);
        prop_assert!(trotter_steps_per_level(2.0 * tau, w, et) >= trotter_steps_per_level(tau, w, et));
    }

    #[test]
    fn split_respects_budget(eps in 1e-3f64..0.1, lambda in 10.0f64..500.0, w in 0.01f64..5.0) {
        let s = optimize_split(eps, lambda, w, 0.06, 5, 100).unwrap();
        prop_assert!(s.eps_qcels + s.eps_trotter <= eps * (1.0 + 1e-12));
        let et = normalize_eps(eps, lambda).unwrap();
        for corner in [0.01, 0.99] {
            let p = QcelsParams::new(corner * et, 0.06, 5, 100).unwrap();
            let alt = total_steps(&p, w, (1.0 - corner) * et).n_total;
            prop_assert!(s.steps.n_total <= alt);
        }
    }

    #[test]
    fn budget_scaling(eps in 1e-3f64..0.02) {
        // continuous optimum scales as eps^{-3/2}; J moves by two levels
        let a = optimize_split(eps, 64.0, 0.3, 0.06, 5, 100).unwrap();
        let b = optimize_split(4.0 * eps, 64.0, 0.3, 0.06, 5, 100).unwrap();
        let ratio = b.steps.n_total / a.steps.n_total;
        prop_assert!((ratio - 0.125).abs() < 0.125 * 5e-3, "ratio {}", ratio);
    }

    #[test]
    fn pec_monotone(t1 in 0.0f64..500.0, dt in 0.0f64..500.0, k in 1u32..8) {
        prop_assert!(pec_factor(t1 + dt, 1e-4, k) >= pec_factor(t1, 1e-4, k));
    }

    #[test]
    fn normalization_scales(eps in 1e-6f64..1.0, w in 1e-3f64..1e3, lambda in 1.0f64..1e3) {
        prop_assert!((normalize_eps(eps, lambda).unwrap() - PI / lambda * eps).abs() <= 1e-15 * eps);
        prop_assert!((normalize_w(w, lambda).unwrap() / w - (PI / lambda).powi(3)).abs() <= 1e-12 * (PI / lambda).powi(3));
    }
}
