use std::f64::consts::PI;

use proptest::prelude::*;
use star_core::estimator::QcelsParams;
use star_core::qcels::*;

fn three_phase() -> SyntheticSpectrum {
    SyntheticSpectrum::new(vec![-0.5, 0.2, 0.9], vec![0.8, 0.1, 0.1]).unwrap()
}

#[test]
fn signal_value_matches_direct_sum() {
    let s = synth_signal(&three_phase(), 0.1, 2, 0.0, 0);
    let z = s.values[1];
    assert!((z.re - 0.998_575_482_283_830_2).abs() < 1e-15);
    assert!((z.im - 0.028_995_613_827_408_25).abs() < 1e-15);
}

#[test]
fn fit_agrees_with_fine_grid() {
    let series = synth_signal(&three_phase(), 0.6, 5, 0.0, 0);
    let (lo, hi) = (-2.0, 1.0);
    let fit = qcels_fit(&series, lo, hi).unwrap();
    let oracle = (0..=100_000)
        .map(|i| lo + (hi - lo) * i as f64 / 100_000.0)
        .min_by(|&a, &b| profile_loss(&series, a).total_cmp(&profile_loss(&series, b)))
        .unwrap();
    assert!((fit.theta - oracle).abs() < 3e-5, "{} vs {oracle}", fit.theta);
    assert!(fit.loss <= profile_loss(&series, oracle) + 1e-15);
    assert!((fit.theta + 0.5).abs() < 1.0 - 0.8);
}

#[test]
fn interval_shrinks_by_half_per_level() {
    let s = three_phase();
    let params = QcelsParams::new(0.01, 0.06, 5, 0).unwrap();
    let res = multilevel_qcels(&params, |_, tau| synth_signal(&s, tau, 5, 0.0, 0)).unwrap();
    for w in res.levels.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let half = PI / (2.0 * prev.tau);
        assert!((cur.lo - (prev.theta - half).max(-PI)).abs() < 1e-12);
        assert!((cur.hi - (prev.theta + half).min(PI)).abs() < 1e-12);
    }
}

#[test]
fn noiseless_error_shrinks_with_level() {
    // median over shifts of the three-phase spectrum; with minor phases on
    // both sides of λ₀ the bias can grow again at intermediate levels
    let params = QcelsParams::new(0.01, 0.06, 5, 0).unwrap();
    let mut per_level: Vec<Vec<f64>> = vec![Vec::new(); params.levels];
    for i in 0..25 {
        let l0 = -2.0 + 0.16 * i as f64;
        let s = SyntheticSpectrum::new(vec![l0, wrap_phase(l0 + 0.7), wrap_phase(l0 + 1.4)], vec![0.8, 0.1, 0.1]).unwrap();
        let res = multilevel_qcels(&params, |_, tau| synth_signal(&s, tau, 5, 0.0, 0)).unwrap();
        for (j, l) in res.levels.iter().enumerate() {
            per_level[j].push(phase_error(l.theta, l0));
        }
    }
    let medians: Vec<f64> = per_level
        .iter_mut()
        .map(|v| {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect();
    for w in medians.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{medians:?}");
    }
}

#[test]
fn demo_is_reproducible() {
    let a = run_demo(&three_phase(), 0.01, 0.06, 5, 100, 20, 4).unwrap();
    let b = run_demo(&three_phase(), 0.01, 0.06, 5, 100, 20, 4).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn bad_spectra_rejected() {
    assert!(SyntheticSpectrum::new(vec![0.1, 0.2], vec![0.5]).is_err());
    assert!(SyntheticSpectrum::new(vec![4.0], vec![1.0]).is_err());
    assert!(SyntheticSpectrum::new(vec![0.1, 0.2], vec![0.7, 0.7]).is_err());
}

proptest! {
    #[test]
    fn fit_dominates_grid(l0 in -3.0f64..3.0, l1 in -3.0f64..3.0, p0 in 0.72f64..1.0, tau in 0.05f64..2.0, seed in any::<u64>()) {
        let s = SyntheticSpectrum::new(vec![l0, l1], vec![p0, 1.0 - p0]).unwrap();
        let series = synth_signal(&s, tau, 6, 0.05, seed);
        let (lo, hi) = (-PI, PI);
        let fit = qcels_fit(&series, lo, hi).unwrap();
        prop_assert!((lo..=hi).contains(&fit.theta));
        for i in 0..GRID_POINTS {
            let th = lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64;
            prop_assert!(fit.loss <= profile_loss(&series, th) + 1e-12);
        }
    }

    #[test]
    fn single_phase_exact(l0 in -3.0f64..3.0, tau in 0.05f64..0.9) {
        let s = SyntheticSpectrum::new(vec![l0], vec![1.0]).unwrap();
        let series = synth_signal(&s, tau, 5, 0.0, 0);
        let fit = qcels_fit(&series, -PI, PI).unwrap();
        prop_assert!((fit.theta - l0).abs() < 1e-9);
        prop_assert!((fit.r.norm() - 1.0).abs() < 1e-9);
    }
}
