use approx::assert_relative_eq;
use proptest::prelude::*;
use star_core::injection::*;

#[test]
fn forward_relation_value() {
    assert_relative_eq!(target_for_theta(0.1, 3), 1.010_073_458_161_285_7e-3, max_relative = 1e-12);
    assert_eq!(theta_for_target(0.0, 4).unwrap(), 0.0);
}

#[test]
fn out_of_domain_target_rejected() {
    assert!(theta_for_target(1.0, 3).is_err());
}

#[test]
fn pass_rate_config_round_trip() {
    let text = r#"{"k":3,"q_sizes":[3,3,3],"d":9,"p_phys":0.0001,"p_pass":{"9,0.0001":0.93},"attempts_per_clock":3}"#;
    let cfg: InjectionConfig = serde_json::from_str(text).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.pass_rate().unwrap(), 0.93);
    let back: InjectionConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
}

proptest! {
    #[test]
    fn p_ideal_bounds(theta in 0.0f64..std::f64::consts::FRAC_PI_4, k in 1u32..8) {
        let p = p_ideal(theta, k);
        prop_assert!(p <= 1.0 + 1e-15);
        prop_assert!(p >= 2f64.powi(1 - k as i32) - 1e-15);
    }

    #[test]
    fn target_round_trip(target in 1e-8f64..0.7, k in 1u32..7) {
        let theta = theta_for_target(target, k).unwrap();
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_4 + 1e-12).contains(&theta));
        let back = target_for_theta(theta, k);
        prop_assert!((back - target).abs() <= 1e-12 * target.max(1e-3));
    }

    #[test]
    fn success_nonincreasing_in_trial(target in 1e-6f64..1e-2, rate in 0.1f64..1.0) {
        let mut cfg = InjectionConfig::for_distance(11, 1e-4);
        cfg.p_pass = PassRate::Constant(rate);
        let mut last = f64::INFINITY;
        for trial in 1..=12 {
            let req = RotationRequest { target_angle: target, basis: Basis::Z, trial };
            match success_prob(&req, &cfg) {
                Ok(p) => {
                    prop_assert!(p <= last + 1e-15);
                    last = p;
                }
                Err(InjectionError::AngleCap(_)) => break,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn clifford_reduction_is_within_cap(theta in -50.0f64..50.0) {
        let r = clifford_reduce(theta);
        prop_assert!(r.abs() <= std::f64::consts::FRAC_PI_4 + 1e-12);
        let k = ((theta - r) / std::f64::consts::FRAC_PI_2).round();
        prop_assert!((theta - r - k * std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn error_rate_linear(t in 0.0f64..0.5, p in 0.0f64..1e-2, k in 1u32..8) {
        let e = rus_error_rate(t, p, k);
        prop_assert!((rus_error_rate(2.0 * t, p, k) - 2.0 * e).abs() <= 1e-15);
        prop_assert!((rus_error_rate(t, 2.0 * p, k) - 2.0 * e).abs() <= 1e-15);
    }
}
