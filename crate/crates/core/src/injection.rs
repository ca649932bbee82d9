//! Ancilla-state injection for small-angle rotations: the relation between
//! the injected angle θ and the teleported angle θ*, the ideal projection
//! probability, a pluggable post-selection pass rate, and the rotation
//! error / PEC overhead formulas.
//!
//! Angles follow `R_Z(θ) = exp(-iθZ)`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum InjectionError {
    #[error("rotation angle {0} exceeds the small-angle cap π/4")]
    AngleCap(f64),
    #[error("invalid injection config: {0}")]
    Config(String),
    #[error("no pass rate for d = {d}, p_phys = {p_phys}")]
    MissingPassRate { d: usize, p_phys: f64 },
}

/// `sin^{2k}θ + cos^{2k}θ`.
pub fn p_ideal(theta: f64, k: u32) -> f64 {
    let (s, c) = theta.sin_cos();
    (s * s).powi(k as i32) + (c * c).powi(k as i32)
}

/// Forward map θ → θ* = asin(sin^kθ / √p_ideal), i.e. `atan(tan^k θ)`.
pub fn target_for_theta(theta: f64, k: u32) -> f64 {
    theta.signum() * theta.abs().tan().powi(k as i32).atan()
}

/// Inverse of [`target_for_theta`] on `|θ*| ≤ π/4`.
pub fn theta_for_target(target: f64, k: u32) -> Result<f64, InjectionError> {
    if !(target.abs() <= FRAC_PI_4) {
        return Err(InjectionError::AngleCap(target));
    }
    Ok(target.signum() * target.abs().tan().powf(1.0 / k as f64).atan())
}

/// Reduce an angle modulo π/2 into `[-π/4, π/4]`; the dropped multiple is a
/// Clifford correction and costs nothing in the rotation protocol.
pub fn clifford_reduce(theta: f64) -> f64 {
    theta - FRAC_PI_2 * (theta / FRAC_PI_2).round()
}

/// Post-selection pass rate of a noisy injection attempt.
#[derive(Clone, Debug, PartialEq)]
pub enum PassRate {
    Constant(f64),
    /// Entries `(d, p_phys, rate)`.
    Table(Vec<(usize, f64, f64)>),
}

impl Default for PassRate {
    fn default() -> Self {
        PassRate::Constant(1.0)
    }
}

impl PassRate {
    pub fn rate(&self, d: usize, p_phys: f64) -> Result<f64, InjectionError> {
        match self {
            PassRate::Constant(r) => Ok(*r),
            PassRate::Table(rows) => rows
                .iter()
                .find(|(dd, pp, _)| *dd == d && (pp - p_phys).abs() <= 1e-12 * p_phys.abs().max(1e-300))
                .map(|r| r.2)
                .ok_or(InjectionError::MissingPassRate { d, p_phys }),
        }
    }

    /// Parse the `{"d,p_phys": rate}` table form.
    pub fn table_from_map(map: &BTreeMap<String, f64>) -> Result<PassRate, InjectionError> {
        let mut rows = Vec::with_capacity(map.len());
        for (key, &rate) in map {
            let bad = || InjectionError::Config(format!("pass-rate key `{key}` is not `d,p_phys`"));
            let (d, p) = key.split_once(',').ok_or_else(bad)?;
            let d: usize = d.trim().parse().map_err(|_| bad())?;
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            rows.push((d, p, rate));
        }
        Ok(PassRate::Table(rows))
    }
}

impl Serialize for PassRate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PassRate::Constant(r) => s.serialize_f64(*r),
            PassRate::Table(rows) => {
                let map: BTreeMap<String, f64> =
                    rows.iter().map(|(d, p, r)| (format!("{d},{p}"), *r)).collect();
                map.serialize(s)
            }
        }
    }
}

impl<'de> Deserialize<'de> for PassRate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<PassRate, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Constant(f64),
            Table(BTreeMap<String, f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Constant(r) => Ok(PassRate::Constant(r)),
            Raw::Table(m) => PassRate::table_from_map(&m).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub k: u32,
    pub q_sizes: Vec<usize>,
    pub d: usize,
    pub p_phys: f64,
    pub p_pass: PassRate,
    pub attempts_per_clock: u32,
}

/// Subset sizes used for the two shipped code distances; other distances
/// fall back to pairs with a final triple (or a single subset for d < 4).
pub fn default_q_sizes(d: usize) -> Vec<usize> {
    match d {
        9 => vec![3, 3, 3],
        11 => vec![2, 2, 2, 2, 3],
        d if d < 4 => vec![d],
        d => {
            let mut q = vec![2; d / 2 - 1];
            q.push(d - 2 * q.len());
            q
        }
    }
}

impl InjectionConfig {
    /// Config for distance `d` with the default subset partition,
    /// constant pass rate 1 and three attempts per clock.
    pub fn for_distance(d: usize, p_phys: f64) -> InjectionConfig {
        let q_sizes = default_q_sizes(d);
        InjectionConfig {
            k: q_sizes.len() as u32,
            q_sizes,
            d,
            p_phys,
            p_pass: PassRate::default(),
            attempts_per_clock: 3,
        }
    }

    pub fn validate(&self) -> Result<(), InjectionError> {
        let bad = |m: String| Err(InjectionError::Config(m));
        if self.q_sizes.iter().sum::<usize>() != self.d {
            return bad(format!("q_sizes {:?} do not sum to d = {}", self.q_sizes, self.d));
        }
        if self.k as usize != self.q_sizes.len() || self.k == 0 {
            return bad(format!("k = {} but {} subsets given", self.k, self.q_sizes.len()));
        }
        if self.attempts_per_clock == 0 {
            return bad("attempts_per_clock must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.p_phys) {
            return bad(format!("p_phys = {} outside [0, 1)", self.p_phys));
        }
        let rate = self.pass_rate()?;
        if !(0.0..=1.0).contains(&rate) {
            return bad(format!("pass rate {rate} outside [0, 1]"));
        }
        Ok(())
    }

    pub fn pass_rate(&self) -> Result<f64, InjectionError> {
        self.p_pass.rate(self.d, self.p_phys)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    #[serde(rename = "z")]
    Z,
    #[serde(rename = "zz")]
    Zz,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationRequest {
    pub target_angle: f64,
    pub basis: Basis,
    /// Trial index K ≥ 1.
    pub trial: u32,
}

impl RotationRequest {
    /// θ_K = 2^{K-1}·θ*.
    pub fn trial_angle(&self) -> f64 {
        self.target_angle * 2f64.powi(self.trial.saturating_sub(1) as i32)
    }
}

/// Per-attempt success probability at trial angle θ_K.
pub fn success_prob(req: &RotationRequest, cfg: &InjectionConfig) -> Result<f64, InjectionError> {
    angle_success_prob(req.trial_angle(), cfg)
}

/// `p_ideal(θ(θ_K)) · p_pass` for an explicit angle.
pub fn angle_success_prob(theta_k: f64, cfg: &InjectionConfig) -> Result<f64, InjectionError> {
    let theta = theta_for_target(theta_k.abs(), cfg.k)?;
    Ok(p_ideal(theta, cfg.k) * cfg.pass_rate()?)
}

/// Probability that `attempts` independent tries at rate `p` all fail.
pub fn failure_after(p: f64, attempts: u32) -> f64 {
    (1.0 - p).powi(attempts as i32)
}

/// α_RUS = 0.40·k.
pub fn alpha_rus(k: u32) -> f64 {
    0.40 * k as f64
}

/// Worst-case logical error of one rotation: α_RUS·θ*·p_phys.
pub fn rus_error_rate(target: f64, p_phys: f64, k: u32) -> f64 {
    alpha_rus(k) * target.abs() * p_phys
}

/// PEC sampling overhead γ² ≈ e^{4ε}.
pub fn pec_sampling_factor(eps: f64) -> f64 {
    (4.0 * eps).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn p_ideal_values() {
        assert_eq!(p_ideal(0.0, 4), 1.0);
        assert_relative_eq!(p_ideal(0.1, 3), 0.970397, epsilon = 1e-6);
        assert_relative_eq!(p_ideal(FRAC_PI_4, 1), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn forward_inverse() {
        assert_relative_eq!(target_for_theta(0.1, 3), 1.0101e-3, max_relative = 1e-4);
        assert_eq!(theta_for_target(0.0, 3), Ok(0.0));
        let t = theta_for_target(1e-3, 5).unwrap();
        assert_relative_eq!(target_for_theta(t, 5), 1e-3, max_relative = 1e-12);
        assert!(theta_for_target(1.0, 3).is_err());
    }

    #[test]
    fn asin_form_agrees() {
        let (theta, k) = (0.3f64, 4);
        let direct = (theta.sin().powi(k as i32) / p_ideal(theta, k).sqrt()).asin();
        assert_relative_eq!(target_for_theta(theta, k), direct, max_relative = 1e-13);
    }

    #[test]
    fn success_prob_cases() {
        let mut cfg = InjectionConfig::for_distance(11, 1e-4);
        let req = RotationRequest { target_angle: 0.0, basis: Basis::Z, trial: 1 };
        assert_eq!(success_prob(&req, &cfg), Ok(1.0));
        cfg.p_pass = PassRate::Constant(0.9);
        let req = RotationRequest { target_angle: 1e-3, basis: Basis::Z, trial: 1 };
        // θ ≈ 0.2461 here, so p_ideal ≈ 0.7364 and not close to 1.
        assert_relative_eq!(success_prob(&req, &cfg).unwrap(), 0.662_797_785_283_774_3, max_relative = 1e-12);
        let far = RotationRequest { target_angle: 0.5, basis: Basis::Z, trial: 3 };
        assert!(matches!(success_prob(&far, &cfg), Err(InjectionError::AngleCap(_))));
    }

    #[test]
    fn error_and_pec() {
        assert_eq!(rus_error_rate(0.0, 1e-4, 5), 0.0);
        assert_relative_eq!(rus_error_rate(0.01, 1e-4, 5), 2e-6, max_relative = 1e-12);
        assert_relative_eq!(rus_error_rate(0.01, 1e-4, 3) / rus_error_rate(0.01, 1e-4, 5), 0.6, max_relative = 1e-12);
        assert_eq!(pec_sampling_factor(0.0), 1.0);
        assert_relative_eq!(pec_sampling_factor(0.25), std::f64::consts::E, max_relative = 1e-15);
        assert_relative_eq!(pec_sampling_factor(2e-6), 1.000008, max_relative = 1e-10);
    }

    #[test]
    fn shipped_partitions() {
        assert_eq!(default_q_sizes(9).iter().sum::<usize>(), 9);
        assert_eq!(default_q_sizes(11).iter().sum::<usize>(), 11);
        for d in 1..40 {
            assert_eq!(default_q_sizes(d).iter().sum::<usize>(), d);
        }
    }

    #[test]
    fn pass_rate_table() {
        let map = BTreeMap::from([("9,0.0001".to_string(), 0.95), ("11,1e-4".to_string(), 0.9)]);
        let t = PassRate::table_from_map(&map).unwrap();
        assert_eq!(t.rate(9, 1e-4), Ok(0.95));
        assert_eq!(t.rate(11, 1e-4), Ok(0.9));
        assert!(t.rate(13, 1e-4).is_err());
        let json: PassRate = serde_json::from_str(r#"{"9,0.001": 0.5}"#).unwrap();
        assert_eq!(json.rate(9, 1e-3), Ok(0.5));
    }

    #[test]
    fn clifford_reduction() {
        assert_relative_eq!(clifford_reduce(FRAC_PI_2 + 0.1), 0.1, epsilon = 1e-15);
        assert!(clifford_reduce(3.0).abs() <= FRAC_PI_4);
    }
}
