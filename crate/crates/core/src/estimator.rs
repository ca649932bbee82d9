//! QPE resource estimate: QCELS parameters, Trotter step counts, the error
//! budget split, code distance, PEC weighting and the final report.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hubbard::{build_hamiltonian, one_norm, HubbardError, HubbardSpec};
use crate::injection::{alpha_rus, default_q_sizes, InjectionConfig, InjectionError, PassRate};
use crate::trotter::{controlled_overhead, rough_rus_clocks, trotter_clocks};

/// Code cycle duration in seconds.
pub const CODE_CYCLE_S: f64 = 1e-6;
/// Largest code distance `choose_distance` will consider.
pub const MAX_DISTANCE: usize = 51;

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("1-norm must be positive, got {0}")]
    NonPositiveNorm(f64),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("no odd code distance up to {MAX_DISTANCE} meets the logical error budget")]
    NoDistance,
    #[error("trotter.w_norm is missing and no N_max calibration target was given")]
    MissingW,
    #[error(transparent)]
    Hubbard(#[from] HubbardError),
    #[error(transparent)]
    Injection(#[from] InjectionError),
    #[error("trotter cost: {0}")]
    TrotterCost(String),
}

impl EstimateError {
    /// True for errors caused by an unsatisfiable model rather than bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, EstimateError::NoDistance | EstimateError::MissingW)
    }
}

fn check_lambda(lambda: f64) -> Result<f64, EstimateError> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(PI / lambda)
    } else {
        Err(EstimateError::NonPositiveNorm(lambda))
    }
}

/// ε̃ = (π/λ)·ε.
pub fn normalize_eps(eps: f64, lambda: f64) -> Result<f64, EstimateError> {
    Ok(check_lambda(lambda)? * eps)
}

/// W̃ = (π/λ)³·W.
pub fn normalize_w(w: f64, lambda: f64) -> Result<f64, EstimateError> {
    Ok(check_lambda(lambda)?.powi(3) * w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcelsParams {
    pub delta: f64,
    pub n_pairs: usize,
    pub n_samples: usize,
    pub levels: usize,
    /// Normalized QCELS precision ε̃.
    pub eps: f64,
}

impl QcelsParams {
    pub fn new(eps: f64, delta: f64, n_pairs: usize, n_samples: usize) -> Result<QcelsParams, EstimateError> {
        if !(eps > 0.0 && eps.is_finite()) || !(delta > 0.0) || n_pairs < 2 {
            return Err(EstimateError::Invalid(format!(
                "need eps > 0, delta > 0, N ≥ 2 (got eps = {eps}, delta = {delta}, N = {n_pairs})"
            )));
        }
        let levels = (1.0 / eps).log2().ceil().max(0.0) as usize + 1;
        Ok(QcelsParams { delta, n_pairs, n_samples, levels, eps })
    }

    /// τ_j = 2^{j−J}·δ/(N·ε̃) for j = 1..=J.
    pub fn tau(&self, j: usize) -> f64 {
        2f64.powi(j as i32 - self.levels as i32) * self.delta / (self.n_pairs as f64 * self.eps)
    }

    pub fn taus(&self) -> Vec<f64> {
        (1..=self.levels).map(|j| self.tau(j)).collect()
    }

    /// N·τ_J.
    pub fn t_max(&self) -> f64 {
        self.n_pairs as f64 * self.tau(self.levels)
    }
}

/// N_j = ⌈(τ_j/2)·√(W̃/ε̃_T)⌉, at least 1.
pub fn trotter_steps_per_level(tau: f64, w_tilde: f64, eps_t: f64) -> u64 {
    ((tau / 2.0) * (w_tilde / eps_t).sqrt()).ceil().max(1.0) as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCounts {
    /// Closed-form total over all Hadamard-test circuits.
    pub n_total: f64,
    /// Closed-form steps of the longest circuit, N·N_J.
    pub n_max: f64,
    /// Integer N_j per level.
    pub per_level: Vec<u64>,
    /// Σ_j N(N−1)·N_s·N_j with integer N_j.
    pub n_total_integer: u64,
}

pub fn total_steps(params: &QcelsParams, w_tilde: f64, eps_t: f64) -> StepCounts {
    let root = (w_tilde / eps_t).sqrt();
    let (n, ns) = (params.n_pairs as f64, params.n_samples as f64);
    let big_j = params.levels as i32;
    let n_total = (1..=big_j)
        .map(|j| (n - 1.0) * ns * 2f64.powi(j - big_j - 1) * params.delta / params.eps * root)
        .sum();
    let n_max = params.delta / (2.0 * params.eps) * root;
    let per_level: Vec<u64> = params.taus().iter().map(|&t| trotter_steps_per_level(t, w_tilde, eps_t)).collect();
    let weight = params.n_pairs as u64 * (params.n_pairs as u64 - 1) * params.n_samples as u64;
    let n_total_integer = per_level.iter().map(|&nj| weight * nj).sum();
    StepCounts { n_total, n_max, per_level, n_total_integer }
}

/// Inverts N_max = (δ/2ε̃_Q)·√(W̃/ε̃_T) for W̃.
pub fn calibrate_w(n_max: f64, eps_q: f64, eps_t: f64, delta: f64) -> f64 {
    (n_max * 2.0 * eps_q / delta).powi(2) * eps_t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub eps_qcels: f64,
    pub eps_trotter: f64,
    pub eps_qcels_normalized: f64,
    pub eps_trotter_normalized: f64,
    pub params: QcelsParams,
    pub steps: StepCounts,
}

/// N_total for a QCELS share `f` of the normalized budget.
fn split_objective(frac: f64, eps_tilde: f64, w_tilde: f64, delta: f64, n: usize, ns: usize) -> Option<(f64, QcelsParams)> {
    let params = QcelsParams::new(frac * eps_tilde, delta, n, ns).ok()?;
    let steps = total_steps(&params, w_tilde, (1.0 - frac) * eps_tilde);
    Some((steps.n_total, params))
}

/// Minimize N_total over ε_Q + ε_T = ε_targ. Starts from the continuous
/// optimum ε_Q = 2ε/3 and scans a coarse global grid plus a fine local one,
/// since the level count J jumps with ε_Q.
pub fn optimize_split(
    eps_targ: f64,
    lambda: f64,
    w_tilde: f64,
    delta: f64,
    n_pairs: usize,
    n_samples: usize,
) -> Result<Split, EstimateError> {
    if !(eps_targ > 0.0) || !(w_tilde > 0.0) || !(delta > 0.0) || n_pairs < 2 {
        return Err(EstimateError::Invalid(format!(
            "infeasible budget: eps_targ = {eps_targ}, W = {w_tilde}, delta = {delta}, N = {n_pairs}"
        )));
    }
    let eps_tilde = normalize_eps(eps_targ, lambda)?;
    let mut fracs = vec![2.0 / 3.0];
    fracs.extend((1..200).map(|i| i as f64 / 200.0));
    fracs.extend((-1000..=1000).map(|i| 2.0 / 3.0 + i as f64 * 1e-4));
    let mut best: Option<(f64, f64)> = None;
    for f in fracs {
        if !(0.0 < f && f < 1.0) {
            continue;
        }
        if let Some((obj, _)) = split_objective(f, eps_tilde, w_tilde, delta, n_pairs, n_samples) {
            if best.map_or(true, |(b, _)| obj < b) {
                best = Some((obj, f));
            }
        }
    }
    let (_, f) = best.ok_or_else(|| EstimateError::Invalid("no feasible split".into()))?;
    let params = QcelsParams::new(f * eps_tilde, delta, n_pairs, n_samples)?;
    let eps_t_tilde = (1.0 - f) * eps_tilde;
    Ok(Split {
        eps_qcels: f * eps_targ,
        eps_trotter: (1.0 - f) * eps_targ,
        eps_qcels_normalized: f * eps_tilde,
        eps_trotter_normalized: eps_t_tilde,
        steps: total_steps(&params, w_tilde, eps_t_tilde),
        params,
    })
}

/// p_L(d) = 0.1·d·(100·p)^{(d+1)/2}.
pub fn logical_error_rate(d: usize, p_phys: f64) -> f64 {
    0.1 * d as f64 * (100.0 * p_phys).powf((d as f64 + 1.0) / 2.0)
}

/// Smallest odd d with p_L(d)·N_op < ε_logerr.
pub fn choose_distance_for_ops(n_op: f64, p_phys: f64, eps_logerr: f64) -> Result<usize, EstimateError> {
    if !(0.0 < p_phys && p_phys < 0.01) {
        return Err(EstimateError::Invalid(format!("p_phys = {p_phys} is not below threshold 0.01")));
    }
    (3..=MAX_DISTANCE)
        .step_by(2)
        .find(|&d| logical_error_rate(d, p_phys) * n_op < eps_logerr)
        .ok_or(EstimateError::NoDistance)
}

/// Distance for an n×n model whose longest circuit takes `clocks`, counting
/// one operation per patch per clock.
pub fn choose_distance(n: usize, clocks: f64, p_phys: f64, eps_logerr: f64) -> Result<usize, EstimateError> {
    choose_distance_for_ops(patch_count(n) as f64 * clocks, p_phys, eps_logerr)
}

/// 4n² + 1 patches, including the QPE ancilla.
pub fn patch_count(n: usize) -> usize {
    4 * n * n + 1
}

pub fn n_qubits(n: usize, d: usize) -> usize {
    patch_count(n) * 2 * d * d
}

/// Clocks of a controlled evolution of `steps` Trotter steps.
pub fn circuit_clocks(steps: f64, t_trotter: f64) -> f64 {
    let boundary = controlled_overhead(0) as f64;
    let per_step = controlled_overhead(1) as f64 - boundary;
    steps * (t_trotter + per_step) + boundary
}

/// C_τ = exp(4·α_RUS·π·τ·p_phys).
pub fn pec_factor(tau: f64, p_phys: f64, k: u32) -> f64 {
    (4.0 * alpha_rus(k) * PI * tau * p_phys).exp()
}

/// One Hadamard-test circuit family: level j, time index m (t = m·τ_j).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HadamardCircuit {
    pub level: usize,
    pub index: usize,
    /// Evolution time of each controlled half, τ_j·m/2.
    pub tau: f64,
    pub steps: u64,
    pub pec_factor: f64,
}

pub fn hadamard_circuits(params: &QcelsParams, per_level: &[u64], p_phys: f64, k: u32) -> Vec<HadamardCircuit> {
    let mut out = Vec::with_capacity(params.levels * params.n_pairs);
    for (j, &nj) in (1..=params.levels).zip(per_level) {
        let tau_j = params.tau(j);
        for m in 0..params.n_pairs {
            let tau = tau_j * m as f64 / 2.0;
            out.push(HadamardCircuit {
                level: j,
                index: m,
                tau,
                steps: 2 * m as u64 * nj,
                pec_factor: pec_factor(tau, p_phys, k),
            });
        }
    }
    out
}

/// Σ_circuits N_s·clocks·d·t_cycle·C_τ.
pub fn total_runtime(circuits: &[HadamardCircuit], n_samples: usize, t_trotter: f64, d: usize) -> f64 {
    circuits
        .iter()
        .map(|c| n_samples as f64 * circuit_clocks(c.steps as f64, t_trotter) * d as f64 * CODE_CYCLE_S * c.pec_factor)
        .sum()
}

/// Average PEC factor weighted by circuit runtime.
pub fn pec_total_factor(circuits: &[HadamardCircuit], t_trotter: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for c in circuits {
        let w = circuit_clocks(c.steps as f64, t_trotter);
        num += w * c.pec_factor;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        1.0
    }
}

/// N_max·T·d·t_cycle.
pub fn max_runtime(n_max: f64, t_trotter: f64, d: usize) -> f64 {
    n_max * t_trotter * d as f64 * CODE_CYCLE_S
}

/// Longest circuit including the controlled-evolution overhead.
pub fn max_runtime_controlled(n_max: f64, t_trotter: f64, d: usize) -> f64 {
    circuit_clocks(n_max, t_trotter) * d as f64 * CODE_CYCLE_S
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n: usize,
    pub t: f64,
    pub u: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { n: 4, t: 1.0, u: 4.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InjectionSection {
    pub k: Option<u32>,
    pub q_sizes: Option<Vec<usize>>,
    pub p_pass: Option<PassRate>,
    pub attempts_per_clock: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodeSection {
    pub p_phys: f64,
    pub eps_logerr: f64,
    pub d_override: Option<usize>,
}

impl Default for CodeSection {
    fn default() -> Self {
        CodeSection { p_phys: 1e-4, eps_logerr: 0.01, d_override: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QcelsSection {
    pub delta: f64,
    pub n_pairs: usize,
    pub n_samples: usize,
    pub eps_targ: f64,
}

impl Default for QcelsSection {
    fn default() -> Self {
        QcelsSection { delta: 0.06, n_pairs: 5, n_samples: 100, eps_targ: 0.01 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrotterSection {
    /// Trotter error norm W in model units.
    pub w_norm: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub model: ModelSection,
    pub injection: InjectionSection,
    pub code: CodeSection,
    pub qcels: QcelsSection,
    pub trotter: TrotterSection,
}

impl EstimateConfig {
    pub fn spec(&self) -> Result<HubbardSpec, EstimateError> {
        Ok(HubbardSpec::new(self.model.n, self.model.t, self.model.u)?)
    }

    /// Injection parameters at distance `d`; subset sizes default per d.
    pub fn injection_for(&self, d: usize) -> Result<InjectionConfig, EstimateError> {
        let q_sizes = self.injection.q_sizes.clone().unwrap_or_else(|| default_q_sizes(d));
        let cfg = InjectionConfig {
            k: self.injection.k.unwrap_or(q_sizes.len() as u32),
            q_sizes,
            d,
            p_phys: self.code.p_phys,
            p_pass: self.injection.p_pass.clone().unwrap_or_default(),
            attempts_per_clock: self.injection.attempts_per_clock.unwrap_or(3),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Where the per-step clock count came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrotterSource {
    Given,
    Simulated,
    Rough,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub lambda: f64,
    pub eps_targ: f64,
    pub eps_qcels: f64,
    pub eps_trotter: f64,
    pub w_norm: f64,
    pub w_tilde: f64,
    pub w_calibrated: bool,
    pub levels: usize,
    pub taus: Vec<f64>,
    /// Physical Trotter step of the longest circuit.
    pub dtau: f64,
    pub steps_per_level: Vec<u64>,
    pub n_total: u64,
    pub n_max: u64,
    pub n_total_integer: u64,
    pub d: usize,
    pub k: u32,
    pub q_sizes: Vec<usize>,
    pub t_trotter_rough: f64,
    pub t_trotter: f64,
    pub t_trotter_source: TrotterSource,
    pub pec_factor: f64,
    pub total_runtime_s: f64,
    pub max_runtime_s: f64,
    pub max_runtime_controlled_s: f64,
    pub patches: usize,
    pub n_qubit: usize,
}

/// How to obtain T_Trotter once d is known.
pub enum TrotterCost<'a> {
    Given(f64),
    Rough,
    /// Called with the injection config at the chosen distance and the
    /// physical step size Δτ of the longest circuit.
    Simulate(&'a dyn Fn(&InjectionConfig, f64) -> Result<f64, String>),
}

/// Per-step clocks with every RUS phase taken as 2⟨K⟩_M.
pub fn rough_trotter_clocks(n: usize) -> f64 {
    trotter_clocks(n, |m, _| rough_rus_clocks(m))
}

pub fn build_report(
    cfg: &EstimateConfig,
    cost: TrotterCost<'_>,
    calibrate_nmax: Option<f64>,
) -> Result<EstimateReport, EstimateError> {
    let spec = cfg.spec()?;
    let lambda = one_norm(&build_hamiltonian(&spec)?);
    let q = &cfg.qcels;
    // The optimal split does not depend on W̃; calibration needs it first.
    let probe = optimize_split(q.eps_targ, lambda, 1.0, q.delta, q.n_pairs, q.n_samples)?;
    let (w_tilde, w_calibrated) = match (calibrate_nmax, cfg.trotter.w_norm) {
        (Some(nmax), _) => {
            if !(nmax > 0.0) {
                return Err(EstimateError::Invalid(format!("calibration N_max = {nmax} must be positive")));
            }
            (calibrate_w(nmax, probe.eps_qcels_normalized, probe.eps_trotter_normalized, q.delta), true)
        }
        (None, Some(w)) if w > 0.0 => (normalize_w(w, lambda)?, false),
        (None, Some(w)) => return Err(EstimateError::Invalid(format!("trotter.w_norm = {w} must be positive"))),
        (None, None) => return Err(EstimateError::MissingW),
    };
    let split = optimize_split(q.eps_targ, lambda, w_tilde, q.delta, q.n_pairs, q.n_samples)?;
    let steps = &split.steps;
    let n_max = steps.n_max;

    let levels = split.params.levels;
    let dtau_tilde = split.params.tau(levels) / (2.0 * steps.per_level[levels - 1] as f64);
    let dtau = dtau_tilde * check_lambda(lambda)?;
    let rough = rough_trotter_clocks(spec.n);
    let pick = |t: f64| -> Result<usize, EstimateError> {
        match cfg.code.d_override {
            Some(d) => Ok(d),
            None => choose_distance(spec.n, circuit_clocks(n_max, t), cfg.code.p_phys, cfg.code.eps_logerr),
        }
    };
    let (d, t_trotter, source) = match cost {
        TrotterCost::Given(t) => (pick(t)?, t, TrotterSource::Given),
        TrotterCost::Rough => (pick(rough)?, rough, TrotterSource::Rough),
        TrotterCost::Simulate(sim) => {
            let d0 = pick(rough)?;
            let t0 = sim(&cfg.injection_for(d0)?, dtau).map_err(EstimateError::TrotterCost)?;
            let d1 = pick(t0)?;
            if d1 == d0 {
                (d0, t0, TrotterSource::Simulated)
            } else {
                let t1 = sim(&cfg.injection_for(d1)?, dtau).map_err(EstimateError::TrotterCost)?;
                (d1, t1, TrotterSource::Simulated)
            }
        }
    };
    let inj = cfg.injection_for(d)?;
    let circuits = hadamard_circuits(&split.params, &steps.per_level, cfg.code.p_phys, inj.k);
    let w_norm = w_tilde / check_lambda(lambda)?.powi(3);
    Ok(EstimateReport {
        n: spec.n,
        lambda,
        eps_targ: q.eps_targ,
        eps_qcels: split.eps_qcels,
        eps_trotter: split.eps_trotter,
        w_norm,
        w_tilde,
        w_calibrated,
        levels: split.params.levels,
        taus: split.params.taus(),
        dtau,
        steps_per_level: steps.per_level.clone(),
        n_total: steps.n_total.round() as u64,
        n_max: n_max.round() as u64,
        n_total_integer: steps.n_total_integer,
        d,
        k: inj.k,
        q_sizes: inj.q_sizes.clone(),
        t_trotter_rough: rough,
        t_trotter,
        t_trotter_source: source,
        pec_factor: pec_total_factor(&circuits, t_trotter),
        total_runtime_s: total_runtime(&circuits, q.n_samples, t_trotter, d),
        max_runtime_s: max_runtime(n_max, t_trotter, d),
        max_runtime_controlled_s: max_runtime_controlled(n_max, t_trotter, d),
        patches: patch_count(spec.n),
        n_qubit: n_qubits(spec.n, d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normalization() {
        assert_relative_eq!(normalize_eps(0.01, PI).unwrap(), 0.01);
        assert_relative_eq!(normalize_eps(0.00667, 64.0).unwrap(), 3.2741e-4, max_relative = 1e-4);
        assert_relative_eq!(normalize_w(1.0, 64.0).unwrap(), (PI / 64.0).powi(3));
        assert!(normalize_eps(1.0, 0.0).is_err());
    }

    #[test]
    fn steps_per_level_edges() {
        assert_eq!(trotter_steps_per_level(0.0, 1.0, 1.0), 1);
        assert_eq!(trotter_steps_per_level(2.0, 0.3, 0.3), 1);
    }

    #[test]
    fn qcels_params_identity() {
        let p = QcelsParams::new(0.1, 0.06, 5, 100).unwrap();
        assert_eq!(p.levels, 5);
        assert_relative_eq!(p.tau(5), 0.12, epsilon = 1e-12);
        assert_relative_eq!(p.t_max(), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn distance_values() {
        assert_relative_eq!(logical_error_rate(9, 1e-4), 9e-11, max_relative = 1e-9);
        assert_eq!(choose_distance(4, circuit_clocks(3397.0, 248.355), 1e-4, 0.01).unwrap(), 9);
        assert_eq!(choose_distance_for_ops(circuit_clocks(3397.0, 248.355), 1e-4, 0.01).unwrap(), 7);
        assert_eq!(choose_distance_for_ops(1e60, 1e-4, 0.01), Err(EstimateError::NoDistance));
    }

    #[test]
    fn pec_values() {
        assert_eq!(pec_factor(0.0, 1e-4, 5), 1.0);
        assert_relative_eq!(pec_factor(100.0, 1e-4, 5), 0.2513274f64.exp(), max_relative = 1e-6);
    }

    #[test]
    fn missing_w_is_infeasible() {
        let err = build_report(&EstimateConfig::default(), TrotterCost::Rough, None).unwrap_err();
        assert_eq!(err, EstimateError::MissingW);
        assert!(err.is_infeasible());
    }
}
