//! Multi-level QCELS phase estimation on synthetic Hadamard-test signals.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{EstimateError, QcelsParams};
use crate::rus::run_rng;

/// Points in the coarse grid of every fit.
pub const GRID_POINTS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum QcelsError {
    #[error("signal series is empty")]
    EmptySeries,
    #[error("invalid spectrum: {0}")]
    Spectrum(String),
    #[error("search interval [{0}, {1}] collapsed")]
    Collapse(f64, f64),
    #[error(transparent)]
    Params(#[from] EstimateError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpectrum {
    pub phases: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SyntheticSpectrum {
    pub fn new(phases: Vec<f64>, weights: Vec<f64>) -> Result<SyntheticSpectrum, QcelsError> {
        let s = SyntheticSpectrum { phases, weights };
        s.validate()?;
        Ok(s)
    }

    /// Dominant weight 0.8 at −0.5 with two minor phases.
    pub fn demo() -> SyntheticSpectrum {
        SyntheticSpectrum { phases: vec![-0.5, 0.2, 0.9], weights: vec![0.8, 0.1, 0.1] }
    }

    pub fn validate(&self) -> Result<(), QcelsError> {
        let bad = |m: String| Err(QcelsError::Spectrum(m));
        if self.phases.is_empty() || self.phases.len() != self.weights.len() {
            return bad(format!("{} phases but {} weights", self.phases.len(), self.weights.len()));
        }
        if let Some(p) = self.phases.iter().find(|p| !(-PI..PI).contains(*p)) {
            return bad(format!("phase {p} outside [-pi, pi)"));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return bad("weights must be non-negative".into());
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {sum}"));
        }
        Ok(())
    }

    /// Phase carrying the largest weight.
    pub fn dominant(&self) -> (f64, f64) {
        let i = (0..self.weights.len())
            .max_by(|&a, &b| self.weights[a].total_cmp(&self.weights[b]))
            .expect("validated spectrum is non-empty");
        (self.phases[i], self.weights[i])
    }

    /// Σ_i p_i·e^{−iλ_i t}.
    pub fn signal_at(&self, t: f64) -> Complex64 {
        self.phases.iter().zip(&self.weights).map(|(&l, &p)| p * Complex64::cis(-l * t)).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl SignalSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Z_n at t_n = n·τ for n = 0..N, with Gaussian noise of standard deviation
/// `noise_scale` added to the real and imaginary parts independently.
pub fn synth_signal_with<R: Rng>(
    spectrum: &SyntheticSpectrum,
    tau: f64,
    n: usize,
    noise_scale: f64,
    rng: &mut R,
) -> SignalSeries {
    let normal = (noise_scale > 0.0).then(|| Normal::new(0.0, noise_scale).expect("finite positive scale"));
    let mut s = SignalSeries::default();
    for k in 0..n {
        let t = k as f64 * tau;
        let mut z = spectrum.signal_at(t);
        if let Some(d) = &normal {
            z += Complex64::new(d.sample(rng), d.sample(rng));
        }
        s.times.push(t);
        s.values.push(z);
    }
    s
}

pub fn synth_signal(spectrum: &SyntheticSpectrum, tau: f64, n: usize, noise_scale: f64, seed: u64) -> SignalSeries {
    synth_signal_with(spectrum, tau, n, noise_scale, &mut run_rng(seed, 0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub r: Complex64,
    pub theta: f64,
    pub loss: f64,
}

/// S(θ) = Σ Z_n·e^{iθt_n} and its first two θ-derivatives.
fn moments(series: &SignalSeries, theta: f64) -> (Complex64, Complex64, Complex64) {
    let mut s = Complex64::new(0.0, 0.0);
    let mut s1 = s;
    let mut s2 = s;
    for (&t, &z) in series.times.iter().zip(&series.values) {
        let term = z * Complex64::cis(theta * t);
        s += term;
        s1 += Complex64::i() * t * term;
        s2 -= t * t * term;
    }
    (s, s1, s2)
}

/// Optimal amplitude r(θ) = (1/N)·Σ Z_n·e^{iθt_n}.
pub fn optimal_r(series: &SignalSeries, theta: f64) -> Complex64 {
    moments(series, theta).0 / series.len() as f64
}

/// L(r, θ) = (1/N)·Σ|Z_n − r·e^{−iθt_n}|².
pub fn loss(series: &SignalSeries, r: Complex64, theta: f64) -> f64 {
    let n = series.len() as f64;
    series
        .times
        .iter()
        .zip(&series.values)
        .map(|(&t, &z)| (z - r * Complex64::cis(-theta * t)).norm_sqr())
        .sum::<f64>()
        / n
}

/// Loss at the optimal r for each θ.
pub fn profile_loss(series: &SignalSeries, theta: f64) -> f64 {
    loss(series, optimal_r(series, theta), theta)
}

/// Minimize the profile loss on [lo, hi]: dense grid, then safeguarded
/// Newton on g(θ) = |S(θ)|² inside the neighbouring grid cells.
pub fn qcels_fit(series: &SignalSeries, lo: f64, hi: f64) -> Result<Fit, QcelsError> {
    if series.is_empty() {
        return Err(QcelsError::EmptySeries);
    }
    if !(hi > lo) || !(hi - lo > f64::EPSILON * hi.abs().max(lo.abs()).max(1.0)) {
        return Err(QcelsError::Collapse(lo, hi));
    }
    let g = |th: f64| moments(series, th).0.norm_sqr();
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid = |i: usize| if i + 1 == GRID_POINTS { hi } else { lo + i as f64 * step };
    let best = (0..GRID_POINTS)
        .max_by(|&a, &b| g(grid(a)).total_cmp(&g(grid(b))))
        .expect("grid is non-empty");
    let (mut a, mut b) = (grid(best.saturating_sub(1)), grid((best + 1).min(GRID_POINTS - 1)));
    let mut theta = grid(best);
    for _ in 0..100 {
        let (s, s1, s2) = moments(series, theta);
        let d1 = 2.0 * (s.conj() * s1).re;
        let d2 = 2.0 * (s1.norm_sqr() + (s.conj() * s2).re);
        if d1 > 0.0 {
            a = theta;
        } else {
            b = theta;
        }
        let newton = theta - d1 / d2;
        let next = if d2 < 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        let done = (next - theta).abs() <= 1e-15 * theta.abs().max(1.0);
        theta = next;
        if done || b - a <= 1e-15 * theta.abs().max(1.0) {
            break;
        }
    }
    if g(theta) < g(grid(best)) {
        theta = grid(best);
    }
    let r = optimal_r(series, theta);
    Ok(Fit { r, theta, loss: loss(series, r, theta) })
}

/// Wrap into [−π, π).
pub fn wrap_phase(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelFit {
    pub level: usize,
    pub tau: f64,
    pub lo: f64,
    pub hi: f64,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilevelResult {
    pub theta: f64,
    pub levels: Vec<LevelFit>,
}

/// Run all levels. `source(j, τ_j)` supplies the series of level j; the
/// search interval after level j is θ*_j ± π/(2τ_j), clipped to [−π, π].
pub fn multilevel_qcels(
    params: &QcelsParams,
    mut source: impl FnMut(usize, f64) -> SignalSeries,
) -> Result<MultilevelResult, QcelsError> {
    let (mut lo, mut hi) = (-PI, PI);
    let mut levels = Vec::with_capacity(params.levels);
    let mut theta = 0.0;
    for j in 1..=params.levels {
        let tau = params.tau(j);
        let fit = qcels_fit(&source(j, tau), lo, hi)?;
        theta = fit.theta;
        levels.push(LevelFit { level: j, tau, lo, hi, theta });
        let half = PI / (2.0 * tau);
        lo = (theta - half).max(-PI);
        hi = (theta + half).min(PI);
    }
    Ok(MultilevelResult { theta: wrap_phase(theta), levels })
}

/// Multi-level QCELS on a synthetic spectrum with sampling noise 1/√N_s.
pub fn multilevel_on_spectrum<R: Rng>(
    spectrum: &SyntheticSpectrum,
    params: &QcelsParams,
    rng: &mut R,
) -> Result<MultilevelResult, QcelsError> {
    let noise = if params.n_samples == 0 { 0.0 } else { 1.0 / (params.n_samples as f64).sqrt() };
    multilevel_qcels(params, |_, tau| synth_signal_with(spectrum, tau, params.n_pairs, noise, rng))
}

/// Phase error |θ* − λ₀| on the circle.
pub fn phase_error(theta: f64, target: f64) -> f64 {
    wrap_phase(theta - target).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub success_rate: f64,
    pub median_error: f64,
    pub trials: usize,
    pub seed: u64,
    pub eps: f64,
    pub params: QcelsParams,
    pub taus: Vec<f64>,
    pub spectrum: SyntheticSpectrum,
    pub errors: Vec<f64>,
}

/// Independent seeded trials (one RNG stream each), run in parallel.
pub fn run_demo(
    spectrum: &SyntheticSpectrum,
    eps: f64,
    delta: f64,
    n_pairs: usize,
    n_samples: usize,
    trials: usize,
    seed: u64,
) -> Result<DemoReport, QcelsError> {
    spectrum.validate()?;
    let params = QcelsParams::new(eps, delta, n_pairs, n_samples)?;
    let (target, _) = spectrum.dominant();
    let errors = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng: ChaCha8Rng = run_rng(seed, t);
            multilevel_on_spectrum(spectrum, &params, &mut rng).map(|r| phase_error(r.theta, target))
        })
        .collect::<Result<Vec<f64>, QcelsError>>()?;
    let successes = errors.iter().filter(|&&e| e < eps).count();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let median_error = match sorted.len() {
        0 => f64::NAN,
        m if m % 2 == 1 => sorted[m / 2],
        m => 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]),
    };
    Ok(DemoReport {
        success_rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
        median_error,
        trials,
        seed,
        eps,
        taus: params.taus(),
        params,
        spectrum: spectrum.clone(),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn noiseless_single_phase_is_exact() {
        let s = SyntheticSpectrum::new(vec![0.37], vec![1.0]).unwrap();
        let series = synth_signal(&s, 0.3, 5, 0.0, 1);
        assert!(series.values.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        let fit = qcels_fit(&series, -PI, PI).unwrap();
        assert!((fit.theta - 0.37).abs() < 1e-9, "{}", fit.theta);
        assert_relative_eq!(fit.r.norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn r_at_zero_is_mean() {
        let series = synth_signal(&SyntheticSpectrum::demo(), 0.2, 6, 0.1, 3);
        let mean: Complex64 = series.values.iter().sum::<Complex64>() / 6.0;
        assert!((optimal_r(&series, 0.0) - mean).norm() < 1e-15);
    }

    #[test]
    fn conjugate_pair_is_real() {
        let s = SyntheticSpectrum::new(vec![-0.4, 0.4], vec![0.5, 0.5]).unwrap();
        let series = synth_signal(&s, 0.7, 8, 0.0, 0);
        assert!(series.values.iter().all(|z| z.im.abs() < 1e-15));
    }

    #[test]
    fn noiseless_multilevel_recovers() {
        let s = SyntheticSpectrum::new(vec![1.234], vec![1.0]).unwrap();
        let params = QcelsParams::new(0.01, 0.06, 5, 0).unwrap();
        let res = multilevel_qcels(&params, |_, tau| synth_signal(&s, tau, 5, 0.0, 0)).unwrap();
        for l in &res.levels {
            assert!((l.theta - 1.234).abs() < 1e-9, "level {} gave {}", l.level, l.theta);
        }
    }

    #[test]
    fn wrap() {
        assert_relative_eq!(wrap_phase(PI), -PI);
        assert_relative_eq!(wrap_phase(3.0 * PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        assert!(qcels_fit(&SignalSeries::default(), 0.0, 1.0).is_err());
    }
}
