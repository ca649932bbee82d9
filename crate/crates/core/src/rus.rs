//! Parallel repeat-until-success (RUS) rotations: the analytic distribution
//! of the slowest of M processes, and a clock-by-clock Monte Carlo of M
//! processes sharing the patch fabric for ancilla injection.
//!
//! Each trial succeeds with probability 1/2; a failed trial doubles the
//! angle still to be applied. In adaptive mode a process keeps injecting the
//! next trial's ancilla while it measures, and the injection regions of
//! finished processes are redistributed to the ones still running.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::{Coord, DOWN_DATA_ROW, DOWN_ROUTING_ROW, ROWS, UP_DATA_ROW, UP_ROUTING_ROW};
use crate::injection::{angle_success_prob, clifford_reduce, Basis, InjectionConfig, InjectionError, PassRate};

#[derive(Debug, Error, PartialEq)]
pub enum RusError {
    #[error("layout cannot host the processes: {0}")]
    Layout(String),
    #[error(transparent)]
    Injection(#[from] InjectionError),
    #[error("simulation made no progress within {0} clocks (injection never succeeds?)")]
    Stalled(u32),
}

/// P_K^M = (1-2^{-K})^M - (1-2^{-K+1})^M: the slowest of M processes ends at trial K.
pub fn prob_finish_at(k: u32, m: u32) -> f64 {
    assert!(k >= 1 && m >= 1, "K and M start at 1");
    cdf_max_trials(k, m) - cdf_max_trials(k - 1, m)
}

/// P(max of M geometric(1/2) trial counts ≤ K) = (1-2^{-K})^M.
fn cdf_max_trials(k: u32, m: u32) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let x = 0.5f64.powi(k as i32);
    if m == 1 {
        1.0 - x
    } else {
        (m as f64 * (-x).ln_1p()).exp()
    }
}

/// ⟨K⟩_M, summed as Σ_{K≥0} P(max > K) until the terms no longer change
/// the total.
pub fn expected_trials(m: u32) -> f64 {
    assert!(m >= 1, "M starts at 1");
    let mut total = 0.0;
    let mut k = 0u32;
    loop {
        let tail = if k == 0 {
            1.0
        } else if m == 1 {
            0.5f64.powi(k as i32)
        } else {
            -(m as f64 * (-(0.5f64.powi(k as i32))).ln_1p()).exp_m1()
        };
        if k > 2 && total + tail == total {
            return total;
        }
        total += tail;
        k += 1;
    }
}

/// Draw the trial count of the slowest of M processes by inverting the CDF.
pub fn sample_max_trials<R: Rng>(m: u32, rng: &mut R) -> u32 {
    let u: f64 = rng.gen();
    let mut k = 1;
    while cdf_max_trials(k, m) < u {
        k += 1;
    }
    k
}

/// Joint-measurement clocks per trial.
pub fn measurement_clocks(basis: Basis) -> u32 {
    match basis {
        Basis::Z => 1,
        Basis::Zz => 2,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionMode {
    Naive,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cell {
    Blocked,
    Free,
    Region(usize),
}

/// Occupancy of a rectangular patch grid for injection bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionArena {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
}

impl InjectionArena {
    pub fn new(rows: usize, cols: usize) -> Self {
        InjectionArena { rows, cols, cells: vec![Cell::Blocked; rows * cols] }
    }

    fn idx(&self, (r, c): Coord) -> Option<usize> {
        (r < self.rows && c < self.cols).then_some(r * self.cols + c)
    }

    pub fn set_free(&mut self, c: Coord) {
        if let Some(i) = self.idx(c) {
            self.cells[i] = Cell::Free;
        }
    }

    pub fn is_free(&self, c: Coord) -> bool {
        self.idx(c).is_some_and(|i| self.cells[i] == Cell::Free)
    }

    pub fn owner(&self, c: Coord) -> Option<usize> {
        match self.idx(c).map(|i| self.cells[i]) {
            Some(Cell::Region(p)) => Some(p),
            _ => None,
        }
    }

    fn assign(&mut self, c: Coord, process: usize) {
        let i = self.idx(c).expect("in bounds");
        self.cells[i] = Cell::Region(process);
    }

    /// Return a finished process's region to the free pool.
    pub fn release(&mut self, process: usize) {
        for cell in &mut self.cells {
            if *cell == Cell::Region(process) {
                *cell = Cell::Free;
            }
        }
    }

    pub fn region(&self, process: usize) -> Vec<Coord> {
        (0..self.cells.len())
            .filter(|&i| self.cells[i] == Cell::Region(process))
            .map(|i| (i / self.cols, i % self.cols))
            .collect()
    }

    pub fn region_sizes(&self, processes: usize) -> Vec<usize> {
        let mut sizes = vec![0; processes];
        for cell in &self.cells {
            if let Cell::Region(p) = *cell {
                if p < processes {
                    sizes[p] += 1;
                }
            }
        }
        sizes
    }

    fn neighbor_indices(&self, i: usize) -> impl Iterator<Item = usize> {
        let (r, c, rows, cols) = (i / self.cols, i % self.cols, self.rows, self.cols);
        [
            (r > 0).then(|| i - cols),
            (r + 1 < rows).then(|| i + cols),
            (c > 0).then(|| i - 1),
            (c + 1 < cols).then(|| i + 1),
        ]
        .into_iter()
        .flatten()
    }
}

/// Grow the regions of active processes over free patches, one ring per
/// step, until nothing adjacent is free. A patch reached by several regions
/// in the same step goes to the smaller region, then to the lower id.
pub fn update_injection_regions(arena: &mut InjectionArena, active: &[bool]) {
    loop {
        let sizes = arena.region_sizes(active.len());
        let mut claims: Vec<(usize, usize)> = Vec::new();
        for i in 0..arena.cells.len() {
            if arena.cells[i] != Cell::Free {
                continue;
            }
            let winner = arena
                .neighbor_indices(i)
                .filter_map(|j| match arena.cells[j] {
                    Cell::Region(p) if active.get(p).copied().unwrap_or(false) => Some(p),
                    _ => None,
                })
                .min_by_key(|&p| (sizes[p], p));
            if let Some(p) = winner {
                claims.push((i, p));
            }
        }
        if claims.is_empty() {
            return;
        }
        for (i, p) in claims {
            arena.cells[i] = Cell::Region(p);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub targets: Vec<Coord>,
    pub region: Vec<Coord>,
}

/// M processes placed on a patch grid with their initial injection regions.
#[derive(Clone, Debug, PartialEq)]
pub struct RusLayout {
    pub basis: Basis,
    pub theta: f64,
    pub processes: Vec<ProcessSpec>,
    arena: InjectionArena,
}

impl RusLayout {
    /// Build and check a layout. `spare` lists additional free patches that
    /// regions may grow into.
    pub fn new(
        rows: usize,
        cols: usize,
        basis: Basis,
        theta: f64,
        processes: Vec<ProcessSpec>,
        spare: impl IntoIterator<Item = Coord>,
    ) -> Result<RusLayout, RusError> {
        let bad = |m: String| Err(RusError::Layout(m));
        if processes.is_empty() {
            return bad("no processes".into());
        }
        let mut arena = InjectionArena::new(rows, cols);
        let mut taken = std::collections::BTreeSet::new();
        let want = match basis {
            Basis::Z => 1,
            Basis::Zz => 2,
        };
        for (id, p) in processes.iter().enumerate() {
            if p.targets.len() != want {
                return bad(format!("process {id} has {} targets, {basis:?} needs {want}", p.targets.len()));
            }
            if p.region.is_empty() {
                return bad(format!("process {id} has an empty injection region"));
            }
            for &c in p.targets.iter().chain(&p.region) {
                if arena.idx(c).is_none() {
                    return bad(format!("process {id} uses {c:?} outside the {rows}x{cols} grid"));
                }
                if !taken.insert(c) {
                    return bad(format!("patch {c:?} used twice"));
                }
            }
            let touches = p.region.iter().any(|r| {
                p.targets.iter().any(|t| t.0.abs_diff(r.0) + t.1.abs_diff(r.1) == 1)
            });
            if !touches {
                return bad(format!("process {id} region is not adjacent to its targets"));
            }
            for &c in &p.region {
                arena.assign(c, id);
            }
        }
        for c in spare {
            if arena.idx(c).is_some() && !taken.contains(&c) {
                arena.set_free(c);
            }
        }
        Ok(RusLayout { basis, theta, processes, arena })
    }

    /// Standard placement on the 4-row fabric of an n×n model.
    ///
    /// Z: targets fill the top data row then the bottom one, each fed by the
    /// routing patch next to it. ZZ: target pairs are the vertically adjacent
    /// spin-up/spin-down patches of one column, fed by the two patches below.
    pub fn fabric(n: usize, m: usize, basis: Basis, theta: f64) -> Result<RusLayout, RusError> {
        let cols = n * n;
        let capacity = match basis {
            Basis::Z => 2 * cols,
            Basis::Zz => cols,
        };
        if m > capacity {
            return Err(RusError::Layout(format!(
                "{m} {basis:?} processes exceed the capacity {capacity} of the n = {n} fabric"
            )));
        }
        let mut processes = Vec::with_capacity(m);
        for i in 0..m {
            processes.push(match basis {
                Basis::Z if i < cols => ProcessSpec { targets: vec![(UP_DATA_ROW, i)], region: vec![(UP_ROUTING_ROW, i)] },
                Basis::Z => {
                    let c = i - cols;
                    ProcessSpec { targets: vec![(DOWN_DATA_ROW, c)], region: vec![(DOWN_ROUTING_ROW, c)] }
                }
                Basis::Zz => ProcessSpec {
                    targets: vec![(UP_DATA_ROW, i), (UP_ROUTING_ROW, i)],
                    region: vec![(DOWN_ROUTING_ROW, i), (DOWN_DATA_ROW, i)],
                },
            });
        }
        let spare: Vec<Coord> = match basis {
            Basis::Z => (0..cols).flat_map(|c| [(UP_ROUTING_ROW, c), (DOWN_ROUTING_ROW, c)]).collect(),
            Basis::Zz => (m..cols).flat_map(|c| [(DOWN_ROUTING_ROW, c), (DOWN_DATA_ROW, c)]).collect(),
        };
        RusLayout::new(ROWS, cols, basis, theta, processes, spare)
    }

    pub fn len(&self) -> usize {
        self.processes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.processes.is_empty()
    }

    pub fn arena(&self) -> &InjectionArena {
        &self.arena
    }
}

/// Smallest square fabric (n ≥ 2) that fits M processes of the basis.
pub fn fabric_side_for(m: usize, basis: Basis) -> usize {
    let per_col = match basis {
        Basis::Z => 2,
        Basis::Zz => 1,
    };
    let mut n = 2;
    while per_col * n * n < m {
        n += 1;
    }
    n
}

/// Per-clock injection success at trial K = 1, 2, …, precomputed. Angles
/// beyond π/4 are reduced by Clifford multiples of π/2.
pub(crate) struct SuccessTable {
    per_attempt: Vec<f64>,
}

impl SuccessTable {
    const DEPTH: usize = 128;

    pub(crate) fn new(theta: f64, cfg: &InjectionConfig) -> Result<SuccessTable, RusError> {
        let mut per_attempt = Vec::with_capacity(Self::DEPTH);
        let mut angle = clifford_reduce(theta);
        for _ in 0..Self::DEPTH {
            per_attempt.push(angle_success_prob(angle, cfg)?);
            angle = clifford_reduce(2.0 * angle);
        }
        Ok(SuccessTable { per_attempt })
    }

    /// Success probability of one clock of `attempts` tries at trial `k`.
    fn per_clock(&self, k: u32, attempts: u32) -> f64 {
        let p = self.per_attempt[(k as usize - 1).min(Self::DEPTH - 1)];
        1.0 - (1.0 - p).powi(attempts as i32)
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Proc {
    trial: u32,
    measuring_left: u32,
    ancilla_ready: bool,
}

/// Clock ceiling for a single run before declaring it stalled.
pub const MAX_CLOCKS: u32 = 10_000_000;

/// Run one Monte Carlo realization; returns the clock at which the last
/// process completes.
pub fn run_layout<R: Rng>(
    layout: &RusLayout,
    cfg: &InjectionConfig,
    mode: InjectionMode,
    rng: &mut R,
) -> Result<u32, RusError> {
    let table = SuccessTable::new(layout.theta, cfg)?;
    run_with_table(layout, &table, cfg.attempts_per_clock, mode, rng)
}

pub(crate) fn run_with_table<R: Rng>(
    layout: &RusLayout,
    table: &SuccessTable,
    attempts_per_clock: u32,
    mode: InjectionMode,
    rng: &mut R,
) -> Result<u32, RusError> {
    let np = layout.len();
    let adaptive = mode == InjectionMode::Adaptive;
    let dur = measurement_clocks(layout.basis);
    let mut arena = layout.arena.clone();
    let mut active = vec![true; np];
    if adaptive {
        update_injection_regions(&mut arena, &active);
    }
    let mut sizes = arena.region_sizes(np);
    let mut procs = vec![Proc { trial: 1, ..Proc::default() }; np];
    let mut remaining = np;
    let mut clock = 0u32;
    let mut finished = Vec::new();
    while remaining > 0 {
        clock += 1;
        if clock > MAX_CLOCKS {
            return Err(RusError::Stalled(MAX_CLOCKS));
        }
        for i in 0..np {
            if !active[i] {
                continue;
            }
            let attempts = sizes[i] as u32 * attempts_per_clock;
            let p = &mut procs[i];
            if p.measuring_left == 0 {
                if p.ancilla_ready {
                    p.ancilla_ready = false;
                    p.measuring_left = dur;
                } else {
                    p.ancilla_ready = rng.gen::<f64>() < table.per_clock(p.trial, attempts);
                    continue;
                }
            }
            if adaptive && !p.ancilla_ready {
                p.ancilla_ready = rng.gen::<f64>() < table.per_clock(p.trial + 1, attempts);
            }
            p.measuring_left -= 1;
            if p.measuring_left == 0 {
                if rng.gen::<bool>() {
                    finished.push(i);
                } else {
                    p.trial += 1;
                }
            }
        }
        if !finished.is_empty() {
            for &i in &finished {
                active[i] = false;
                arena.release(i);
            }
            remaining -= finished.len();
            finished.clear();
            if adaptive {
                update_injection_regions(&mut arena, &active);
            }
            sizes = arena.region_sizes(np);
        }
    }
    Ok(clock)
}

/// RNG for run `run` of a seeded batch; independent of thread scheduling.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Completion clock of every run, in run order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RusStats {
    pub completions: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RusSummary {
    pub mean: f64,
    pub p50: u32,
    pub p95: u32,
    pub max: u32,
    pub runs: usize,
    pub seed: u64,
}

impl RusStats {
    pub fn runs(&self) -> usize {
        self.completions.len()
    }

    pub fn mean(&self) -> f64 {
        if self.completions.is_empty() {
            return 0.0;
        }
        self.completions.iter().map(|&c| c as f64).sum::<f64>() / self.completions.len() as f64
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        let n = self.completions.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let m = self.mean();
        let var = self.completions.iter().map(|&c| (c as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }

    pub fn max(&self) -> u32 {
        self.completions.iter().copied().max().unwrap_or(0)
    }

    /// Nearest-rank percentile, `q` in (0, 1].
    pub fn percentile(&self, q: f64) -> u32 {
        if self.completions.is_empty() {
            return 0;
        }
        let mut sorted = self.completions.clone();
        sorted.sort_unstable();
        let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        sorted[rank - 1]
    }

    pub fn histogram(&self) -> BTreeMap<u32, u64> {
        let mut h = BTreeMap::new();
        for &c in &self.completions {
            *h.entry(c).or_insert(0) += 1;
        }
        h
    }

    /// Concatenate runs; associative.
    pub fn merge(mut self, other: RusStats) -> RusStats {
        self.completions.extend(other.completions);
        self
    }

    pub fn summary(&self, seed: u64) -> RusSummary {
        RusSummary {
            mean: self.mean(),
            p50: self.percentile(0.5),
            p95: self.percentile(0.95),
            max: self.max(),
            runs: self.runs(),
            seed,
        }
    }
}

/// Monte Carlo over `runs` independent realizations of a layout. Runs are
/// spread over the current rayon pool; results are identical for any
/// thread count.
pub fn simulate_layout(
    layout: &RusLayout,
    cfg: &InjectionConfig,
    mode: InjectionMode,
    runs: usize,
    seed: u64,
) -> Result<RusStats, RusError> {
    cfg.validate()?;
    let table = SuccessTable::new(layout.theta, cfg)?;
    let completions = (0..runs as u64)
        .into_par_iter()
        .map(|run| run_with_table(layout, &table, cfg.attempts_per_clock, mode, &mut run_rng(seed, run)))
        .collect::<Result<Vec<u32>, RusError>>()?;
    Ok(RusStats { completions })
}

/// Constant pass rate at which `mode` has mean completion `target` on a
/// layout, by bisection in log space. Common random numbers (same seed at
/// every probe) keep the estimated mean monotone in the rate.
pub fn calibrate_pass_rate(
    layout: &RusLayout,
    cfg: &InjectionConfig,
    mode: InjectionMode,
    target: f64,
    runs: usize,
    seed: u64,
) -> Result<f64, RusError> {
    let mean_at = |rate: f64| -> Result<f64, RusError> {
        let mut c = cfg.clone();
        c.p_pass = PassRate::Constant(rate);
        Ok(simulate_layout(layout, &c, mode, runs, seed)?.mean())
    };
    let (mut lo, mut hi) = (1e-4f64.ln(), 0.0f64);
    if mean_at(1.0)? > target {
        return Err(RusError::Layout(format!("target mean {target} is below the mean at pass rate 1")));
    }
    if mean_at(lo.exp())? < target {
        return Err(RusError::Layout(format!("target mean {target} needs a pass rate below 1e-4")));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid.exp())? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// M parallel processes on the smallest fabric that holds them.
pub fn simulate_parallel_rus(
    m: usize,
    basis: Basis,
    theta: f64,
    cfg: &InjectionConfig,
    mode: InjectionMode,
    runs: usize,
    seed: u64,
) -> Result<RusStats, RusError> {
    if m == 0 {
        return Err(RusError::Layout("M must be at least 1".into()));
    }
    let layout = RusLayout::fabric(fabric_side_for(m, basis), m, basis, theta)?;
    simulate_layout(&layout, cfg, mode, runs, seed)
}
