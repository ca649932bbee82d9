//! Second-order Trotter step compiled into lattice-surgery batches and a
//! clock-stamped timeline, plus the clock formula, the controlled-evolution
//! overhead and the serial baseline.
//!
//! Batch order of one plain step:
//! `ZZ, move, A1, A2, fSWAP×L, B1, B2 (merged), B1, fSWAP⁻¹×L, A2, A1, move, ZZ`.
//! Controlled mode adds a multi-target CNOT and CZ layer after the first
//! move and mirrors them before the second.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::{
    build_grid_with_order, validate, Clock, Conflict, Coord, PatchGrid, SurgeryKind, SurgeryOp, Timeline,
    DOWN_DATA_ROW, DOWN_ROUTING_ROW, ROWS, UP_DATA_ROW, UP_ROUTING_ROW,
};
use crate::hubbard::{
    build_hamiltonian, default_orderings, route_orderings, strings_anticommute, Edge, FSwapSchedule,
    HubbardError, HubbardSpec, OrderingPair, Pauli, PauliString, Site, TermKind,
};
use crate::injection::{Basis, InjectionConfig};
use crate::rus::{
    expected_trials, measurement_clocks, run_rng, run_with_table, InjectionMode, ProcessSpec, RusError,
    RusLayout, RusStats, SuccessTable,
};

#[derive(Debug, Error, PartialEq)]
pub enum TrotterError {
    #[error(transparent)]
    Hubbard(#[from] HubbardError),
    #[error(transparent)]
    Rus(#[from] RusError),
    #[error("compiled timeline fails validation: {0}")]
    Timeline(Conflict),
    #[error("time step must be finite, got {0}")]
    TimeStep(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    Plain,
    Controlled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    ZzRotationLayer,
    MoveLayer,
    XxyyBatch,
    FswapLayer,
    MultiCnotLayer,
    MultiCzLayer,
}

/// Which line ordering is current while a batch runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Line {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RusGroup {
    pub count: usize,
    pub basis: Basis,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub kind: BatchKind,
    pub label: String,
    /// Line positions `p` of the pairs `(p, p+1)` acted on (hopping pairs or
    /// fSWAP transpositions); empty for other kinds.
    pub pairs: Vec<usize>,
    pub line: Line,
    pub merged: bool,
    pub rus_groups: Vec<RusGroup>,
    pub fixed_clocks: Clock,
}

/// Rotation angles for one half step: |θ_zz| = u·Δτ/8, |θ_hop| = t·Δτ/4.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    pub theta_zz: f64,
    pub theta_hop: f64,
}

impl AngleSet {
    pub fn new(spec: &HubbardSpec, dtau: f64) -> AngleSet {
        AngleSet { theta_zz: spec.u.abs() * dtau / 8.0, theta_hop: spec.t.abs() * dtau / 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrotterSchedule {
    pub spec: HubbardSpec,
    pub mode: StepMode,
    pub dtau: f64,
    pub angles: AngleSet,
    pub pair: OrderingPair,
    pub routing: FSwapSchedule,
    pub batches: Vec<Batch>,
    pub timeline: Timeline,
}

const XXYY_FIXED: Clock = Clock::whole(9);

/// Duration used for RUS phases when no sampled value is supplied:
/// one injection clock plus ⟨K⟩_M measurement rounds, rounded up.
pub fn nominal_rus_clocks(group: &RusGroup) -> Clock {
    let k = expected_trials(group.count.max(1) as u32);
    Clock::ceil_f64(1.0 + measurement_clocks(group.basis) as f64 * k)
}

/// Compile with the default ordering pair and nominal RUS durations.
pub fn compile_step(spec: &HubbardSpec, dtau: f64, mode: StepMode) -> Result<TrotterSchedule, TrotterError> {
    let pair = default_orderings(spec.n)?;
    compile_step_with(spec, &pair, dtau, mode, &mut nominal_rus_clocks)
}

/// Compile one step; `rus_clocks` supplies the duration of every RUS group in
/// batch order (for example, draws from a simulation).
pub fn compile_step_with(
    spec: &HubbardSpec,
    pair: &OrderingPair,
    dtau: f64,
    mode: StepMode,
    rus_clocks: &mut dyn FnMut(&RusGroup) -> Clock,
) -> Result<TrotterSchedule, TrotterError> {
    spec.validate()?;
    if !dtau.is_finite() {
        return Err(TrotterError::TimeStep(dtau));
    }
    pair.validate()?;
    if pair.n != spec.n {
        return Err(HubbardError::InvalidPair(format!("pair is for n = {}, model has n = {}", pair.n, spec.n)).into());
    }
    let routing = route_orderings(pair);
    let angles = AngleSet::new(spec, dtau);
    let batches = batch_sequence(spec, pair, &routing, angles, mode);
    let mut schedule = TrotterSchedule {
        spec: *spec,
        mode,
        dtau,
        angles,
        pair: pair.clone(),
        routing,
        batches,
        timeline: Timeline::default(),
    };
    schedule.timeline = schedule.build_timeline(rus_clocks);
    validate(&schedule.timeline, &schedule.grid()).map_err(TrotterError::Timeline)?;
    Ok(schedule)
}

fn batch_sequence(
    spec: &HubbardSpec,
    pair: &OrderingPair,
    routing: &FSwapSchedule,
    angles: AngleSet,
    mode: StepMode,
) -> Vec<Batch> {
    let v = spec.sites();
    let plain = |kind, label: &str, fixed: Clock| Batch {
        kind,
        label: label.to_string(),
        pairs: Vec::new(),
        line: Line::A,
        merged: false,
        rus_groups: Vec::new(),
        fixed_clocks: fixed,
    };
    let zz = || {
        let mut b = plain(BatchKind::ZzRotationLayer, "zz", Clock::ZERO);
        b.rus_groups = vec![RusGroup { count: v, basis: Basis::Zz, theta: angles.theta_zz }];
        b
    };
    let hop = |label: &str, pairs: &Vec<usize>, line: Line, merged: bool| {
        let theta = if merged { 2.0 * angles.theta_hop } else { angles.theta_hop };
        let m = 2 * pairs.len();
        Batch {
            kind: BatchKind::XxyyBatch,
            label: label.to_string(),
            pairs: pairs.clone(),
            line,
            merged,
            rus_groups: vec![
                RusGroup { count: m, basis: Basis::Zz, theta },
                RusGroup { count: m, basis: Basis::Z, theta },
            ],
            fixed_clocks: XXYY_FIXED,
        }
    };
    let fswap = |label: String, layer: &Vec<usize>, line: Line| Batch {
        kind: BatchKind::FswapLayer,
        label,
        pairs: layer.clone(),
        line,
        merged: false,
        rus_groups: Vec::new(),
        fixed_clocks: Clock::whole(7),
    };
    let mv = || plain(BatchKind::MoveLayer, "move", Clock::whole(3));
    let cnot = || plain(BatchKind::MultiCnotLayer, "multi_cnot", Clock::whole(5));
    let cz = || plain(BatchKind::MultiCzLayer, "multi_cz", Clock::whole(4));

    let [a1, a2] = pair.sublayers_a();
    let [b1, b2] = pair.sublayers_b();
    let mut seq = vec![zz(), mv()];
    if mode == StepMode::Controlled {
        seq.extend([cnot(), cz()]);
    }
    seq.push(hop("A1", &a1, Line::A, false));
    seq.push(hop("A2", &a2, Line::A, false));
    for (i, layer) in routing.layers.iter().enumerate() {
        seq.push(fswap(format!("fswap {}", i + 1), layer, Line::A));
    }
    seq.push(hop("B1", &b1, Line::B, false));
    seq.push(hop("B2", &b2, Line::B, true));
    seq.push(hop("B1", &b1, Line::B, false));
    for (i, layer) in routing.layers.iter().enumerate().rev() {
        seq.push(fswap(format!("fswap {} inverse", i + 1), layer, Line::B));
    }
    seq.push(hop("A2", &a2, Line::A, false));
    seq.push(hop("A1", &a1, Line::A, false));
    if mode == StepMode::Controlled {
        seq.extend([cz(), cnot()]);
    }
    seq.extend([mv(), zz()]);
    seq
}

impl TrotterSchedule {
    pub fn sites(&self) -> usize {
        self.spec.sites()
    }

    /// Fabric at the start of the step; controlled mode adds the QPE ancilla.
    pub fn grid(&self) -> PatchGrid {
        build_grid_with_order(self.spec.n, &self.pair.order_a, self.mode == StepMode::Controlled)
    }

    pub fn fixed_clocks(&self) -> Clock {
        self.batches.iter().map(|b| b.fixed_clocks).sum()
    }

    pub fn fswap_layers(&self) -> usize {
        self.routing.depth()
    }

    /// All RUS groups in batch order.
    pub fn rus_groups(&self) -> Vec<RusGroup> {
        self.batches.iter().flat_map(|b| b.rus_groups.iter().copied()).collect()
    }

    /// Multiset of `(count, basis)` over the step's RUS groups.
    pub fn group_multiset(&self) -> BTreeMap<(usize, Basis), usize> {
        let mut m = BTreeMap::new();
        for g in self.rus_groups() {
            *m.entry((g.count, g.basis)).or_insert(0) += 1;
        }
        m
    }

    /// The line ordering in force for a batch.
    pub fn line_order(&self, line: Line) -> &[Site] {
        match line {
            Line::A => &self.pair.order_a,
            Line::B => &self.pair.order_b,
        }
    }

    /// Hopping edges executed per spin, weighted by angle multiplicity
    /// (a merged batch counts twice).
    pub fn executed_edges(&self) -> BTreeMap<Edge, u32> {
        let mut out = BTreeMap::new();
        for b in self.batches.iter().filter(|b| b.kind == BatchKind::XxyyBatch) {
            let order = self.line_order(b.line);
            for &p in &b.pairs {
                let (x, y) = (order[p], order[p + 1]);
                let e = (x.min(y), x.max(y));
                *out.entry(e).or_insert(0) += if b.merged { 2 } else { 1 };
            }
        }
        out
    }

    /// Total rotation angle applied to each hopping edge over one step.
    pub fn hopping_angles(&self) -> BTreeMap<Edge, f64> {
        let mut out = BTreeMap::new();
        for b in self.batches.iter().filter(|b| b.kind == BatchKind::XxyyBatch) {
            let order = self.line_order(b.line);
            for &p in &b.pairs {
                let (x, y) = (order[p], order[p + 1]);
                *out.entry((x.min(y), x.max(y))).or_insert(0.0) += b.rus_groups[0].theta;
            }
        }
        out
    }

    /// Total rotation angle applied to each on-site term over one step.
    pub fn onsite_angle(&self) -> f64 {
        self.batches
            .iter()
            .filter(|b| b.kind == BatchKind::ZzRotationLayer)
            .map(|b| b.rus_groups[0].theta)
            .sum()
    }

    fn build_timeline(&self, rus_clocks: &mut dyn FnMut(&RusGroup) -> Clock) -> Timeline {
        let v = self.sites();
        let mut tl = Timeline::default();
        let mut now = Clock::ZERO;
        let fixed = |k| SurgeryOp::fixed(k, Vec::new()).expect("cataloged").duration;
        let with = |kind: SurgeryKind, ps: Vec<Coord>| SurgeryOp::fixed(kind, ps).expect("cataloged");
        let anc = (DOWN_ROUTING_ROW, v);
        let order_a = &self.pair.order_a;
        for b in &self.batches {
            match b.kind {
                BatchKind::ZzRotationLayer => {
                    let dur = rus_clocks(&b.rus_groups[0]);
                    for c in 0..v {
                        let ps = (0..ROWS).map(|r| (r, c)).collect();
                        tl.push(now, SurgeryOp::sampled(SurgeryKind::RusZz, ps, dur));
                    }
                    now += dur;
                }
                BatchKind::MoveLayer => {
                    for c in 0..v {
                        tl.push(now, with(SurgeryKind::MoveLayer, vec![(UP_ROUTING_ROW, c), (DOWN_ROUTING_ROW, c), (DOWN_DATA_ROW, c)]));
                    }
                    now += b.fixed_clocks;
                }
                BatchKind::XxyyBatch => {
                    let t_zz = rus_clocks(&b.rus_groups[0]);
                    let t_z = rus_clocks(&b.rus_groups[1]);
                    for &p in &b.pairs {
                        for (d, r) in [(UP_DATA_ROW, UP_ROUTING_ROW), (DOWN_DATA_ROW, DOWN_ROUTING_ROW)] {
                            let quad = vec![(d, p), (d, p + 1), (r, p), (r, p + 1)];
                            let mut t = now;
                            tl.push(t, with(SurgeryKind::CnotNoMove, quad.clone()));
                            t += fixed(SurgeryKind::CnotNoMove);
                            tl.push(t, with(SurgeryKind::HadamardNoMove, vec![(d, p), (r, p)]));
                            t += fixed(SurgeryKind::HadamardNoMove);
                            tl.push(t, SurgeryOp::sampled(SurgeryKind::RusZz, quad.clone(), t_zz));
                            t += t_zz;
                            tl.push(t, SurgeryOp::sampled(SurgeryKind::RusZ, vec![(d, p), (r, p), (r, p + 1)], t_z));
                            t += t_z;
                            tl.push(t, with(SurgeryKind::HadamardNoMove, vec![(d, p), (r, p)]));
                            t += fixed(SurgeryKind::HadamardNoMove);
                            tl.push(t, with(SurgeryKind::Cnot, quad));
                        }
                    }
                    now += b.fixed_clocks + t_zz + t_z;
                }
                BatchKind::FswapLayer => {
                    for &p in &b.pairs {
                        for (d, r) in [(UP_DATA_ROW, UP_ROUTING_ROW), (DOWN_DATA_ROW, DOWN_ROUTING_ROW)] {
                            tl.push(now, with(SurgeryKind::Fswap, vec![(d, p), (d, p + 1), (r, p), (r, p + 1)]));
                        }
                    }
                    now += b.fixed_clocks;
                }
                BatchKind::MultiCnotLayer => {
                    let mut ps = vec![anc];
                    ps.extend((0..v).flat_map(|c| [(DOWN_ROUTING_ROW, c), (DOWN_DATA_ROW, c)]));
                    tl.push(now, with(SurgeryKind::MultiTargetCnotReduced, ps));
                    now += b.fixed_clocks;
                }
                BatchKind::MultiCzLayer => {
                    let odd: Vec<usize> = (0..v).filter(|&p| site_parity(order_a[p], self.spec.n) == 1).collect();
                    let mut up = vec![anc];
                    up.extend((0..v).flat_map(|c| [(DOWN_ROUTING_ROW, c), (UP_ROUTING_ROW, c)]));
                    up.extend(odd.iter().map(|&p| (UP_DATA_ROW, p)));
                    let mut down = vec![anc];
                    down.extend((0..v).map(|c| (DOWN_ROUTING_ROW, c)));
                    down.extend(odd.iter().map(|&p| (DOWN_DATA_ROW, p)));
                    let half = fixed(SurgeryKind::MultiTargetCz);
                    tl.push(now, with(SurgeryKind::MultiTargetCz, up));
                    tl.push(now + half, with(SurgeryKind::MultiTargetCz, down));
                    now += b.fixed_clocks;
                }
            }
        }
        tl
    }

    /// RUS layout of group `group` (index into `rus_groups` of batch `batch`).
    pub fn group_layout(&self, batch: usize, group: usize) -> Result<RusLayout, RusError> {
        let b = &self.batches[batch];
        let g = b.rus_groups[group];
        let v = self.sites();
        match b.kind {
            BatchKind::ZzRotationLayer => RusLayout::fabric(self.spec.n, v, Basis::Zz, g.theta),
            BatchKind::XxyyBatch => {
                let mut procs = Vec::new();
                for (d, r) in [(UP_DATA_ROW, UP_ROUTING_ROW), (DOWN_DATA_ROW, DOWN_ROUTING_ROW)] {
                    for &p in &b.pairs {
                        let targets = match g.basis {
                            Basis::Zz => vec![(d, p), (d, p + 1)],
                            Basis::Z => vec![(d, p)],
                        };
                        procs.push(ProcessSpec { targets, region: vec![(r, p), (r, p + 1)] });
                    }
                }
                let spare: Vec<Coord> = (0..v).flat_map(|c| [(UP_ROUTING_ROW, c), (DOWN_ROUTING_ROW, c)]).collect();
                RusLayout::new(ROWS, v, g.basis, g.theta, procs, spare)
            }
            _ => Err(RusError::Layout(format!("batch {} has no RUS groups", b.label))),
        }
    }
}

/// Parity (r + c) mod 2 of a row-major site.
pub fn site_parity(site: Site, n: usize) -> usize {
    (site / n + site % n) % 2
}

/// Monte Carlo of whole steps: every RUS group is simulated on its own
/// layout, in batch order, with one RNG stream per run. Returns the total
/// clocks (fixed + sampled) of each run.
pub fn simulate_step(
    schedule: &TrotterSchedule,
    cfg: &InjectionConfig,
    mode: InjectionMode,
    runs: usize,
    seed: u64,
) -> Result<RusStats, TrotterError> {
    cfg.validate().map_err(RusError::from)?;
    let mut jobs = Vec::new();
    for (bi, b) in schedule.batches.iter().enumerate() {
        for gi in 0..b.rus_groups.len() {
            let layout = schedule.group_layout(bi, gi)?;
            let table = SuccessTable::new(layout.theta, cfg)?;
            jobs.push((layout, table));
        }
    }
    let fixed = schedule.fixed_clocks();
    assert_eq!(fixed.halves() % 2, 0, "plain and controlled steps have whole-clock fixed parts");
    let fixed = (fixed.halves() / 2) as u32;
    let completions = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_rng(seed, run);
            let mut total = fixed;
            for (layout, table) in &jobs {
                total += run_with_table(layout, table, cfg.attempts_per_clock, mode, &mut rng)?;
            }
            Ok(total)
        })
        .collect::<Result<Vec<u32>, RusError>>()?;
    Ok(RusStats { completions })
}

/// 7·t(V−n, Z) + 7·t(V−n, ZZ) + 2·t(V, ZZ) + 14n + 55.
pub fn trotter_clocks(n: usize, t_rus: impl Fn(usize, Basis) -> f64) -> f64 {
    let v = n * n;
    7.0 * t_rus(v - n, Basis::Z) + 7.0 * t_rus(v - n, Basis::Zz) + 2.0 * t_rus(v, Basis::Zz) + 14.0 * n as f64 + 55.0
}

/// Rough RUS phase estimate 2⟨K⟩_M (one injection clock and one measurement
/// clock per trial).
pub fn rough_rus_clocks(m: usize) -> f64 {
    2.0 * expected_trials(m as u32)
}

/// Controlled-evolution overhead for T steps: 16 + 18T.
pub fn controlled_overhead(steps: u64) -> u64 {
    16 + 18 * steps
}

/// Serial compilation baseline: 154V − 152n.
pub fn serial_clocks(n: usize) -> u64 {
    let v = (n * n) as u64;
    154 * v - 152 * n as u64
}

/// Supports of the two anticommuting control operators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSupports {
    /// Sites with odd r + c; K⁰ is Z on both spins there.
    pub k0_sites: Vec<Site>,
    /// All sites; K¹ is X on the spin-down orbital there.
    pub k1_sites: Vec<Site>,
}

pub fn anticommuting_controls(n: usize) -> ControlSupports {
    let v = n * n;
    ControlSupports {
        k0_sites: (0..v).filter(|&s| site_parity(s, n) == 1).collect(),
        k1_sites: (0..v).collect(),
    }
}

impl ControlSupports {
    /// Pauli strings of K⁰ and K¹ under the row-major Jordan-Wigner line.
    pub fn strings(&self, n: usize) -> (PauliString, PauliString) {
        let v = n * n;
        let mut k0 = PauliString::new();
        for &s in &self.k0_sites {
            k0.insert(s, Pauli::Z);
            k0.insert(v + s, Pauli::Z);
        }
        let k1 = self.k1_sites.iter().map(|&s| (v + s, Pauli::X)).collect();
        (k0, k1)
    }
}

/// True if K⁰ anticommutes with every hopping term and K¹ with every on-site
/// term of the model.
pub fn controls_anticommute(spec: &HubbardSpec) -> Result<bool, TrotterError> {
    let h = build_hamiltonian(spec)?;
    let (k0, k1) = anticommuting_controls(spec.n).strings(spec.n);
    Ok(h.terms.iter().all(|t| match t.kind {
        TermKind::HoppingXx | TermKind::HoppingYy => strings_anticommute(&t.paulis, &k0),
        TermKind::OnsiteZz => strings_anticommute(&t.paulis, &k1),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(n: usize) -> TrotterSchedule {
        compile_step(&HubbardSpec::standard(n).unwrap(), 0.05, StepMode::Plain).unwrap()
    }

    #[test]
    fn four_by_four_structure() {
        let s = plain(4);
        let ms = s.group_multiset();
        assert_eq!(ms[&(12, Basis::Z)], 7);
        assert_eq!(ms[&(12, Basis::Zz)], 7);
        assert_eq!(ms[&(16, Basis::Zz)], 2);
        assert_eq!(s.fixed_clocks(), Clock::whole(111));
    }

    #[test]
    fn two_by_two_fixed() {
        assert_eq!(plain(2).fixed_clocks(), Clock::whole(83));
    }

    #[test]
    fn controlled_adds_eighteen() {
        let spec = HubbardSpec::standard(4).unwrap();
        let c = compile_step(&spec, 0.05, StepMode::Controlled).unwrap();
        assert_eq!(c.fixed_clocks(), Clock::whole(129));
        assert_eq!(c.group_multiset(), plain(4).group_multiset());
    }

    #[test]
    fn formula_values() {
        assert_eq!(trotter_clocks(4, |_, _| 0.0), 111.0);
        assert_eq!(controlled_overhead(0), 16);
        assert_eq!(controlled_overhead(1), 34);
        assert_eq!(controlled_overhead(3397), 61162);
        assert_eq!(serial_clocks(4), 1856);
        assert_eq!(serial_clocks(10), 13880);
        let rough = trotter_clocks(4, |m, _| rough_rus_clocks(m));
        assert!((rough - 271.864_563_650_481_95).abs() < 1e-9, "{rough}");
    }

    #[test]
    fn control_supports() {
        assert_eq!(anticommuting_controls(2).k0_sites.len(), 2);
        assert_eq!(anticommuting_controls(2).k1_sites.len(), 4);
        assert_eq!(anticommuting_controls(4).k0_sites.len(), 8);
        assert!(controls_anticommute(&HubbardSpec::standard(4).unwrap()).unwrap());
    }

    #[test]
    fn every_edge_twice() {
        let s = plain(5);
        let e = s.executed_edges();
        assert_eq!(e.len(), 2 * 5 * 4);
        assert!(e.values().all(|&w| w == 2));
    }
}
