//! Logical-patch fabric: a 4-row grid (data, routing, routing, data), the
//! lattice-surgery cost catalog, and clock-stamped timelines with conflict
//! validation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::{self, Write};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hubbard::{Site, Spin};

/// Time in lattice-surgery clocks, stored as an exact count of half clocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clock(i64);

impl Clock {
    pub const ZERO: Clock = Clock(0);

    pub const fn from_halves(halves: i64) -> Clock {
        Clock(halves)
    }

    pub const fn whole(clocks: i64) -> Clock {
        Clock(2 * clocks)
    }

    pub fn halves(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// Smallest half-clock value not below `x`.
    pub fn ceil_f64(x: f64) -> Clock {
        Clock((2.0 * x - 1e-9).ceil() as i64)
    }

    /// Exact conversion; `None` unless `x` is a multiple of 0.5.
    pub fn try_from_f64(x: f64) -> Option<Clock> {
        let h = 2.0 * x;
        (h.is_finite() && h.fract() == 0.0 && h.abs() < 9e15).then_some(Clock(h as i64))
    }
}

impl Add for Clock {
    type Output = Clock;
    fn add(self, o: Clock) -> Clock {
        Clock(self.0 + o.0)
    }
}

impl AddAssign for Clock {
    fn add_assign(&mut self, o: Clock) {
        self.0 += o.0;
    }
}

impl Sub for Clock {
    type Output = Clock;
    fn sub(self, o: Clock) -> Clock {
        Clock(self.0 - o.0)
    }
}

impl Mul<i64> for Clock {
    type Output = Clock;
    fn mul(self, k: i64) -> Clock {
        Clock(self.0 * k)
    }
}

impl Sum for Clock {
    fn sum<I: Iterator<Item = Clock>>(iter: I) -> Clock {
        iter.fold(Clock::ZERO, Add::add)
    }
}

impl fmt::Display for Clock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}.5", self.0 / 2)
        }
    }
}

impl Serialize for Clock {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 % 2 == 0 {
            s.serialize_i64(self.0 / 2)
        } else {
            s.serialize_f64(self.as_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Clock {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Clock, D::Error> {
        let x = f64::deserialize(d)?;
        Clock::try_from_f64(x)
            .ok_or_else(|| serde::de::Error::custom(format!("{x} is not a multiple of 0.5 clocks")))
    }
}

/// Grid coordinate `(row, col)`.
pub type Coord = (usize, usize);

pub const ROWS: usize = 4;
pub const UP_DATA_ROW: usize = 0;
pub const UP_ROUTING_ROW: usize = 1;
pub const DOWN_ROUTING_ROW: usize = 2;
pub const DOWN_DATA_ROW: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Data,
    Routing,
    QpeAncilla,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupant {
    Orbital { site: Site, spin: Spin },
    Ancilla,
    Injection { process: usize },
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub coord: Coord,
    pub role: Role,
    pub occupant: Occupant,
    pub busy_until: Clock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub n: usize,
    pub cols: usize,
    pub cells: BTreeMap<Coord, Patch>,
    pub qpe_ancilla: Option<Coord>,
}

/// Identity line ordering for [`build_grid`].
pub fn build_grid(n: usize, with_qpe_ancilla: bool) -> PatchGrid {
    let order: Vec<Site> = (0..n * n).collect();
    build_grid_with_order(n, &order, with_qpe_ancilla)
}

/// Grid with the site at line position `p` in column `p`; spin-up in the
/// top data row and spin-down directly below it in the upper routing row,
/// as needed for the on-site ZZ layer. The optional QPE ancilla sits at the
/// right end of the lower routing row.
pub fn build_grid_with_order(n: usize, order: &[Site], with_qpe_ancilla: bool) -> PatchGrid {
    assert!(n >= 2, "lattice side must be at least 2");
    let cols = n * n;
    assert_eq!(order.len(), cols, "ordering length must equal n²");
    let mut cells = BTreeMap::new();
    for row in 0..ROWS {
        let role = if row == UP_DATA_ROW || row == DOWN_DATA_ROW { Role::Data } else { Role::Routing };
        for col in 0..cols {
            let occupant = match row {
                UP_DATA_ROW => Occupant::Orbital { site: order[col], spin: Spin::Up },
                UP_ROUTING_ROW => Occupant::Orbital { site: order[col], spin: Spin::Down },
                _ => Occupant::Free,
            };
            cells.insert((row, col), Patch { coord: (row, col), role, occupant, busy_until: Clock::ZERO });
        }
    }
    let qpe_ancilla = with_qpe_ancilla.then_some((DOWN_ROUTING_ROW, cols));
    if let Some(c) = qpe_ancilla {
        cells.insert(c, Patch { coord: c, role: Role::QpeAncilla, occupant: Occupant::Ancilla, busy_until: Clock::ZERO });
    }
    PatchGrid { n, cols, cells, qpe_ancilla }
}

impl PatchGrid {
    pub fn patch_count(&self) -> usize {
        self.cells.len()
    }

    pub fn contains(&self, c: Coord) -> bool {
        self.cells.contains_key(&c)
    }

    pub fn neighbors(&self, (r, c): Coord) -> impl Iterator<Item = Coord> + '_ {
        let cand = [
            r.checked_sub(1).map(|r| (r, c)),
            Some((r + 1, c)),
            c.checked_sub(1).map(|c| (r, c)),
            Some((r, c + 1)),
        ];
        cand.into_iter().flatten().filter(|x| self.contains(*x))
    }

    pub fn data_occupied(&self) -> usize {
        self.cells
            .values()
            .filter(|p| matches!(p.occupant, Occupant::Orbital { .. }))
            .count()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FabricError {
    #[error("unknown surgery kind `{0}`")]
    UnknownKind(String),
    #[error("`{0}` has no fixed catalog cost (stochastic duration)")]
    Stochastic(SurgeryKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurgeryKind {
    Hadamard,
    HadamardNoMove,
    Cnot,
    CnotNoMove,
    Cz,
    SGate,
    MultiTargetCnot,
    MultiTargetCnotReduced,
    MultiTargetCz,
    Fswap,
    MoveLayer,
    ZzRotationTrial,
    JointMeasurement,
    /// A whole repeat-until-success Z-rotation phase; duration is sampled.
    RusZ,
    /// A whole repeat-until-success ZZ-rotation phase; duration is sampled.
    RusZz,
}

/// Catalog of fixed costs in half clocks; `None` marks sampled durations.
pub const CATALOG: [(SurgeryKind, &str, Option<i64>); 15] = [
    (SurgeryKind::Hadamard, "hadamard", Some(6)),
    (SurgeryKind::HadamardNoMove, "hadamard_no_move", Some(4)),
    (SurgeryKind::Cnot, "cnot", Some(6)),
    (SurgeryKind::CnotNoMove, "cnot_no_move", Some(4)),
    (SurgeryKind::Cz, "cz", Some(8)),
    (SurgeryKind::SGate, "s_gate", Some(3)),
    (SurgeryKind::MultiTargetCnot, "multi_target_cnot", Some(16)),
    (SurgeryKind::MultiTargetCnotReduced, "multi_target_cnot_reduced", Some(10)),
    (SurgeryKind::MultiTargetCz, "multi_target_cz", Some(4)),
    (SurgeryKind::Fswap, "fswap", Some(14)),
    (SurgeryKind::MoveLayer, "move_layer", Some(6)),
    (SurgeryKind::ZzRotationTrial, "zz_rotation_trial", Some(4)),
    (SurgeryKind::JointMeasurement, "joint_measurement", Some(2)),
    (SurgeryKind::RusZ, "rus_z", None),
    (SurgeryKind::RusZz, "rus_zz", None),
];

impl SurgeryKind {
    pub fn name(self) -> &'static str {
        CATALOG.iter().find(|e| e.0 == self).map(|e| e.1).expect("every kind is cataloged")
    }

    pub fn is_stochastic(self) -> bool {
        catalog_cost(self).is_err()
    }
}

impl fmt::Display for SurgeryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SurgeryKind {
    type Err = FabricError;
    fn from_str(s: &str) -> Result<Self, FabricError> {
        CATALOG
            .iter()
            .find(|e| e.1 == s)
            .map(|e| e.0)
            .ok_or_else(|| FabricError::UnknownKind(s.to_string()))
    }
}

pub fn catalog_cost(kind: SurgeryKind) -> Result<Clock, FabricError> {
    CATALOG
        .iter()
        .find(|e| e.0 == kind)
        .and_then(|e| e.2)
        .map(Clock::from_halves)
        .ok_or(FabricError::Stochastic(kind))
}

/// Cost lookup by catalog name.
pub fn catalog_cost_by_name(name: &str) -> Result<Clock, FabricError> {
    catalog_cost(name.parse()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurgeryOp {
    pub kind: SurgeryKind,
    pub participants: Vec<Coord>,
    pub duration: Clock,
}

impl SurgeryOp {
    /// Operation with its catalog duration.
    pub fn fixed(kind: SurgeryKind, participants: Vec<Coord>) -> Result<SurgeryOp, FabricError> {
        Ok(SurgeryOp { kind, participants, duration: catalog_cost(kind)? })
    }

    /// Operation with a sampled duration (RUS phases).
    pub fn sampled(kind: SurgeryKind, participants: Vec<Coord>, duration: Clock) -> SurgeryOp {
        SurgeryOp { kind, participants, duration }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledOp {
    pub start: Clock,
    pub op: SurgeryOp,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub ops: Vec<ScheduledOp>,
}

#[derive(Serialize)]
struct OpLine<'a> {
    start: Clock,
    kind: SurgeryKind,
    participants: &'a [Coord],
    duration: Clock,
}

impl Timeline {
    pub fn push(&mut self, start: Clock, op: SurgeryOp) {
        self.ops.push(ScheduledOp { start, op });
    }

    pub fn horizon(&self) -> Clock {
        self.ops.iter().map(|o| o.start + o.op.duration).max().unwrap_or(Clock::ZERO)
    }

    /// One JSON object per line: `{start, kind, participants, duration}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for o in &self.ops {
            let line = OpLine {
                start: o.start,
                kind: o.op.kind,
                participants: &o.op.participants,
                duration: o.op.duration,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Conflict {
    #[error("op {kind} at clock {start} touches {coord:?}, which is off the grid")]
    OutOfBounds { start: Clock, kind: SurgeryKind, coord: Coord },
    #[error("op {kind} at clock {start} lasts {duration} clocks, catalog says otherwise")]
    DurationMismatch { start: Clock, kind: SurgeryKind, duration: Clock },
    #[error("op {kind} at clock {start} has participants that are not grid-connected")]
    Disconnected { start: Clock, kind: SurgeryKind },
    #[error("patch {coord:?} claimed by {first} and {second} at clock {clock}")]
    Overlap { clock: Clock, coord: Coord, first: SurgeryKind, second: SurgeryKind },
}

impl Conflict {
    fn key(&self) -> (Clock, Coord, u8) {
        match *self {
            Conflict::OutOfBounds { start, coord, .. } => (start, coord, 0),
            Conflict::DurationMismatch { start, .. } => (start, (0, 0), 1),
            Conflict::Disconnected { start, .. } => (start, (0, 0), 2),
            Conflict::Overlap { clock, coord, .. } => (clock, coord, 3),
        }
    }
}

/// Accept a timeline iff every op is on the grid with a catalog-consistent
/// duration, multi-patch participants form a connected set, and no patch is
/// claimed by two ops over overlapping half-open intervals.
///
/// The earliest conflict by `(clock, coord)` is reported, so the verdict
/// does not depend on the order of ops in the list.
pub fn validate(timeline: &Timeline, grid: &PatchGrid) -> Result<(), Conflict> {
    let mut found: Option<Conflict> = None;
    let mut keep = |c: Conflict| {
        if found.as_ref().map_or(true, |f| c.key() < f.key()) {
            found = Some(c);
        }
    };
    let mut claims: BTreeMap<Coord, Vec<(Clock, Clock, SurgeryKind)>> = BTreeMap::new();
    for o in &timeline.ops {
        let SurgeryOp { kind, ref participants, duration } = o.op;
        if let Some(&coord) = participants.iter().find(|c| !grid.contains(**c)) {
            keep(Conflict::OutOfBounds { start: o.start, kind, coord });
            continue;
        }
        let consistent = match catalog_cost(kind) {
            Ok(c) => c == duration,
            Err(_) => duration >= Clock::ZERO,
        };
        if !consistent {
            keep(Conflict::DurationMismatch { start: o.start, kind, duration });
        }
        if !connected(participants, grid) {
            keep(Conflict::Disconnected { start: o.start, kind });
        }
        if duration > Clock::ZERO {
            let unique: BTreeSet<Coord> = participants.iter().copied().collect();
            for c in unique {
                claims.entry(c).or_default().push((o.start, o.start + duration, kind));
            }
        }
    }
    for (coord, mut list) in claims {
        list.sort();
        let mut latest: Option<(Clock, SurgeryKind)> = None;
        for (start, end, kind) in list {
            if let Some((prev_end, prev_kind)) = latest {
                if start < prev_end {
                    keep(Conflict::Overlap { clock: start, coord, first: prev_kind, second: kind });
                    break;
                }
            }
            if latest.map_or(true, |(e, _)| end > e) {
                latest = Some((end, kind));
            }
        }
    }
    match found {
        Some(c) => Err(c),
        None => Ok(()),
    }
}

fn connected(participants: &[Coord], grid: &PatchGrid) -> bool {
    let set: BTreeSet<Coord> = participants.iter().copied().collect();
    let Some(&first) = set.iter().next() else { return true };
    let mut seen = BTreeSet::from([first]);
    let mut queue = VecDeque::from([first]);
    while let Some(c) = queue.pop_front() {
        for nb in grid.neighbors(c) {
            if set.contains(&nb) && seen.insert(nb) {
                queue.push_back(nb);
            }
        }
    }
    seen.len() == set.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_values() {
        assert_eq!(catalog_cost(SurgeryKind::Fswap), Ok(Clock::whole(7)));
        assert_eq!(catalog_cost(SurgeryKind::MultiTargetCnotReduced), Ok(Clock::whole(5)));
        assert_eq!(catalog_cost(SurgeryKind::SGate).unwrap().as_f64(), 1.5);
        assert_eq!(catalog_cost_by_name("cz"), Ok(Clock::whole(4)));
        assert_eq!(catalog_cost_by_name("toffoli"), Err(FabricError::UnknownKind("toffoli".into())));
        assert!(SurgeryKind::RusZz.is_stochastic());
    }

    #[test]
    fn grid_sizes() {
        let g = build_grid(4, false);
        assert_eq!(g.patch_count(), 64);
        assert_eq!(g.data_occupied(), 32);
        assert_eq!(build_grid(4, true).patch_count(), 65);
        assert_eq!(build_grid(2, false).patch_count(), 16);
    }

    #[test]
    fn empty_timeline_ok() {
        assert_eq!(validate(&Timeline::default(), &build_grid(2, false)), Ok(()));
    }

    #[test]
    fn overlapping_fswaps_conflict() {
        let g = build_grid(2, false);
        let mut t = Timeline::default();
        t.push(Clock::ZERO, SurgeryOp::fixed(SurgeryKind::Fswap, vec![(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap());
        t.push(Clock::whole(3), SurgeryOp::fixed(SurgeryKind::Fswap, vec![(0, 1), (0, 2), (1, 1), (1, 2)]).unwrap());
        match validate(&t, &g) {
            Err(Conflict::Overlap { clock, coord, .. }) => {
                assert_eq!(clock, Clock::whole(3));
                assert_eq!(coord, (0, 1));
            }
            other => panic!("expected overlap, got {other:?}"),
        }
    }

    #[test]
    fn back_to_back_ops_do_not_conflict() {
        let g = build_grid(2, false);
        let mut t = Timeline::default();
        let ps = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
        t.push(Clock::ZERO, SurgeryOp::fixed(SurgeryKind::Fswap, ps.clone()).unwrap());
        t.push(Clock::whole(7), SurgeryOp::fixed(SurgeryKind::Fswap, ps).unwrap());
        assert_eq!(validate(&t, &g), Ok(()));
        assert_eq!(t.horizon(), Clock::whole(14));
    }

    #[test]
    fn disconnected_participants_rejected() {
        let g = build_grid(2, false);
        let mut t = Timeline::default();
        t.push(Clock::ZERO, SurgeryOp::fixed(SurgeryKind::Cnot, vec![(0, 0), (0, 2)]).unwrap());
        assert!(matches!(validate(&t, &g), Err(Conflict::Disconnected { .. })));
    }

    #[test]
    fn half_clock_serialization() {
        assert_eq!(serde_json::to_string(&Clock::from_halves(3)).unwrap(), "1.5");
        assert_eq!(serde_json::to_string(&Clock::whole(7)).unwrap(), "7");
        assert_eq!(serde_json::from_str::<Clock>("2.5").unwrap(), Clock::from_halves(5));
        assert!(serde_json::from_str::<Clock>("0.3").is_err());
    }
}
