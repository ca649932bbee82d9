//! The 2D Fermi-Hubbard model on an open n×n lattice, its Jordan-Wigner
//! Pauli decomposition, and the pair of line orderings (plus fSWAP routing
//! between them) that make every hopping term local once per Trotter half.
//!
//! Sites are indexed row-major: site `r * n + c`. A line ordering is a
//! permutation `order[p] = site` placing sites on line positions `0..V`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Site = usize;
/// An undirected lattice edge stored with the smaller site first.
pub type Edge = (Site, Site);

#[derive(Debug, Error, PartialEq)]
pub enum HubbardError {
    #[error("lattice side n = {0} is below the minimum of 2")]
    TooSmall(usize),
    #[error("non-finite model parameter {name} = {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("invalid ordering pair: {0}")]
    InvalidPair(String),
    #[error("ordering file: {0}")]
    File(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];
}

/// Model parameters. Boundary conditions are always open.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HubbardSpec {
    pub n: usize,
    pub t: f64,
    pub u: f64,
}

impl HubbardSpec {
    pub fn new(n: usize, t: f64, u: f64) -> Result<Self, HubbardError> {
        let spec = HubbardSpec { n, t, u };
        spec.validate()?;
        Ok(spec)
    }

    /// The parameter set used throughout the estimates: t = 1, U = 4.
    pub fn standard(n: usize) -> Result<Self, HubbardError> {
        Self::new(n, 1.0, 4.0)
    }

    pub fn validate(&self) -> Result<(), HubbardError> {
        if self.n < 2 {
            return Err(HubbardError::TooSmall(self.n));
        }
        for (name, value) in [("t", self.t), ("u", self.u)] {
            if !value.is_finite() {
                return Err(HubbardError::NonFinite { name, value });
            }
        }
        Ok(())
    }

    pub fn sites(&self) -> usize {
        self.n * self.n
    }

    pub fn spin_orbitals(&self) -> usize {
        2 * self.sites()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn anticommutes(self, other: Pauli) -> bool {
        self != other
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    HoppingXx,
    HoppingYy,
    OnsiteZz,
}

/// Sparse Pauli string keyed by spin-orbital index.
pub type PauliString = BTreeMap<usize, Pauli>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coeff: f64,
    pub paulis: PauliString,
    pub kind: TermKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PauliTermSet {
    pub terms: Vec<PauliTerm>,
}

impl PauliTermSet {
    pub fn count(&self, kind: TermKind) -> usize {
        self.terms.iter().filter(|t| t.kind == kind).count()
    }
}

/// True if two Pauli strings anticommute (odd number of clashing positions).
pub fn strings_anticommute(a: &PauliString, b: &PauliString) -> bool {
    a.iter()
        .filter(|(q, p)| b.get(q).is_some_and(|o| p.anticommutes(*o)))
        .count()
        % 2
        == 1
}

/// Spin-orbital index of `(site, spin)` under a line ordering given as
/// `position[site]`. Spin-up orbitals come first.
pub fn spin_orbital(position: Site, spin: Spin, sites: usize) -> usize {
    match spin {
        Spin::Up => position,
        Spin::Down => sites + position,
    }
}

/// All nearest-neighbour edges of the open n×n grid, row-major, smaller site first.
pub fn grid_edges(n: usize) -> Vec<Edge> {
    let mut edges = Vec::with_capacity(2 * n * n.saturating_sub(1));
    for r in 0..n {
        for c in 0..n {
            let s = r * n + c;
            if c + 1 < n {
                edges.push((s, s + 1));
            }
            if r + 1 < n {
                edges.push((s, s + n));
            }
        }
    }
    edges
}

fn norm_edge(a: Site, b: Site) -> Edge {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Hamiltonian with the Jordan-Wigner strings taken along the row-major line.
pub fn build_hamiltonian(spec: &HubbardSpec) -> Result<PauliTermSet, HubbardError> {
    spec.validate()?;
    let order: Vec<Site> = (0..spec.sites()).collect();
    build_hamiltonian_with_order(spec, &order)
}

/// Hamiltonian with Jordan-Wigner strings along `order` (`order[p] = site`).
///
/// Hopping on each edge and spin gives `-t/2 (XZ..ZX)` and `-t/2 (YZ..ZY)`;
/// each site gives `U/4 Z↑Z↓`. The number-operator term is dropped.
pub fn build_hamiltonian_with_order(
    spec: &HubbardSpec,
    order: &[Site],
) -> Result<PauliTermSet, HubbardError> {
    spec.validate()?;
    let v = spec.sites();
    let position = inverse_permutation(order, v)?;
    let mut terms = Vec::new();
    if spec.t != 0.0 {
        for spin in Spin::BOTH {
            for (a, b) in grid_edges(spec.n) {
                let (pa, pb) = {
                    let (x, y) = (position[a], position[b]);
                    (x.min(y), x.max(y))
                };
                for (pauli, kind) in [(Pauli::X, TermKind::HoppingXx), (Pauli::Y, TermKind::HoppingYy)] {
                    let mut paulis = PauliString::new();
                    paulis.insert(spin_orbital(pa, spin, v), pauli);
                    for p in pa + 1..pb {
                        paulis.insert(spin_orbital(p, spin, v), Pauli::Z);
                    }
                    paulis.insert(spin_orbital(pb, spin, v), pauli);
                    terms.push(PauliTerm { coeff: -spec.t / 2.0, paulis, kind });
                }
            }
        }
    }
    if spec.u != 0.0 {
        for s in 0..v {
            let mut paulis = PauliString::new();
            paulis.insert(spin_orbital(position[s], Spin::Up, v), Pauli::Z);
            paulis.insert(spin_orbital(position[s], Spin::Down, v), Pauli::Z);
            terms.push(PauliTerm { coeff: spec.u / 4.0, paulis, kind: TermKind::OnsiteZz });
        }
    }
    Ok(PauliTermSet { terms })
}

/// λ = Σ|c_j|.
pub fn one_norm(terms: &PauliTermSet) -> f64 {
    terms.terms.iter().map(|t| t.coeff.abs()).sum()
}

fn inverse_permutation(order: &[Site], v: usize) -> Result<Vec<usize>, HubbardError> {
    if order.len() != v {
        return Err(HubbardError::InvalidPair(format!(
            "ordering has {} entries, expected {v}",
            order.len()
        )));
    }
    let mut position = vec![usize::MAX; v];
    for (p, &s) in order.iter().enumerate() {
        if s >= v || position[s] != usize::MAX {
            return Err(HubbardError::InvalidPair(format!(
                "ordering is not a permutation of 0..{v} (site {s} at position {p})"
            )));
        }
        position[s] = p;
    }
    Ok(position)
}

/// Two Jordan-Wigner line orderings and the split of hopping edges between
/// them. The same orderings and edge sets are used for both spins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingPair {
    pub n: usize,
    pub order_a: Vec<Site>,
    pub order_b: Vec<Site>,
    pub edges_a: Vec<Edge>,
    pub edges_b: Vec<Edge>,
}

/// One sub-layer: line positions `p` whose pair `(p, p+1)` is executed.
pub type SubLayer = Vec<usize>;

impl OrderingPair {
    pub fn sites(&self) -> usize {
        self.n * self.n
    }

    pub fn position_a(&self) -> Vec<usize> {
        inverse_permutation(&self.order_a, self.sites()).expect("validated pair")
    }

    pub fn position_b(&self) -> Vec<usize> {
        inverse_permutation(&self.order_b, self.sites()).expect("validated pair")
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<(), HubbardError> {
        let bad = |m: String| Err(HubbardError::InvalidPair(m));
        if self.n < 2 {
            return Err(HubbardError::TooSmall(self.n));
        }
        let v = self.sites();
        let pos_a = inverse_permutation(&self.order_a, v)?;
        let pos_b = inverse_permutation(&self.order_b, v)?;
        let all: BTreeSet<Edge> = grid_edges(self.n).into_iter().collect();
        let per = self.n * (self.n - 1);
        let mut seen = BTreeSet::new();
        for (label, edges, pos) in [("a", &self.edges_a, &pos_a), ("b", &self.edges_b, &pos_b)] {
            if edges.len() != per {
                return bad(format!("edges_{label} has {} edges, expected {per}", edges.len()));
            }
            for &(x, y) in edges.iter() {
                let e = norm_edge(x, y);
                if !all.contains(&e) {
                    return bad(format!("edges_{label} contains non-lattice edge {e:?}"));
                }
                if pos[x].abs_diff(pos[y]) != 1 {
                    return bad(format!("edge {e:?} is not line-adjacent under order_{label}"));
                }
                if !seen.insert(e) {
                    return bad(format!("edge {e:?} assigned twice"));
                }
            }
        }
        if seen != all {
            return bad("edge subsets do not cover the lattice".into());
        }
        for (label, layers) in [("a", self.sublayers_a()), ("b", self.sublayers_b())] {
            for (i, layer) in layers.iter().enumerate() {
                if layer.len() != per / 2 {
                    return bad(format!(
                        "sub-layer {label}{} has {} edges, expected {}",
                        i + 1,
                        layer.len(),
                        per / 2
                    ));
                }
            }
        }
        Ok(())
    }

    /// Sub-layers of `edges_a` colored by parity of the lower line position.
    pub fn sublayers_a(&self) -> [SubLayer; 2] {
        split_by_parity(&self.edges_a, &self.position_a())
    }

    pub fn sublayers_b(&self) -> [SubLayer; 2] {
        split_by_parity(&self.edges_b, &self.position_b())
    }

    /// Serialize to the versioned data-file format.
    pub fn to_json(&self) -> String {
        let file = OrderingFile {
            version: ORDERING_FILE_VERSION,
            n: self.n,
            order_a: self.order_a.clone(),
            order_b: self.order_b.clone(),
            edges_a: self.edges_a.clone(),
            edges_b: self.edges_b.clone(),
        };
        serde_json::to_string_pretty(&file).expect("plain data serializes")
    }

    /// Parse and validate a data file.
    pub fn from_json(text: &str) -> Result<Self, HubbardError> {
        let file: OrderingFile =
            serde_json::from_str(text).map_err(|e| HubbardError::File(e.to_string()))?;
        if file.version != ORDERING_FILE_VERSION {
            return Err(HubbardError::File(format!(
                "unsupported version {}, expected {ORDERING_FILE_VERSION}",
                file.version
            )));
        }
        let pair = OrderingPair {
            n: file.n,
            order_a: file.order_a,
            order_b: file.order_b,
            edges_a: file.edges_a.into_iter().map(|(x, y)| norm_edge(x, y)).collect(),
            edges_b: file.edges_b.into_iter().map(|(x, y)| norm_edge(x, y)).collect(),
        };
        pair.validate()?;
        Ok(pair)
    }
}

fn split_by_parity(edges: &[Edge], pos: &[usize]) -> [SubLayer; 2] {
    let mut layers = [Vec::new(), Vec::new()];
    for &(x, y) in edges {
        let p = pos[x].min(pos[y]);
        layers[p % 2].push(p);
    }
    for layer in &mut layers {
        layer.sort_unstable();
    }
    layers
}

pub const ORDERING_FILE_VERSION: u32 = 1;

/// On-disk format: `{version, n, order_a, order_b, edges_a, edges_b}` with
/// row-major site indices and edges as `[site, site]` pairs.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrderingFile {
    version: u32,
    n: usize,
    order_a: Vec<Site>,
    order_b: Vec<Site>,
    edges_a: Vec<Edge>,
    edges_b: Vec<Edge>,
}

const SHIPPED: [(usize, &str); 4] = [
    (4, include_str!("../data/orderings/n4.json")),
    (6, include_str!("../data/orderings/n6.json")),
    (8, include_str!("../data/orderings/n8.json")),
    (10, include_str!("../data/orderings/n10.json")),
];

/// The shipped data file for `n`, if one exists.
pub fn shipped_orderings(n: usize) -> Option<Result<OrderingPair, HubbardError>> {
    SHIPPED
        .iter()
        .find(|(m, _)| *m == n)
        .map(|(_, text)| OrderingPair::from_json(text))
}

/// Shipped pair for `n` when available, otherwise the staircase generator.
pub fn default_orderings(n: usize) -> Result<OrderingPair, HubbardError> {
    match shipped_orderings(n) {
        Some(pair) => pair,
        None => staircase_orderings(n),
    }
}

/// Line through the staircase paths pairing diagonals `(d-1, d)` for all `d`
/// of the given parity, where the diagonal of `(r, c)` is `r - c`.
///
/// Each staircase alternates between its two diagonals, so it is a lattice
/// path; even-parity staircases use the horizontal edges on even diagonals
/// and the vertical edges on odd ones, and odd-parity staircases the rest.
fn staircase_line(n: usize, parity: i64) -> Vec<Site> {
    let n_i = n as i64;
    let mut line = Vec::with_capacity(n * n);
    for d in -(n_i - 1)..=n_i {
        if d.rem_euclid(2) != parity {
            continue;
        }
        let mut block: Vec<(usize, usize)> = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter(|&(r, c)| {
                let diag = r as i64 - c as i64;
                diag == d || diag == d - 1
            })
            .collect();
        block.sort_by_key(|&(r, c)| (r + c, r));
        line.extend(block.into_iter().map(|(r, c)| r * n + c));
    }
    line
}

/// Build the staircase ordering pair and assign edges to sub-layers.
///
/// Edges adjacent under both orderings are placed greedily to balance the
/// four parity sub-layers at n(n-1)/2 edges each.
pub fn staircase_orderings(n: usize) -> Result<OrderingPair, HubbardError> {
    if n < 2 {
        return Err(HubbardError::TooSmall(n));
    }
    let order_a = staircase_line(n, 0);
    let order_b = staircase_line(n, 1);
    assign_edges(n, order_a, order_b)
}

/// Split lattice edges between two orderings with balanced parity sub-layers.
pub fn assign_edges(
    n: usize,
    order_a: Vec<Site>,
    order_b: Vec<Site>,
) -> Result<OrderingPair, HubbardError> {
    let v = n * n;
    let pos_a = inverse_permutation(&order_a, v)?;
    let pos_b = inverse_permutation(&order_b, v)?;
    let target = n * (n - 1) / 2;
    // classes 0,1 = a-even/a-odd, 2,3 = b-even/b-odd
    let mut counts = [0usize; 4];
    let mut class_of: BTreeMap<Edge, usize> = BTreeMap::new();
    let mut shared = Vec::new();
    for e @ (x, y) in grid_edges(n) {
        let in_a = pos_a[x].abs_diff(pos_a[y]) == 1;
        let in_b = pos_b[x].abs_diff(pos_b[y]) == 1;
        let ca = pos_a[x].min(pos_a[y]) % 2;
        let cb = 2 + pos_b[x].min(pos_b[y]) % 2;
        match (in_a, in_b) {
            (true, false) => {
                counts[ca] += 1;
                class_of.insert(e, ca);
            }
            (false, true) => {
                counts[cb] += 1;
                class_of.insert(e, cb);
            }
            (true, true) => shared.push((e, ca, cb)),
            (false, false) => {
                return Err(HubbardError::InvalidPair(format!(
                    "edge {e:?} is local under neither ordering"
                )))
            }
        }
    }
    for (e, ca, cb) in shared {
        let deficit = |c: usize| target as i64 - counts[c] as i64;
        let c = if deficit(cb) > deficit(ca) { cb } else { ca };
        counts[c] += 1;
        class_of.insert(e, c);
    }
    let edges_a = class_of.iter().filter(|(_, &c)| c < 2).map(|(&e, _)| e).collect();
    let edges_b = class_of.iter().filter(|(_, &c)| c >= 2).map(|(&e, _)| e).collect();
    let pair = OrderingPair { n, order_a, order_b, edges_a, edges_b };
    pair.validate()?;
    Ok(pair)
}

/// Layers of disjoint adjacent transpositions; layer entries are the lower
/// line position `p` of each swapped pair `(p, p+1)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FSwapSchedule {
    pub layers: Vec<Vec<usize>>,
}

impl FSwapSchedule {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Apply all layers to a line ordering.
    pub fn apply(&self, order: &[Site]) -> Vec<Site> {
        let mut line = order.to_vec();
        for layer in &self.layers {
            apply_layer(&mut line, layer);
        }
        line
    }

    /// The schedule run backwards.
    pub fn inverse(&self) -> FSwapSchedule {
        FSwapSchedule { layers: self.layers.iter().rev().cloned().collect() }
    }

    /// True if every layer's transpositions are in range and pairwise disjoint.
    pub fn layers_disjoint(&self, len: usize) -> bool {
        self.layers.iter().all(|layer| {
            let mut used = BTreeSet::new();
            layer.iter().all(|&p| p + 1 < len && used.insert(p) && used.insert(p + 1))
        })
    }
}

pub fn apply_layer(line: &mut [Site], layer: &[usize]) {
    for &p in layer {
        line.swap(p, p + 1);
    }
}

impl fmt::Display for FSwapSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, layer) in self.layers.iter().enumerate() {
            writeln!(f, "layer {i}: {layer:?}")?;
        }
        Ok(())
    }
}

/// Odd-even transposition routing from `from` to `to`.
///
/// Both starting parities are tried and the shorter network kept (ties go to
/// even). Layers without swaps are dropped.
pub fn route(from: &[Site], to: &[Site]) -> FSwapSchedule {
    assert_eq!(from.len(), to.len(), "orderings differ in length");
    let mut target = vec![0usize; from.len()];
    for (p, &s) in to.iter().enumerate() {
        target[s] = p;
    }
    let keys: Vec<usize> = from.iter().map(|&s| target[s]).collect();
    let even = odd_even_network(keys.clone(), 0);
    let odd = odd_even_network(keys, 1);
    if odd.depth() < even.depth() {
        odd
    } else {
        even
    }
}

fn odd_even_network(mut keys: Vec<usize>, start: usize) -> FSwapSchedule {
    let len = keys.len();
    let mut layers = Vec::new();
    let mut idle = 0;
    let mut parity = start;
    // two consecutive idle rounds mean the line is sorted
    while idle < 2 {
        let mut layer = Vec::new();
        let mut p = parity;
        while p + 1 < len {
            if keys[p] > keys[p + 1] {
                keys.swap(p, p + 1);
                layer.push(p);
            }
            p += 2;
        }
        if layer.is_empty() {
            idle += 1;
        } else {
            idle = 0;
            layers.push(layer);
        }
        parity ^= 1;
    }
    FSwapSchedule { layers }
}

/// Route `order_a` to `order_b` of a pair.
pub fn route_orderings(pair: &OrderingPair) -> FSwapSchedule {
    route(&pair.order_a, &pair.order_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_4x4() {
        let h = build_hamiltonian(&HubbardSpec::standard(4).unwrap()).unwrap();
        assert_eq!(h.count(TermKind::HoppingXx), 48);
        assert_eq!(h.count(TermKind::HoppingYy), 48);
        assert_eq!(h.count(TermKind::OnsiteZz), 16);
    }

    #[test]
    fn zero_hopping_leaves_onsite_only() {
        let h = build_hamiltonian(&HubbardSpec::new(2, 0.0, 4.0).unwrap()).unwrap();
        assert_eq!(h.terms.len(), 4);
        assert!(h.terms.iter().all(|t| t.kind == TermKind::OnsiteZz && t.coeff == 1.0));
    }

    #[test]
    fn one_norm_small_cases() {
        let h = build_hamiltonian(&HubbardSpec::standard(2).unwrap()).unwrap();
        assert_eq!(one_norm(&h), 12.0);
        assert_eq!(one_norm(&PauliTermSet::default()), 0.0);
    }

    #[test]
    fn rejects_small_lattice() {
        assert_eq!(HubbardSpec::new(1, 1.0, 4.0), Err(HubbardError::TooSmall(1)));
    }

    #[test]
    fn two_by_two_pair() {
        let pair = default_orderings(2).unwrap();
        assert_eq!(pair.edges_a.len(), 2);
        assert_eq!(pair.edges_b.len(), 2);
        assert_eq!(route_orderings(&pair).depth(), 1);
    }

    #[test]
    fn identical_orderings_rejected() {
        let line = staircase_line(3, 0);
        assert!(assign_edges(3, line.clone(), line).is_err());
    }

    #[test]
    fn route_trivial_cases() {
        let a: Vec<Site> = (0..9).collect();
        assert_eq!(route(&a, &a).depth(), 0);
        let mut b = a.clone();
        b.swap(4, 5);
        let s = route(&a, &b);
        assert_eq!(s.layers, vec![vec![4]]);
    }

    #[test]
    fn shipped_pair_n4_takes_three_layers() {
        let pair = default_orderings(4).unwrap();
        let s = route_orderings(&pair);
        assert_eq!(s.depth(), 3);
        assert_eq!(s.apply(&pair.order_a), pair.order_b);
    }

    #[test]
    fn json_round_trip() {
        let pair = staircase_orderings(3).unwrap();
        assert_eq!(OrderingPair::from_json(&pair.to_json()).unwrap(), pair);
    }
}
