use proptest::prelude::*;
use star_core::hubbard::*;

fn lambda_oracle(n: usize, t: f64, u: f64) -> f64 {
    // 2n(n-1) edges, two spins, XX and YY each weighted |t|/2; n² on-site |u|/4
    let edges = 2 * n * (n - 1);
    edges as f64 * 2.0 * 2.0 * t.abs() / 2.0 + (n * n) as f64 * u.abs() / 4.0
}

#[test]
fn one_norm_table() {
    for (n, want) in [(4, 64.0), (6, 156.0), (8, 288.0), (10, 460.0)] {
        let h = build_hamiltonian(&HubbardSpec::standard(n).unwrap()).unwrap();
        assert_eq!(one_norm(&h), want, "n = {n}");
    }
}

#[test]
fn shipped_files_match_generator() {
    for n in [4, 6, 8, 10] {
        let shipped = shipped_orderings(n).expect("shipped").unwrap();
        assert_eq!(shipped, staircase_orderings(n).unwrap(), "n = {n}");
        assert_eq!(route_orderings(&shipped).depth(), n - 1, "n = {n}");
    }
}

#[test]
fn staircase_routes_in_n_minus_one_layers() {
    for n in 2..=12 {
        let pair = staircase_orderings(n).unwrap();
        let s = route_orderings(&pair);
        assert_eq!(s.depth(), n - 1, "n = {n}");
        assert_eq!(s.apply(&pair.order_a), pair.order_b);
        assert_eq!(s.inverse().apply(&pair.order_b), pair.order_a);
    }
}

#[test]
fn four_by_four_needs_three_layers() {
    assert_eq!(route_orderings(&default_orderings(4).unwrap()).depth(), 3);
}

#[test]
fn malformed_files_rejected() {
    assert!(OrderingPair::from_json("{}").is_err());
    let mut pair = staircase_orderings(3).unwrap();
    pair.order_b = pair.order_a.clone();
    assert!(pair.validate().is_err());
    let text = staircase_orderings(3).unwrap().to_json().replace("\"version\": 1", "\"version\": 9");
    assert!(OrderingPair::from_json(&text).is_err());
}

/// Dihedral symmetry `g` of the n×n grid applied to a site.
fn dihedral(g: u8, n: usize, site: Site) -> Site {
    let (mut r, mut c) = (site / n, site % n);
    if g & 1 != 0 {
        c = n - 1 - c;
    }
    if g & 2 != 0 {
        r = n - 1 - r;
    }
    if g & 4 != 0 {
        std::mem::swap(&mut r, &mut c);
    }
    r * n + c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn symmetric_variants_are_valid_and_route(n in 2usize..=10, g in 0u8..8, rev in any::<bool>(), swap in any::<bool>()) {
        let base = staircase_orderings(n).unwrap();
        let map = |o: &[Site]| -> Vec<Site> {
            let mut v: Vec<Site> = o.iter().map(|&s| dihedral(g, n, s)).collect();
            if rev {
                v.reverse();
            }
            v
        };
        let (a, b) = if swap { (map(&base.order_b), map(&base.order_a)) } else { (map(&base.order_a), map(&base.order_b)) };
        let pair = assign_edges(n, a, b).unwrap();
        pair.validate().unwrap();
        let s = route_orderings(&pair);
        prop_assert!(s.layers_disjoint(n * n));
        prop_assert_eq!(s.apply(&pair.order_a), pair.order_b.clone());
        prop_assert_eq!(s.depth(), n - 1);
    }

    #[test]
    fn routing_composes_for_any_permutations(perm_a in Just((0..30usize).collect::<Vec<_>>()).prop_shuffle(),
                                             perm_b in Just((0..30usize).collect::<Vec<_>>()).prop_shuffle()) {
        let s = route(&perm_a, &perm_b);
        prop_assert!(s.layers_disjoint(30));
        prop_assert!(s.depth() <= 30);
        prop_assert_eq!(s.apply(&perm_a), perm_b.clone());
        prop_assert_eq!(s.inverse().apply(&perm_b), perm_a);
    }

    #[test]
    fn one_norm_formula(n in 2usize..=9, t in -3.0f64..3.0, u in -10.0f64..10.0) {
        let h = build_hamiltonian(&HubbardSpec::new(n, t, u).unwrap()).unwrap();
        let want = lambda_oracle(n, t, u);
        prop_assert!((one_norm(&h) - want).abs() <= 1e-9 * want.max(1.0));
        prop_assert_eq!(h.count(TermKind::HoppingXx), 4 * n * (n - 1));
        prop_assert_eq!(h.count(TermKind::OnsiteZz), n * n);
    }

    #[test]
    fn json_round_trip(n in 2usize..=10) {
        let pair = staircase_orderings(n).unwrap();
        prop_assert_eq!(OrderingPair::from_json(&pair.to_json()).unwrap(), pair);
    }

    #[test]
    fn executed_edges_have_no_string(n in 2usize..=6) {
        let spec = HubbardSpec::standard(n).unwrap();
        let pair = staircase_orderings(n).unwrap();
        let v = n * n;
        for (order, edges) in [(&pair.order_a, &pair.edges_a), (&pair.order_b, &pair.edges_b)] {
            let h = build_hamiltonian_with_order(&spec, order).unwrap();
            let two_qubit: std::collections::BTreeSet<(usize, usize)> = h
                .terms
                .iter()
                .filter(|t| t.kind == TermKind::HoppingXx && t.paulis.len() == 2)
                .map(|t| {
                    let q: Vec<usize> = t.paulis.keys().copied().collect();
                    (order[q[0] % v].min(order[q[1] % v]), order[q[0] % v].max(order[q[1] % v]))
                })
                .collect();
            for &(x, y) in edges.iter() {
                prop_assert!(two_qubit.contains(&(x.min(y), x.max(y))));
            }
        }
    }
}
