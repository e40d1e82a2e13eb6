#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use cvp::action::solve_critical_weights;
use cvp::cones::{
    build_hat_r, causal_future, cross_sections_csv, future_set, lattice_spacing,
    relation_cone_report, transitive_closure, CausalRelation, RelationKind,
};
use cvp::gluing::CoveringSpec;
use cvp::green::{assemble_greens, GreensOptions};
use cvp::{Error, Instance, KernelSpec};

fn floyd_warshall(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut m = vec![vec![false; n]; n];
    for &(i, j) in pairs {
        m[i][j] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if m[i][k] {
                for j in 0..n {
                    if m[k][j] {
                        m[i][j] = true;
                    }
                }
            }
        }
    }
    m
}

fn relation() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..90).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..3 * n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closure_matches_floyd_warshall((n, pairs) in relation()) {
        let r = CausalRelation::from_pairs(n, RelationKind::HatR, &pairs);
        let c = transitive_closure(&r);
        let fw = floyd_warshall(n, &pairs);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(c.contains(i, j), fw[i][j]);
            }
        }
        prop_assert!(c.is_transitive());
        prop_assert!(r.is_subset(&c));
        prop_assert_eq!(transitive_closure(&c), c.clone());
        prop_assert_eq!(c.kind, RelationKind::R);
    }

    #[test]
    fn csv_lists_every_pair((n, pairs) in relation()) {
        let r = CausalRelation::from_pairs(n, RelationKind::HatR, &pairs);
        let csv = r.to_csv();
        let mut lines = csv.lines();
        prop_assert_eq!(lines.next(), Some("i,j"));
        let parsed: Vec<(usize, usize)> = lines
            .map(|l| {
                let (a, b) = l.split_once(',').unwrap();
                (a.parse().unwrap(), b.parse().unwrap())
            })
            .collect();
        prop_assert_eq!(parsed, r.pairs());
    }
}

#[test]
fn dot_output_is_a_digraph() {
    let r = CausalRelation::from_pairs(4, RelationKind::R, &[(0, 0), (0, 3), (2, 1)]);
    let dot = r.to_dot("future");
    assert!(dot.starts_with("digraph future {\n"));
    assert!(dot.ends_with("}\n"));
    assert!(dot.contains("  0 -> 3;\n") && dot.contains("  2 -> 1;\n"));
    // loops are implied by the node list
    assert!(!dot.contains("0 -> 0"));
}

#[test]
fn relations_from_a_greens_system() {
    let inst =
        Instance::generate_lattice(2, &[12, 4], 1.0, KernelSpec::iso(1.5, 1.0), &[1], 1.0).unwrap();
    let inst = solve_critical_weights(&inst).unwrap();
    let gs = assemble_greens(
        &inst,
        &CoveringSpec::new(5.0, 1.5, 11, 3.0),
        &GreensOptions::default(),
    )
    .unwrap();
    assert_eq!(lattice_spacing(&inst), 1.0);

    let outside = (0..inst.n_points())
        .find(|i| gs.admissible.binary_search(i).is_err())
        .unwrap();
    assert!(matches!(causal_future(&gs, &[outside]), Err(Error::NotAdmissible(p)) if p == outside));

    let hat = build_hat_r(&inst, &gs, None);
    let r = transitive_closure(&hat);
    assert!(hat.is_subset(&r));
    assert!(r.is_transitive());
    for &x in &gs.admissible {
        // a retarded solution is nonzero at its own source
        assert!(hat.contains(x, x));
        assert!(future_set(&hat, x).iter().all(|&y| r.contains(x, y)));
    }
    for x in 0..inst.n_points() {
        if gs.admissible.binary_search(&x).is_err() {
            assert!(future_set(&hat, x).is_empty());
        }
    }
    let wider = build_hat_r(&inst, &gs, Some(2.0));
    assert!(hat.is_subset(&wider));

    let rep = relation_cone_report(&inst, &hat, 1.0, f64::INFINITY);
    assert_eq!(rep.checked, hat.len());
    assert!(rep.violations.is_empty());

    let x = gs.admissible[0];
    let rows = cross_sections_csv(&inst, &r, &[x]);
    assert_eq!(rows.lines().count(), 1 + future_set(&r, x).len());
}
