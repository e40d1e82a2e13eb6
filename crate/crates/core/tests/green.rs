use std::sync::OnceLock;

use nalgebra::DVector;

use cvp::action::solve_critical_weights;
use cvp::gluing::CoveringSpec;
use cvp::green::{assemble_greens, mirror_jet, GreensOptions, GreensSystem};
use cvp::io::{load_greens, save_greens};
use cvp::{Instance, KernelSpec};

const ROWS: usize = 12;
const COLS: usize = 4;

fn system() -> &'static (Instance, GreensSystem) {
    static GS: OnceLock<(Instance, GreensSystem)> = OnceLock::new();
    GS.get_or_init(|| {
        let inst =
            Instance::generate_lattice(2, &[ROWS, COLS], 1.0, KernelSpec::iso(1.5, 1.0), &[1], 1.0)
                .unwrap();
        let inst = solve_critical_weights(&inst).unwrap();
        let gs = assemble_greens(
            &inst,
            &CoveringSpec::new(5.0, 1.5, 11, 3.0),
            &GreensOptions::default(),
        )
        .unwrap();
        (inst, gs)
    })
}

#[test]
fn every_column_solves() {
    let (_, gs) = system();
    assert!(gs.flagged.is_empty(), "{:?}", gs.flagged);
    assert_eq!(gs.columns.len(), gs.admissible.len() * gs.block);
    assert!(gs.max_rounds >= 1);
}

#[test]
fn g_is_advanced_minus_retarded() {
    let (_, gs) = system();
    assert_eq!(gs.g, &gs.s_adv - &gs.s_ret);
}

#[test]
fn one_sided_inverses() {
    let (_, gs) = system();
    for c in 0..gs.columns.len() {
        let mut w = DVector::zeros(gs.columns.len());
        w[c] = 1.0;
        let (ret, adv) = gs.one_sided_residuals(&w);
        assert!(ret <= 1e-8 && adv <= 1e-8, "column {c}: {ret:e} {adv:e}");
    }
}

/// Index of the point reflected through the middle time row.
fn reflect(i: usize) -> usize {
    (ROWS - 1 - i / COLS) * COLS + i % COLS
}

#[test]
fn time_reversal_swaps_retarded_and_advanced() {
    // the lattice is symmetric under τ → -τ, so the advanced solution for a
    // source is the reflection of the retarded one for the reflected source
    let (_, gs) = system();
    let b = gs.block;
    let n = gs.n_coeffs();
    let permute = |v: &DVector<f64>| {
        let mut out = DVector::zeros(n);
        for i in 0..n / b {
            for q in 0..b {
                out[reflect(i) * b + q] = v[i * b + q];
            }
        }
        mirror_jet(&out, b)
    };
    let mut worst: f64 = 0.0;
    for (c, &k) in gs.columns.iter().enumerate() {
        let mirrored_source = reflect(k / b) * b + k % b;
        let m = gs
            .columns
            .iter()
            .position(|&x| x == mirrored_source)
            .expect("admissible set is symmetric");
        let sign = if k % b == 1 { -1.0 } else { 1.0 };
        let expect = permute(&gs.s_ret.column(m).into_owned()) * sign;
        let got = gs.s_adv.column(c);
        worst = worst.max((got - &expect).amax() / expect.amax().max(1.0));
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn retarded_support_lies_after_the_lens_start() {
    let (inst, gs) = system();
    let b = gs.block;
    let r = inst.kernel.range;
    let delta = gs.covering.delta;
    for (c, &k) in gs.columns.iter().enumerate() {
        let t = inst.time(k / b);
        let col = gs.s_ret.column(c);
        let top = col.amax();
        for i in 0..inst.n_points() {
            if (0..b).any(|q| col[i * b + q].abs() > 1e-12 * top) {
                // a lens owning the source starts no earlier than one stride back
                assert!(
                    inst.time(i) >= t - gs.covering.stride - delta - r,
                    "column {c} reaches {i}"
                );
            }
        }
    }
}

#[test]
fn save_and_load_round_trip() {
    let (inst, gs) = system();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gs.json");
    let written = save_greens(&path, inst, gs).unwrap();
    assert!(written.iter().all(|p| p.exists()));
    let (inst2, gs2) = load_greens(&path).unwrap();
    assert_eq!(
        serde_json::to_string(&inst2).unwrap(),
        serde_json::to_string(inst).unwrap()
    );
    assert_eq!(gs2.columns, gs.columns);
    assert_eq!(gs2.admissible, gs.admissible);
    for (a, b) in [
        (&gs2.s_ret, &gs.s_ret),
        (&gs2.s_adv, &gs.s_adv),
        (&gs2.g, &gs.g),
        (&gs2.test, &gs.test),
    ] {
        assert_eq!(a.shape(), b.shape());
        assert!(a
            .iter()
            .zip(b.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(gs2.d, gs.d);
    assert_eq!(gs2.weights, gs.weights);
}

#[test]
fn short_slab_has_no_admissible_points() {
    let inst =
        Instance::generate_lattice(2, &[7, 4], 1.0, KernelSpec::iso(1.5, 1.0), &[1], 1.0).unwrap();
    let inst = solve_critical_weights(&inst).unwrap();
    let mut spec = CoveringSpec::new(5.0, 1.5, 11, 3.0);
    spec.count = Some(1);
    assert!(assemble_greens(&inst, &spec, &GreensOptions::default()).is_err());
}
