use nalgebra::DVector;
use proptest::prelude::*;

use cvp::linfield::assemble_delta;
use cvp::surface::sharp_forms;
use cvp::{Instance, JetVector, KernelSpec};

/// Jittered 5×5 lattice with random weights, either kernel.
fn instance() -> impl Strategy<Value = Instance> {
    (
        prop::collection::vec(-0.1f64..0.1, 50),
        prop::collection::vec(0.5f64..1.5, 25),
        any::<bool>(),
        1.2f64..2.0,
    )
        .prop_map(|(jitter, weights, cone, range)| {
            let kernel = if cone {
                let mut k = KernelSpec::lightcone(range, 1.0, 0.7);
                k.cone_offset = Some(range * range);
                k
            } else {
                KernelSpec::iso(range, 1.0)
            };
            let mut inst = Instance::generate_lattice(2, &[5, 5], 1.0, kernel, &[], 1.0).unwrap();
            for (p, d) in inst.points.iter_mut().zip(jitter.chunks(2)) {
                p[0] += d[0];
                p[1] += d[1];
            }
            inst.weights = weights;
            inst
        })
}

fn jet(inst: &Instance, values: &[f64]) -> JetVector {
    JetVector::from_coeffs(inst, DVector::from_column_slice(&values[..inst.n_coeffs()])).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 75)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weighted_operator_is_symmetric(inst in instance()) {
        let wd = assemble_delta(&inst).weighted(&inst);
        let scale = wd.amax().max(1.0);
        prop_assert!((&wd - wd.transpose()).amax() <= 1e-12 * scale);
    }

    #[test]
    fn delta_is_linear(inst in instance(), a in values(), b in values(), s in -3.0f64..3.0) {
        let op = assemble_delta(&inst);
        let (u, v) = (jet(&inst, &a), jet(&inst, &b));
        let mut combo = u.clone();
        combo.coeffs = &u.coeffs * s + &v.coeffs;
        let lhs = op.apply(&combo).coeffs;
        let rhs = op.apply(&u).coeffs * s + op.apply(&v).coeffs;
        prop_assert!((&lhs - &rhs).amax() <= 1e-12 * rhs.amax().max(1.0));
    }

    #[test]
    fn pair_jets_are_translation_invariant(inst in instance(), i in 0usize..25, j in 0usize..25) {
        let p = inst.pair_jet(i, j);
        let q = inst.pair_jet(j, i);
        prop_assert_eq!(&p.d2, &(-&p.d1));
        prop_assert_eq!(&p.d12, &(-&p.d11));
        prop_assert_eq!(p.value, q.value);
        prop_assert!((&q.d1 + &p.d1).amax() <= 1e-15 * p.d1.amax().max(1.0));
    }

    #[test]
    fn sharp_sigma_is_antisymmetric(inst in instance(), mask in prop::collection::vec(any::<bool>(), 25)) {
        let omega: Vec<usize> = (0..25).filter(|&i| mask[i]).collect();
        let f = sharp_forms(&inst, &inst.pair_table(), &omega);
        prop_assert!((&f.sigma + f.sigma.transpose()).amax() <= 1e-14 * f.sigma.amax().max(1.0));
        prop_assert!((&f.p - f.p.transpose()).amax() <= 1e-14 * f.p.amax().max(1.0));
    }
}
