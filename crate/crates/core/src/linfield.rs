use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::instance::{Instance, PairTable};
use crate::jets::{coeff_weights, JetSpace, JetVector};

/// The linearized field operator as a matrix acting on jet coefficients.
///
/// `(D v)` restricted to the block of point `i` is the jet `(Δv)(x_i)`, so the
/// pointwise pairing is `⟨u, Δv⟩(x_i) = u_iᵀ (D v)_i` and the weighted pairing is
/// `uᵀ W D v` with `W` the per-component weights. `W D` is symmetric.
#[derive(Clone, Debug)]
pub struct LinOp {
    pub block: usize,
    pub d: DMatrix<f64>,
}

impl LinOp {
    pub fn apply(&self, v: &JetVector) -> JetVector {
        JetVector {
            block: self.block,
            coeffs: &self.d * &v.coeffs,
        }
    }

    /// `(Δv)(x_i)`.
    pub fn pointwise(&self, v: &JetVector, i: usize) -> DVector<f64> {
        let b = self.block;
        self.d.rows(i * b, b) * &v.coeffs
    }

    /// `W D`, the matrix of the weighted pairing `(u, v) ↦ ⟨u, Δv⟩_{L²(M)}`.
    pub fn weighted(&self, inst: &Instance) -> DMatrix<f64> {
        let w = coeff_weights(inst);
        let mut wd = self.d.clone();
        for (r, mut row) in wd.row_iter_mut().enumerate() {
            row *= w[r];
        }
        wd
    }
}

/// Assembles `D` from the jet-derivative expansion of the kernel.
pub fn assemble_delta(inst: &Instance) -> LinOp {
    assemble_delta_with(inst, &inst.pair_table())
}

pub fn assemble_delta_with(inst: &Instance, table: &PairTable) -> LinOp {
    let b = inst.block();
    let n = inst.n_coeffs();
    let rows: Vec<Vec<(usize, DMatrix<f64>)>> = (0..inst.n_points())
        .into_par_iter()
        .map(|i| {
            let mut diag = DMatrix::zeros(b, b);
            let mut out = Vec::with_capacity(table.rows[i].len() + 1);
            for (j, p) in &table.rows[i] {
                let rho = inst.weights[*j];
                diag += p.h11() * rho;
                out.push((*j, p.h12() * rho));
            }
            diag[(0, 0)] -= inst.s_param;
            out.push((i, diag));
            out
        })
        .collect();
    let mut d = DMatrix::zeros(n, n);
    for (i, blocks) in rows.into_iter().enumerate() {
        for (j, blk) in blocks {
            let mut view = d.view_mut((i * b, j * b), (b, b));
            view += blk;
        }
    }
    LinOp { block: b, d }
}

/// Pointwise quadratic forms of `Δ₂`: `Δ₂[v, v](x_i) = v_locᵀ F_i v_loc` where
/// `v_loc` stacks the jets at `points[i]`.
#[derive(Clone, Debug)]
pub struct Delta2Form {
    pub block: usize,
    pub points: Vec<Vec<usize>>,
    pub forms: Vec<DMatrix<f64>>,
}

impl Delta2Form {
    fn local(&self, v: &DVector<f64>, i: usize) -> DVector<f64> {
        let b = self.block;
        let pts = &self.points[i];
        DVector::from_fn(pts.len() * b, |k, _| v[pts[k / b] * b + k % b])
    }

    pub fn eval(&self, v: &JetVector, i: usize) -> f64 {
        let x = self.local(&v.coeffs, i);
        (x.transpose() * &self.forms[i] * &x)[(0, 0)]
    }

    /// `Vᵀ F_i V` for a coefficient basis `V` (columns are jets).
    pub fn restricted(&self, i: usize, basis: &DMatrix<f64>) -> DMatrix<f64> {
        let b = self.block;
        let pts = &self.points[i];
        let k = basis.ncols();
        let mut loc = DMatrix::zeros(pts.len() * b, k);
        for (l, &p) in pts.iter().enumerate() {
            loc.view_mut((l * b, 0), (b, k))
                .copy_from(&basis.rows(p * b, b));
        }
        loc.transpose() * &self.forms[i] * loc
    }
}

/// `Δ₂[v,v](x) = ½ Σ_y ρ_y (∇_{1,v} + ∇_{2,v})² L(x,y) - ½ b(x)² 𝔰`.
pub fn assemble_delta2(inst: &Instance) -> Delta2Form {
    assemble_delta2_with(inst, &inst.pair_table())
}

pub fn assemble_delta2_with(inst: &Instance, table: &PairTable) -> Delta2Form {
    let b = inst.block();
    let parts: Vec<(Vec<usize>, DMatrix<f64>)> = (0..inst.n_points())
        .into_par_iter()
        .map(|i| {
            let mut pts = vec![i];
            pts.extend(table.rows[i].iter().map(|(j, _)| *j).filter(|&j| j != i));
            let pos = |j: usize| pts.iter().position(|&p| p == j).unwrap();
            let mut f = DMatrix::zeros(pts.len() * b, pts.len() * b);
            for (j, p) in &table.rows[i] {
                let half = 0.5 * inst.weights[*j];
                let l = pos(*j);
                let h12 = p.h12() * half;
                let mut v = f.view_mut((0, 0), (b, b));
                v += p.h11() * half;
                let mut v = f.view_mut((0, l * b), (b, b));
                v += &h12;
                let mut v = f.view_mut((l * b, 0), (b, b));
                v += h12.transpose();
                let mut v = f.view_mut((l * b, l * b), (b, b));
                v += p.h22() * half;
            }
            f[(0, 0)] -= 0.5 * inst.s_param;
            (pts, f)
        })
        .collect();
    let (points, forms) = parts.into_iter().unzip();
    Delta2Form {
        block: b,
        points,
        forms,
    }
}

/// `(Δv)(x_i) - w(x_i)`, with components outside `mask` zeroed.
pub fn strong_residual(
    op: &LinOp,
    v: &JetVector,
    w: &JetVector,
    mask: Option<&[bool]>,
) -> JetVector {
    let mut r = op.apply(v);
    r.coeffs -= &w.coeffs;
    if let Some(mask) = mask {
        for (k, keep) in mask.iter().enumerate() {
            if !keep {
                r.coeffs[k] = 0.0;
            }
        }
    }
    r
}

/// `max_u |⟨Δu, v⟩ - ⟨u, w⟩| / (1 + ‖u‖ ‖v‖)` over the basis of `test`, all
/// products in `L²` with the given per-point weight.
pub fn weak_residual(
    inst: &Instance,
    op: &LinOp,
    v: &JetVector,
    w: &JetVector,
    test: &JetSpace,
    weight: &[f64],
) -> f64 {
    let b = inst.block();
    let wt = DVector::from_fn(inst.n_coeffs(), |k, _| weight[k / b] * inst.weights[k / b]);
    let wv = v.coeffs.component_mul(&wt);
    let g = op.d.tr_mul(&wv) - w.coeffs.component_mul(&wt);
    let vnorm = v.coeffs.dot(&wv).max(0.0).sqrt();
    let mut worst: f64 = 0.0;
    for k in 0..test.dim() {
        let u = test.basis.column(k);
        let unorm = u.component_mul(&u).dot(&wt).max(0.0).sqrt();
        worst = worst.max(u.dot(&g).abs() / (1.0 + unorm * vnorm));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::KernelSpec;

    #[test]
    fn weighted_matrix_is_symmetric() {
        let mut inst =
            Instance::generate_lattice(2, &[4, 5], 1.0, KernelSpec::iso(1.5, 1.0), &[1], 1.0)
                .unwrap();
        inst.weights = (0..20).map(|i| 0.5 + 0.05 * i as f64).collect();
        let wd = assemble_delta(&inst).weighted(&inst);
        assert!((&wd - wd.transpose()).amax() < 1e-14);
    }

    #[test]
    fn delta2_forms_symmetric_and_even() {
        let inst =
            Instance::generate_lattice(2, &[4, 5], 1.0, KernelSpec::iso(1.5, 1.0), &[1], 1.0)
                .unwrap();
        let f = assemble_delta2(&inst);
        for form in &f.forms {
            assert!((form - form.transpose()).amax() < 1e-12);
        }
        let v = JetVector {
            block: 3,
            coeffs: DVector::from_fn(60, |k, _| (k as f64 * 0.37).sin()),
        };
        let mut mv = v.clone();
        mv.coeffs *= -1.0;
        assert!((f.eval(&v, 7) - f.eval(&mv, 7)).abs() < 1e-14);
        let zero = JetVector {
            block: 3,
            coeffs: DVector::zeros(60),
        };
        assert_eq!(f.eval(&zero, 7), 0.0);
    }
}
