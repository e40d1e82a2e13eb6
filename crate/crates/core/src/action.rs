use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Instance, Kernel};
use crate::jets::{JetSpace, JetVector};

/// `ℓ` and `Dℓ` at every point of the instance.
#[derive(Clone, Debug, Serialize)]
pub struct ElReport {
    pub ell: Vec<f64>,
    pub grad_ell: Vec<Vec<f64>>,
    pub max_abs_ell: f64,
    /// Largest `|Dℓ|` over the directions that are tested; over all directions
    /// when no test space is involved.
    pub max_grad_norm_on_test: f64,
}

impl ElReport {
    /// `[ℓ_i, Dℓ_i]` as a jet, so that the restricted EL expression for a jet
    /// `u` is the pointwise product with `u`.
    pub fn as_jet(&self, inst: &Instance) -> JetVector {
        let mut g = JetVector::zeros(inst);
        for i in 0..inst.n_points() {
            let p = g.at_mut(i);
            p[0] = self.ell[i];
            p[1..].copy_from_slice(&self.grad_ell[i]);
        }
        g
    }
}

/// Verdict of the restricted Euler-Lagrange check.
#[derive(Clone, Debug, Serialize)]
pub struct ElCheck {
    pub pass: bool,
    pub tol: f64,
    pub worst: f64,
    pub worst_basis: Option<usize>,
    pub test_dim: usize,
    pub report: ElReport,
}

/// `S = Σ_i Σ_j ρ_i ρ_j L(x_i, x_j)`.
pub fn eval_action(inst: &Instance) -> f64 {
    let r = inst.kernel.range;
    let rows: Vec<f64> = (0..inst.n_points())
        .into_par_iter()
        .map(|i| {
            (0..inst.n_points())
                .filter(|&j| inst.distance(i, j) < r)
                .map(|j| inst.weights[j] * inst.lagrangian(i, j))
                .sum::<f64>()
                * inst.weights[i]
        })
        .collect();
    rows.iter().sum()
}

pub fn eval_ell(inst: &Instance) -> ElReport {
    let m = inst.dim;
    let r = inst.kernel.range;
    let rows: Vec<(f64, Vec<f64>)> = (0..inst.n_points())
        .into_par_iter()
        .map(|i| {
            let mut ell = -inst.s_param;
            let mut grad = vec![0.0; m];
            for j in 0..inst.n_points() {
                if inst.distance(i, j) >= r {
                    continue;
                }
                let k = inst.kernel.eval(&inst.displacement(i, j));
                ell += k.value * inst.weights[j];
                for a in 0..m {
                    grad[a] += k.grad[a] * inst.weights[j];
                }
            }
            (ell, grad)
        })
        .collect();
    let (ell, grad_ell): (Vec<f64>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    let max_abs_ell = ell.iter().fold(0.0, |a: f64, x| a.max(x.abs()));
    let max_grad_norm_on_test = grad_ell
        .iter()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    ElReport {
        ell,
        grad_ell,
        max_abs_ell,
        max_grad_norm_on_test,
    }
}

/// Checks `max_i |a_i ℓ(x_i) + ⟨u_i, Dℓ(x_i)⟩| ≤ tol` for every basis jet `u`.
pub fn check_restricted_el(inst: &Instance, test: &JetSpace, tol: f64) -> ElCheck {
    let mut report = eval_ell(inst);
    let g = report.as_jet(inst);
    let b = inst.block();
    let mut worst = 0.0;
    let mut worst_basis = None;
    for k in 0..test.dim() {
        let u = test.basis.column(k);
        for i in 0..inst.n_points() {
            let v: f64 = (0..b).map(|c| u[i * b + c] * g.coeffs[i * b + c]).sum();
            if v.abs() > worst {
                worst = v.abs();
                worst_basis = Some(k);
            }
        }
    }
    let mut gmax: f64 = 0.0;
    for i in 0..inst.n_points() {
        for a in 0..inst.dim {
            if test.mask[i * b + 1 + a] {
                gmax = gmax.max(report.grad_ell[i][a].abs());
            }
        }
    }
    report.max_grad_norm_on_test = gmax;
    ElCheck {
        pass: worst <= tol,
        tol,
        worst,
        worst_basis,
        test_dim: test.dim(),
        report,
    }
}

/// Test space with scalars everywhere and vector direction `a` at point `i`
/// admitted only when `|∂_a ℓ(x_i)| ≤ tol`.
pub fn auto_test_space(inst: &Instance, report: &ElReport, tol: f64) -> JetSpace {
    let all: Vec<usize> = (0..inst.n_points()).collect();
    crate::jets::build_space(
        inst,
        &all,
        |i| {
            (0..inst.dim)
                .filter(|&a| report.grad_ell[i][a].abs() <= tol)
                .collect()
        },
        None,
    )
}

/// Points at least one kernel range away from the bounding box faces of every
/// non-periodic axis.
pub fn interior_points(inst: &Instance) -> Vec<usize> {
    let r = inst.kernel.range;
    let bounds: Vec<(f64, f64)> = (0..inst.dim)
        .map(|a| {
            let xs = inst.points.iter().map(|p| p[a]);
            (
                xs.clone().fold(f64::INFINITY, f64::min),
                xs.fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .collect();
    (0..inst.n_points())
        .filter(|&i| {
            (0..inst.dim).all(|a| {
                inst.period(a).is_some()
                    || (inst.points[i][a] - bounds[a].0 >= r
                        && bounds[a].1 - inst.points[i][a] >= r)
            })
        })
        .collect()
}

/// Solves `K ρ = s 1` by LU-preconditioned iterative refinement projected onto
/// `ρ ≥ 0`. Fails if the limit has a nonpositive entry.
pub fn solve_critical_system(k: &DMatrix<f64>, s: f64) -> Result<DVector<f64>> {
    let n = k.nrows();
    let lu = k.clone().lu();
    let piv = lu.u().diagonal();
    let pmax = piv.amax();
    let pmin = piv.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
    if pmax == 0.0 || pmin <= 1e-14 * pmax {
        return Err(Error::SingularKernel);
    }
    let b = DVector::from_element(n, s);
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    let mut raw_min = (0, f64::INFINITY);
    for _ in 0..200 {
        let r = &b - k * &x;
        if r.norm() <= 1e-12 * bnorm {
            break;
        }
        let dx = lu.solve(&r).ok_or(Error::SingularKernel)?;
        let raw = &x + dx;
        raw_min = raw
            .iter()
            .cloned()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |a, (i, v)| if v < a.1 { (i, v) } else { a },
            );
        let next = raw.map(|v| v.max(0.0));
        let step = (&next - &x).norm();
        x = next;
        if step <= 1e-15 * x.norm().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    if let Some((i, v)) = x.iter().cloned().enumerate().find(|(_, v)| *v <= 0.0) {
        let value = if raw_min.1 < v { raw_min.1 } else { v };
        return Err(Error::NegativeWeight {
            index: if raw_min.1 < v { raw_min.0 } else { i },
            value,
        });
    }
    let rel = (&b - k * &x).norm() / bnorm;
    if rel > 1e-12 {
        return Err(Error::NotConverged(rel));
    }
    Ok(x)
}

/// Kernel matrix `K_ij = L(x_i, x_j)`.
pub fn kernel_matrix(inst: &Instance) -> DMatrix<f64> {
    let n = inst.n_points();
    let r = inst.kernel.range;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if inst.distance(i, j) < r {
                k[(i, j)] = inst.lagrangian(i, j);
            }
        }
    }
    k
}

/// Instance with weights solving `Σ_j L(x_i, x_j) ρ_j = 𝔰`, so that `ℓ ≡ 0` on `M`.
pub fn solve_critical_weights(inst: &Instance) -> Result<Instance> {
    let rho = solve_critical_system(&kernel_matrix(inst), inst.s_param)?;
    let mut out = inst.clone();
    out.weights = rho.iter().cloned().collect();
    Ok(out)
}

fn varied_el(inst: &Instance, v: &JetVector, tau: f64) -> Result<Vec<f64>> {
    let n = inst.n_points();
    let m = inst.dim;
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|a| inst.points[i][a] + tau * v.vector(i)[a])
                .collect()
        })
        .collect();
    let rho: Vec<f64> = (0..n)
        .map(|i| inst.weights[i] * (1.0 + tau * v.scalar(i)))
        .collect();
    let r = inst.kernel.range;
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; m + 1];
            out[0] = -inst.s_param;
            for j in 0..n {
                let d = inst.displacement_of(&pts[i], &pts[j]);
                let dist = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                if j != i && dist <= 1e-9 * r {
                    return Err(Error::StepTooLarge(i.min(j), i.max(j)));
                }
                if dist >= r {
                    continue;
                }
                let k = inst.kernel.eval(&d);
                out[0] += k.value * rho[j];
                for a in 0..m {
                    out[a + 1] += k.grad[a] * rho[j];
                }
            }
            Ok(out)
        })
        .collect();
    let mut flat = Vec::with_capacity(n * (m + 1));
    for row in rows {
        flat.extend(row?);
    }
    Ok(flat)
}

/// Derivative in `τ` of `[ℓ_τ, Dℓ_τ]` evaluated along the varied points
/// `x_i + τ u_i`, where the measure is varied to weights `ρ_i (1 + τ a_i)`.
/// Uses the 4-point central stencil.
///
/// The result equals `Δv - a·(ℓ, Dℓ)` pointwise, hence `Δv` on critical instances
/// with `Dℓ ≡ 0`.
pub fn variation_fd_oracle(inst: &Instance, v: &JetVector, h: f64) -> Result<JetVector> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveStep(h));
    }
    if v.coeffs.len() != inst.n_coeffs() {
        return Err(Error::Shape("jet length does not match instance".into()));
    }
    let f2p = varied_el(inst, v, 2.0 * h)?;
    let f1p = varied_el(inst, v, h)?;
    let f1m = varied_el(inst, v, -h)?;
    let f2m = varied_el(inst, v, -2.0 * h)?;
    let d = (0..f1p.len()).map(|k| (-f2p[k] + 8.0 * f1p[k] - 8.0 * f1m[k] + f2m[k]) / (12.0 * h));
    Ok(JetVector {
        block: inst.block(),
        coeffs: DVector::from_iterator(f1p.len(), d),
    })
}
