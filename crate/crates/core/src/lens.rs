use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, PairTable};
use crate::jets::{coeff_weights, tilted_candidates, vary_space, JetSpace, JetVector};
use crate::linalg::{null_space, MinNormSolver, RANK_TOL};
use crate::linfield::{Delta2Form, LinOp};
use crate::surface::{soft_forms, verify_hyperbolicity, Foliation, HyperbolicityReport};
use crate::EPS;

/// Serializable description of a lens: the region `U` and its foliation.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LensSpec {
    pub region: Vec<usize>,
    pub t_min: f64,
    pub t_max: f64,
    pub grid_count: usize,
    pub delta: f64,
    #[serde(default = "default_tilt")]
    pub tilt: f64,
}

pub fn default_tilt() -> f64 {
    0.3
}

/// Shared objects every lens computation needs.
pub struct Context<'a> {
    pub inst: &'a Instance,
    pub table: PairTable,
    pub op: LinOp,
    pub d2: Delta2Form,
    /// `W D`, symmetric.
    pub wd: DMatrix<f64>,
}

impl<'a> Context<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        let table = inst.pair_table();
        let op = crate::linfield::assemble_delta_with(inst, &table);
        let d2 = crate::linfield::assemble_delta2_with(inst, &table);
        let wd = op.weighted(inst);
        Context {
            inst,
            table,
            op,
            d2,
            wd,
        }
    }
}

/// Minimal-norm solver for the weak Cauchy problem in one lens.
#[derive(Clone, Debug)]
pub struct WeakSolver {
    /// Unknown coefficients (all components at points with `η_I > 0`).
    pub coords: Vec<usize>,
    /// `v = scale ∘ v'` maps the Euclidean-minimal `v'` to the `L²(L)`-minimal `v`.
    pub scale: DVector<f64>,
    pub solver: MinNormSolver,
    /// The system matrix in scaled unknowns.
    pub matrix: DMatrix<f64>,
}

/// A lens-shaped region with its sets, test spaces and solver.
pub struct LensRegion {
    pub spec: LensSpec,
    pub fol: Foliation,
    pub l_set: Vec<usize>,
    pub w: Vec<usize>,
    pub z: Vec<usize>,
    pub eta_max: Vec<f64>,
    pub eta_interval: Vec<f64>,
    pub vary_u: JetSpace,
    pub j_under: JetSpace,
    pub j_bar: JetSpace,
    pub j_prime: JetSpace,
    /// Points where `J′_L` jets may be nonzero.
    pub prime_points: Vec<usize>,
    /// Linear conditions cutting `J′_L` out of the variation jets on `prime_points`.
    pub prime_constraints: DMatrix<f64>,
    pub hyperbolicity: Vec<HyperbolicityReport>,
    pub weak: WeakSolver,
    pub warnings: Vec<String>,
}

/// Options for lens construction.
#[derive(Clone, Debug)]
pub struct LensOptions {
    pub trials: usize,
    pub seed: u64,
    pub check_hyperbolicity: bool,
}

impl Default for LensOptions {
    fn default() -> Self {
        LensOptions {
            trials: 8,
            seed: 42,
            check_hyperbolicity: true,
        }
    }
}

fn support_of(eta: &[f64], region: &[usize], pred: impl Fn(f64) -> bool) -> Vec<usize> {
    region.iter().copied().filter(|&i| pred(eta[i])).collect()
}

/// Jets in the span of `candidates` annihilated by the `P` and `Σ` forms at `t`
/// tested against the variation space on `U`.
fn boundary_space(
    ctx: &Context,
    fol: &Foliation,
    vary_u: &JetSpace,
    t: f64,
    carrier: Vec<usize>,
    candidates: &DMatrix<f64>,
    premultiply: Option<&[f64]>,
) -> (JetSpace, DMatrix<f64>) {
    let inst = ctx.inst;
    let forms = soft_forms(inst, &ctx.table, fol, t);
    let (pf, sf) = forms.functionals(&vary_u.basis, inst.n_coeffs());
    let mut c = DMatrix::zeros(pf.nrows() + sf.nrows(), inst.n_coeffs());
    c.rows_mut(0, pf.nrows()).copy_from(&pf);
    c.rows_mut(pf.nrows(), sf.nrows()).copy_from(&sf);
    if let Some(eta) = premultiply {
        let b = inst.block();
        for (k, mut col) in c.column_iter_mut().enumerate() {
            col *= eta[k / b];
        }
    }
    // normalize rows so that the relative rank threshold sees both forms alike
    for mut row in c.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    (
        JetSpace::from_candidates(inst.block(), carrier, candidates, Some(&c)),
        c,
    )
}

impl LensRegion {
    pub fn build(ctx: &Context, spec: &LensSpec, opts: &LensOptions) -> Result<LensRegion> {
        let inst = ctx.inst;
        let n = inst.n_points();
        let b = inst.block();
        let fol = Foliation::new(
            n,
            spec.region.clone(),
            spec.t_min,
            spec.t_max,
            spec.grid_count,
            spec.delta,
        )?;
        fol.check(inst)?;
        if let Some((x, y)) = fol.leaking_pair(inst) {
            return Err(Error::Foliation(format!(
                "kernel reaches from lens point {x} to point {y} outside U"
            )));
        }
        let u = &fol.region;
        let eta_max = fol.eta_all(inst, spec.t_max);
        let eta_min = fol.eta_all(inst, spec.t_min);
        let eta_interval = fol.eta_interval(inst);
        let l_set = fol.lens_set(inst);

        let below_one = support_of(&eta_max, u, |e| e < 1.0 - EPS);
        let above_zero = support_of(&eta_max, u, |e| e > EPS);
        let ka = inst.compact_range(&below_one);
        let kb = inst.compact_range(&above_zero);
        let z: Vec<usize> = ka
            .iter()
            .copied()
            .filter(|i| kb.binary_search(i).is_ok())
            .collect();
        let w: Vec<usize> = l_set
            .iter()
            .copied()
            .filter(|&i| eta_interval[i] >= 1.0 - EPS && z.binary_search(&i).is_err())
            .collect();
        if w.is_empty() {
            return Err(Error::EmptyW);
        }

        let vary_u = vary_space(inst, u, spec.tilt);
        let top = support_of(&eta_max, u, |e| 1.0 - e <= EPS);
        let (j_bar, _) = boundary_space(
            ctx,
            &fol,
            &vary_u,
            spec.t_max,
            top.clone(),
            &tilted_candidates(inst, &top, spec.tilt),
            None,
        );
        let bottom = support_of(&eta_min, u, |e| e <= EPS);
        let (j_under, _) = boundary_space(
            ctx,
            &fol,
            &vary_u,
            spec.t_min,
            bottom.clone(),
            &tilted_candidates(inst, &bottom, spec.tilt),
            None,
        );
        // η u must lie in the span of J̄: no coefficients where 0 < η < 1 - ε
        let prime_points: Vec<usize> = (0..n)
            .filter(|&i| eta_max[i] == 0.0 || eta_max[i] >= 1.0 - EPS)
            .collect();
        let (j_prime, prime_constraints) = boundary_space(
            ctx,
            &fol,
            &vary_u,
            spec.t_max,
            prime_points.clone(),
            &tilted_candidates(inst, &prime_points, spec.tilt),
            Some(&eta_max),
        );

        let mut warnings = Vec::new();
        if j_bar.dim() == 0 {
            warnings
                .push("test space of jets vanishing in the future is zero-dimensional".to_string());
        }

        let hyperbolicity = if opts.check_hyperbolicity {
            let reports: Vec<HyperbolicityReport> = fol
                .grid
                .par_iter()
                .map(|&t| {
                    verify_hyperbolicity(
                        inst,
                        &ctx.table,
                        &ctx.d2,
                        &fol,
                        &vary_u,
                        t,
                        opts.trials,
                        opts.seed,
                    )
                })
                .collect();
            if let Some(bad) = reports.iter().find(|r| !r.hyperbolic) {
                let witness = bad
                    .witness
                    .as_ref()
                    .map(|c| {
                        (&vary_u.basis * DVector::from_column_slice(c))
                            .iter()
                            .cloned()
                            .collect()
                    })
                    .unwrap_or_default();
                return Err(Error::NotHyperbolic {
                    t: bad.t,
                    margin: bad.margin,
                    witness,
                });
            }
            reports
        } else {
            Vec::new()
        };

        // weak system: J̄ basis against W D on the strip, weighted by η_I
        let strip: Vec<usize> = (0..n).filter(|&i| eta_interval[i] > 0.0).collect();
        let coords: Vec<usize> = strip
            .iter()
            .flat_map(|&i| (0..b).map(move |c| i * b + c))
            .collect();
        let scale = DVector::from_fn(coords.len(), |k, _| {
            let i = coords[k] / b;
            (eta_interval[i] / inst.weights[i]).sqrt()
        });
        let unscale = DVector::from_fn(coords.len(), |k, _| {
            let i = coords[k] / b;
            1.0 / (eta_interval[i] * inst.weights[i]).sqrt()
        });
        let tw = j_bar.basis.transpose() * &ctx.wd;
        let mut matrix = DMatrix::zeros(j_bar.dim(), coords.len());
        for (c, &g) in coords.iter().enumerate() {
            matrix.set_column(c, &(tw.column(g) * scale[c]));
        }
        let solver = MinNormSolver::new(&matrix, RANK_TOL);
        let weak = WeakSolver {
            coords,
            scale: unscale,
            solver,
            matrix,
        };

        Ok(LensRegion {
            spec: spec.clone(),
            fol,
            l_set,
            w,
            z,
            eta_max,
            eta_interval,
            vary_u,
            j_under,
            j_bar,
            j_prime,
            prime_points,
            prime_constraints,
            hyperbolicity,
            weak,
            warnings,
        })
    }

    pub fn in_w(&self, i: usize) -> bool {
        self.w.binary_search(&i).is_ok()
    }

    pub fn in_z(&self, i: usize) -> bool {
        self.z.binary_search(&i).is_ok()
    }

    /// Null space of the weak system in the scaled unknowns (for the minimal-norm check).
    pub fn weak_null_space(&self) -> DMatrix<f64> {
        null_space(&self.weak.matrix, RANK_TOL)
    }
}

/// Result of the local weak solve.
#[derive(Clone, Debug)]
pub struct WeakSolution {
    pub v: JetVector,
    pub gamma: f64,
    /// Least-squares residual relative to `‖w‖_{L²(L)}`.
    pub residual: f64,
    pub vacuous: bool,
}

fn l2_weighted(inst: &Instance, v: &JetVector, weight: &[f64]) -> f64 {
    let b = inst.block();
    v.coeffs
        .iter()
        .enumerate()
        .map(|(k, x)| weight[k / b] * inst.weights[k / b] * x * x)
        .sum::<f64>()
        .sqrt()
}

fn outside_norm(w: &JetVector, keep: impl Fn(usize) -> bool) -> f64 {
    (0..w.n_points())
        .filter(|&i| !keep(i))
        .map(|i| w.point_norm(i).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Minimal-norm weak solution of `⟨Δu, v⟩_{L²(L)} = ⟨u, w⟩_{L²(L)}` for all `u ∈ J̄_L`.
pub fn solve_weak(ctx: &Context, lens: &LensRegion, w: &JetVector) -> Result<WeakSolution> {
    let inst = ctx.inst;
    let wn = w.coeffs.norm();
    if wn > 0.0 {
        let leak = outside_norm(w, |i| lens.in_w(i)) / wn;
        if leak > 1e-12 {
            return Err(Error::NotInW(leak));
        }
    }
    let mut v = JetVector::zeros(inst);
    let w_l2 = l2_weighted(inst, w, &lens.eta_interval);
    if lens.j_bar.dim() == 0 || wn == 0.0 {
        return Ok(WeakSolution {
            v,
            gamma: 0.0,
            residual: 0.0,
            vacuous: lens.j_bar.dim() == 0,
        });
    }
    let rw = w.coeffs.component_mul(&coeff_weights(inst));
    let weighted: DVector<f64> =
        DVector::from_fn(rw.len(), |k, _| rw[k] * lens.eta_interval[k / inst.block()]);
    let rhs = lens.j_bar.basis.tr_mul(&weighted);
    let vp = lens.weak.solver.solve(&rhs);
    let residual = (&lens.weak.matrix * &vp - &rhs).norm() / w_l2.max(f64::MIN_POSITIVE);
    if residual > 1e-8 {
        return Err(Error::Inconsistent(residual));
    }
    for (k, &g) in lens.weak.coords.iter().enumerate() {
        v.coeffs[g] = vp[k] * lens.weak.scale[k];
    }
    let gamma = l2_weighted(inst, &v, &lens.eta_interval) / w_l2;
    Ok(WeakSolution {
        v,
        gamma,
        residual,
        vacuous: false,
    })
}

/// Output of one cutoff-and-commutator step.
#[derive(Clone, Debug)]
pub struct GlueStep {
    pub v_out: JetVector,
    pub w_tilde: JetVector,
    pub gamma: f64,
    /// `max_u |⟨Δu, v_out⟩ - ⟨u, w⟩ - ⟨u, w̃⟩|` over the `J′_L` basis, relative to `‖w‖_{L²(M)}`.
    pub identity_residual: f64,
}

/// `w̃(x) = Σ_y ρ_y (η(y) - η(x)) H12(x, y) ṽ(y)`, the commutator `[Δ, η] ṽ`.
pub fn commutator_inhomogeneity(
    inst: &Instance,
    table: &PairTable,
    eta: &[f64],
    vt: &JetVector,
) -> JetVector {
    let b = inst.block();
    let mut out = JetVector::zeros(inst);
    let rows: Vec<DVector<f64>> = (0..inst.n_points())
        .into_par_iter()
        .map(|x| {
            let mut acc = DVector::zeros(b);
            for (y, pj) in &table.rows[x] {
                let de = eta[*y] - eta[x];
                if de == 0.0 {
                    continue;
                }
                let vy = DVector::from_column_slice(vt.at(*y));
                if vy.iter().all(|&c| c == 0.0) {
                    continue;
                }
                acc += pj.h12() * vy * (inst.weights[*y] * de);
            }
            acc
        })
        .collect();
    for (x, r) in rows.iter().enumerate() {
        out.at_mut(x).copy_from_slice(r.as_slice());
    }
    out
}

/// Solve in the lens, cut off with `η_{t_max}` and return the solution on `M`
/// together with the commutator inhomogeneity supported in `Z`.
pub fn glue_step(ctx: &Context, lens: &LensRegion, w: &JetVector) -> Result<GlueStep> {
    let inst = ctx.inst;
    let sol = solve_weak(ctx, lens, w)?;
    let vt = sol.v.scaled_pointwise(&lens.eta_interval);
    let v_out = vt.scaled_pointwise(&lens.eta_max);
    let w_tilde = commutator_inhomogeneity(inst, &ctx.table, &lens.eta_max, &vt);
    if let Some(&x) = w_tilde.support(EPS).iter().find(|&&x| !lens.in_z(x)) {
        return Err(Error::ZLeak(x));
    }
    let r =
        &ctx.wd * &v_out.coeffs - (&w.coeffs + &w_tilde.coeffs).component_mul(&coeff_weights(inst));
    let wn = l2_weighted(inst, w, &vec![1.0; inst.n_points()]);
    let worst = lens.j_prime.basis.tr_mul(&r).amax();
    let identity_residual = if wn > 0.0 { worst / wn } else { worst };
    if identity_residual > 1e-8 {
        return Err(Error::WeakIdentity(identity_residual));
    }
    Ok(GlueStep {
        v_out,
        w_tilde,
        gamma: sol.gamma,
        identity_residual,
    })
}
