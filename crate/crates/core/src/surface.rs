use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, PairTable};
use crate::jets::{JetSpace, JetVector};
use crate::linalg::{min_generalized_eigen, sym_eigen_sorted, MinNormSolver};
use crate::linfield::{Delta2Form, LinOp};
use crate::EPS;

/// `6z⁵ - 15z⁴ + 10z³` clamped to `[0, 1]`.
pub fn smoothstep(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z >= 1.0 {
        1.0
    } else {
        z * z * z * (z * (6.0 * z - 15.0) + 10.0)
    }
}

pub fn smoothstep_deriv(z: f64) -> f64 {
    if z <= 0.0 || z >= 1.0 {
        0.0
    } else {
        30.0 * z * z * (z - 1.0) * (z - 1.0)
    }
}

/// Time-coordinate foliation `η_t(x) = s((t - τ(x)) / δ)` on the region `U`.
/// Outside `U` both `η` and `θ` vanish.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Foliation {
    pub region: Vec<usize>,
    pub t_min: f64,
    pub t_max: f64,
    pub grid: Vec<f64>,
    pub delta: f64,
    #[serde(skip)]
    in_region: Vec<bool>,
}

impl Foliation {
    pub fn new(
        n_points: usize,
        mut region: Vec<usize>,
        t_min: f64,
        t_max: f64,
        grid_count: usize,
        delta: f64,
    ) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Foliation("softening width must be positive".into()));
        }
        if !(t_max > t_min) {
            return Err(Error::Foliation("t_max must exceed t_min".into()));
        }
        let count = grid_count.max(2);
        let grid = (0..count)
            .map(|k| t_min + (t_max - t_min) * k as f64 / (count - 1) as f64)
            .collect();
        region.sort_unstable();
        region.dedup();
        let mut f = Foliation {
            region,
            t_min,
            t_max,
            grid,
            delta,
            in_region: Vec::new(),
        };
        f.index(n_points)?;
        Ok(f)
    }

    /// Rebuilds the membership table after deserialization.
    pub fn index(&mut self, n_points: usize) -> Result<()> {
        if let Some(&bad) = self.region.iter().find(|&&i| i >= n_points) {
            return Err(Error::Foliation(format!("region point {bad} out of range")));
        }
        self.in_region = vec![false; n_points];
        for &i in &self.region {
            self.in_region[i] = true;
        }
        Ok(())
    }

    pub fn contains(&self, i: usize) -> bool {
        self.in_region.get(i).copied().unwrap_or(false)
    }

    pub fn eta(&self, inst: &Instance, t: f64, i: usize) -> f64 {
        if !self.contains(i) {
            return 0.0;
        }
        smoothstep((t - inst.time(i)) / self.delta)
    }

    pub fn theta(&self, inst: &Instance, t: f64, i: usize) -> f64 {
        if !self.contains(i) {
            return 0.0;
        }
        smoothstep_deriv((t - inst.time(i)) / self.delta) / self.delta
    }

    pub fn eta_all(&self, inst: &Instance, t: f64) -> Vec<f64> {
        (0..inst.n_points()).map(|i| self.eta(inst, t, i)).collect()
    }

    pub fn theta_all(&self, inst: &Instance, t: f64) -> Vec<f64> {
        (0..inst.n_points())
            .map(|i| self.theta(inst, t, i))
            .collect()
    }

    /// `η_I = η_{t_max} - η_{t_min}`.
    pub fn eta_interval(&self, inst: &Instance) -> Vec<f64> {
        (0..inst.n_points())
            .map(|i| self.eta(inst, self.t_max, i) - self.eta(inst, self.t_min, i))
            .collect()
    }

    /// Points of `U` where `θ_t > ε` for some `t ∈ [t_min, t_max]`, i.e. whose
    /// time lies strictly inside `(t_min - δ, t_max)` up to the threshold.
    pub fn lens_set(&self, inst: &Instance) -> Vec<usize> {
        // θ_t(x) > ε ⇔ s'(z)/δ > ε for some z ∈ [(t_min-τ)/δ, (t_max-τ)/δ] ∩ (0,1)
        self.region
            .iter()
            .copied()
            .filter(|&i| {
                let lo = ((self.t_min - inst.time(i)) / self.delta).max(0.0);
                let hi = ((self.t_max - inst.time(i)) / self.delta).min(1.0);
                if lo >= hi {
                    return false;
                }
                let zmid = 0.5_f64.clamp(lo, hi);
                smoothstep_deriv(zmid) / self.delta > EPS
            })
            .collect()
    }

    /// Checks `0 ≤ η ≤ 1`, monotonicity in `t`, and that every grid value attains
    /// both `≤ ε` and `≥ 1 - ε` on `U`.
    pub fn check(&self, inst: &Instance) -> Result<()> {
        if self.region.is_empty() {
            return Err(Error::Foliation("empty region".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Foliation("grid must be increasing".into()));
        }
        for &t in &self.grid {
            let etas: Vec<f64> = self.region.iter().map(|&i| self.eta(inst, t, i)).collect();
            let lo = etas.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = etas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo > EPS || hi < 1.0 - EPS {
                return Err(Error::Foliation(format!(
                    "η at t = {t} ranges over [{lo}, {hi}] and misses 0 or 1 on U"
                )));
            }
        }
        Ok(())
    }

    /// Condition that the kernel does not reach out of `U` from points where
    /// some `θ_t` is nonzero: returns the first violating pair.
    pub fn leaking_pair(&self, inst: &Instance) -> Option<(usize, usize)> {
        let r = inst.kernel.range;
        for x in self.lens_set(inst) {
            for y in 0..inst.n_points() {
                if !self.contains(y) && inst.distance(x, y) < r {
                    return Some((x, y));
                }
            }
        }
        None
    }
}

/// A pair of bilinear forms on jets restricted to the coefficients `coords`.
#[derive(Clone, Debug)]
pub struct SoftForms {
    pub t: f64,
    pub coords: Vec<usize>,
    pub sigma: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

impl SoftForms {
    fn local_basis(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.coords.len(), basis.ncols(), |r, c| {
            basis[(self.coords[r], c)]
        })
    }

    /// `(Vᵀ Σ V, Vᵀ P V)` for a coefficient basis `V` of full length.
    pub fn on_basis(&self, basis: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let v = self.local_basis(basis);
        (
            v.transpose() * &self.sigma * &v,
            v.transpose() * &self.p * &v,
        )
    }

    /// Rows `Vᵀ P` and `Vᵀ Σ` against full-length jets (columns indexed by all coefficients).
    pub fn functionals(
        &self,
        basis: &DMatrix<f64>,
        n_coeffs: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let v = self.local_basis(basis);
        let pl = v.transpose() * &self.p;
        let sl = v.transpose() * &self.sigma;
        let mut pf = DMatrix::zeros(basis.ncols(), n_coeffs);
        let mut sf = DMatrix::zeros(basis.ncols(), n_coeffs);
        for (c, &g) in self.coords.iter().enumerate() {
            pf.set_column(g, &pl.column(c));
            sf.set_column(g, &sl.column(c));
        }
        (pf, sf)
    }

    fn local(&self, v: &JetVector) -> DVector<f64> {
        DVector::from_fn(self.coords.len(), |r, _| v.coeffs[self.coords[r]])
    }

    pub fn inner(&self, u: &JetVector, v: &JetVector) -> f64 {
        self.local(u).dot(&(&self.p * self.local(v)))
    }

    pub fn symplectic(&self, u: &JetVector, v: &JetVector) -> f64 {
        self.local(u).dot(&(&self.sigma * self.local(v)))
    }
}

fn coords_of(points: &[usize], block: usize) -> Vec<usize> {
    points
        .iter()
        .flat_map(|&i| (0..block).map(move |c| i * block + c))
        .collect()
}

/// Double sums over `x, y ∈ points` with pair weights `g(x) h(y) ρ_x ρ_y`.
fn weighted_forms(
    inst: &Instance,
    table: &PairTable,
    points: &[usize],
    g: &[f64],
    h: &[f64],
    t: f64,
) -> SoftForms {
    let b = inst.block();
    let coords = coords_of(points, b);
    let mut local = vec![usize::MAX; inst.n_points()];
    for (k, &i) in points.iter().enumerate() {
        local[i] = k;
    }
    let n = coords.len();
    let mut sigma = DMatrix::zeros(n, n);
    let mut p = DMatrix::zeros(n, n);
    for &x in points {
        if g[x] == 0.0 {
            continue;
        }
        let lx = local[x];
        for (y, pj) in &table.rows[x] {
            let ly = local[*y];
            if ly == usize::MAX || h[*y] == 0.0 {
                continue;
            }
            let w = g[x] * h[*y] * inst.weights[x] * inst.weights[*y];
            let h12 = pj.h12() * w;
            let mut v = sigma.view_mut((lx * b, ly * b), (b, b));
            v += &h12;
            let mut v = sigma.view_mut((ly * b, lx * b), (b, b));
            v -= h12.transpose();
            let mut v = p.view_mut((lx * b, lx * b), (b, b));
            v += pj.h11() * w;
            let mut v = p.view_mut((ly * b, ly * b), (b, b));
            v -= pj.h22() * w;
        }
    }
    SoftForms {
        t,
        coords,
        sigma,
        p,
    }
}

/// Sharp surface-layer forms `σ^Ω`, `(.,.)^Ω` on all of `M`.
pub fn sharp_forms(inst: &Instance, table: &PairTable, omega: &[usize]) -> SoftForms {
    let n = inst.n_points();
    let mut g = vec![0.0; n];
    for &i in omega {
        g[i] = 1.0;
    }
    let h: Vec<f64> = g.iter().map(|x| 1.0 - x).collect();
    let all: Vec<usize> = (0..n).collect();
    weighted_forms(inst, table, &all, &g, &h, f64::NAN)
}

/// Softened forms `σ^t`, `(.,.)^t` on the coefficients of `U`.
pub fn soft_forms(inst: &Instance, table: &PairTable, fol: &Foliation, t: f64) -> SoftForms {
    let eta = fol.eta_all(inst, t);
    let one_minus: Vec<f64> = eta.iter().map(|e| 1.0 - e).collect();
    weighted_forms(inst, table, &fol.region, &eta, &one_minus, t)
}

/// `(v, v)^t` evaluated directly from the kernel blocks.
pub fn soft_inner_value(
    inst: &Instance,
    table: &PairTable,
    fol: &Foliation,
    t: f64,
    v: &JetVector,
) -> f64 {
    let mut total = 0.0;
    for &x in &fol.region {
        let ex = fol.eta(inst, t, x);
        if ex == 0.0 {
            continue;
        }
        let vx = DVector::from_column_slice(v.at(x));
        for (y, pj) in &table.rows[x] {
            if !fol.contains(*y) {
                continue;
            }
            let w = ex * (1.0 - fol.eta(inst, t, *y)) * inst.weights[x] * inst.weights[*y];
            if w == 0.0 {
                continue;
            }
            let vy = DVector::from_column_slice(v.at(*y));
            total += w * (vx.dot(&(pj.h11() * &vx)) - vy.dot(&(pj.h22() * &vy)));
        }
    }
    total
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyCheck {
    pub t: f64,
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Compares the central difference of `(v, v)^t` in `t` with the energy-identity
/// right side `2Σ⟨v,Δv⟩θρ - 2ΣΔ₂[v,v]θρ + 𝔰Σb²θρ` over `U`.
pub fn energy_identity_check(
    inst: &Instance,
    table: &PairTable,
    op: &LinOp,
    d2: &Delta2Form,
    fol: &Foliation,
    v: &JetVector,
    t: f64,
    h: f64,
) -> Result<EnergyCheck> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveStep(h));
    }
    let lhs = (soft_inner_value(inst, table, fol, t + h, v)
        - soft_inner_value(inst, table, fol, t - h, v))
        / (2.0 * h);
    let dv = op.apply(v);
    let mut rhs = 0.0;
    for &x in &fol.region {
        let th = fol.theta(inst, t, x);
        if th == 0.0 {
            continue;
        }
        let w = th * inst.weights[x];
        let pair: f64 = v.at(x).iter().zip(dv.at(x)).map(|(a, b)| a * b).sum();
        let b = v.scalar(x);
        rhs += w * (2.0 * pair - 2.0 * d2.eval(v, x) + inst.s_param * b * b);
    }
    Ok(EnergyCheck {
        t,
        h,
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// A symmetric form supported on a few basis coordinates.
#[derive(Clone, Debug)]
pub struct LocalForm {
    pub idx: Vec<usize>,
    pub m: DMatrix<f64>,
}

impl LocalForm {
    fn eval(&self, v: &DVector<f64>) -> f64 {
        let x = DVector::from_fn(self.idx.len(), |k, _| v[self.idx[k]]);
        x.dot(&(&self.m * x.clone()))
    }

    fn grad_into(&self, v: &DVector<f64>, scale: f64, out: &mut DVector<f64>) {
        let x = DVector::from_fn(self.idx.len(), |k, _| v[self.idx[k]]);
        let g = &self.m * x * (2.0 * scale);
        for (k, &i) in self.idx.iter().enumerate() {
            out[i] += g[k];
        }
    }

    fn abs_dense(&self, k: usize) -> DMatrix<f64> {
        let (vals, vecs) = sym_eigen_sorted(&self.m);
        let a = &vecs * DMatrix::from_diagonal(&vals.map(f64::abs)) * vecs.transpose();
        let mut out = DMatrix::zeros(k, k);
        for (r, &i) in self.idx.iter().enumerate() {
            for (c, &j) in self.idx.iter().enumerate() {
                out[(i, j)] = a[(r, c)];
            }
        }
        out
    }
}

/// `Δ₂` at point `i` restricted to the basis columns that touch its stencil.
pub fn local_delta2(d2: &Delta2Form, i: usize, basis: &DMatrix<f64>) -> LocalForm {
    let b = d2.block;
    let idx: Vec<usize> = (0..basis.ncols())
        .filter(|&c| {
            d2.points[i]
                .iter()
                .any(|&p| (0..b).any(|k| basis[(p * b + k, c)] != 0.0))
        })
        .collect();
    let sub = DMatrix::from_fn(basis.nrows(), idx.len(), |r, c| basis[(r, idx[c])]);
    LocalForm {
        idx,
        m: d2.restricted(i, &sub),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HyperbolicityReport {
    pub t: f64,
    pub dim: usize,
    pub hyperbolic: bool,
    /// Certified lower bound on `1/C²` (from the dominating quadratic form).
    pub inv_c2_certified: f64,
    /// Smallest ratio found by the multi-start search, an upper bound on the best `1/C²`.
    pub inv_c2_sampled: f64,
    /// `C = 1/sqrt(inv_c2_certified)` when hyperbolic.
    pub c: Option<f64>,
    /// `(v,v)^t - (1/C²) RHS(v)` at the worst sampled jet with the certified constant,
    /// or the negative surface-layer value of the witness on failure.
    pub margin: f64,
    pub degenerate: bool,
    /// Basis coefficients of a failing jet.
    pub witness: Option<Vec<f64>>,
}

/// Smallest value of `vᵀPv / vᵀBv` for positive semidefinite `p` and `b`. Directions
/// on which `b` vanishes carry no right-hand side; they are eliminated through the
/// Schur complement of `p`, so jets far from the surface layer do not count.
fn schur_pencil_min(p: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<(f64, DVector<f64>)> {
    let (bv, bvecs) = sym_eigen_sorted(b);
    let top = bv.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return None;
    }
    let range: Vec<usize> = (0..bv.len()).filter(|&c| bv[c] > 1e-12 * top).collect();
    let null: Vec<usize> = (0..bv.len()).filter(|&c| bv[c] <= 1e-12 * top).collect();
    let pick = |idx: &[usize]| DMatrix::from_fn(b.nrows(), idx.len(), |r, c| bvecs[(r, idx[c])]);
    let rr = pick(&range);
    let nn = pick(&null);
    let p_rr = rr.transpose() * p * &rr;
    let (s, elim) = if null.is_empty() {
        (p_rr, None)
    } else {
        let p_nn = nn.transpose() * p * &nn;
        let p_nr = nn.transpose() * p * &rr;
        let pinv = MinNormSolver::new(&p_nn, 1e-12);
        let cols: Vec<DVector<f64>> = (0..p_nr.ncols())
            .map(|c| pinv.solve(&p_nr.column(c).into_owned()))
            .collect();
        let x = DMatrix::from_columns(&cols);
        (p_rr - p_nr.transpose() * &x, Some(x))
    };
    let lam_b = DVector::from_fn(range.len(), |c, _| bv[range[c]]);
    let (lam, y) = min_generalized_eigen(&s, &DMatrix::from_diagonal(&lam_b))?;
    // lift back: v = R y - N X y
    let mut v = &rr * &y;
    if let Some(x) = elim {
        v -= &nn * (x * &y);
    }
    Some((lam, v))
}

/// Core of the hyperbolicity verifier on abstract matrices: `p` is the
/// surface-layer form, `bq` the `θρ`-weighted norm form and `fx` the weighted
/// pointwise `Δ₂` forms, all in the same basis.
pub fn verify_hyperbolicity_forms(
    t: f64,
    p: &DMatrix<f64>,
    bq: &DMatrix<f64>,
    fx: &[(f64, LocalForm)],
    trials: usize,
    seed: u64,
) -> HyperbolicityReport {
    let k = p.nrows();
    let p = (p + p.transpose()) * 0.5;
    let mut report = HyperbolicityReport {
        t,
        dim: k,
        hyperbolic: false,
        inv_c2_certified: 0.0,
        inv_c2_sampled: f64::INFINITY,
        c: None,
        margin: 0.0,
        degenerate: false,
        witness: None,
    };
    if k == 0 {
        report.degenerate = true;
        return report;
    }
    let rhs = |v: &DVector<f64>| -> f64 {
        v.dot(&(bq * v)) + fx.iter().map(|(w, f)| w * f.eval(v).abs()).sum::<f64>()
    };
    let scale = p.amax().max(bq.amax()).max(f64::MIN_POSITIVE);
    let (pv, pvecs) = sym_eigen_sorted(&p);
    if pv[0] < -1e-12 * scale {
        let v = pvecs.column(0).into_owned();
        report.margin = v.dot(&(&p * &v));
        report.inv_c2_sampled = report.margin / rhs(&v).max(f64::MIN_POSITIVE);
        report.witness = Some(v.iter().cloned().collect());
        return report;
    }
    let mut dominant = bq.clone();
    for (w, f) in fx {
        dominant += f.abs_dense(k) * *w;
    }
    if dominant.amax() == 0.0 {
        report.degenerate = true;
        return report;
    }
    // null directions of P must carry no right-hand side
    for c in 0..k {
        if pv[c] > 1e-12 * scale {
            break;
        }
        let v = pvecs.column(c).into_owned();
        if rhs(&v) > 1e-12 * scale {
            report.margin = -rhs(&v);
            report.inv_c2_sampled = 0.0;
            report.witness = Some(v.iter().cloned().collect());
            return report;
        }
    }
    let (lam, vmin) = match schur_pencil_min(&p, &dominant) {
        Some(x) => x,
        None => {
            report.degenerate = true;
            return report;
        }
    };
    report.inv_c2_certified = lam.max(0.0);

    let ratio = |v: &DVector<f64>| v.dot(&(&p * v)) / rhs(v).max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (ratio(&vmin), vmin.normalize());
    let mut starts = vec![vmin.normalize()];
    for _ in 0..trials {
        let v = DVector::from_fn(k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        starts.push(v.normalize());
    }
    for mut v in starts {
        let mut f = ratio(&v);
        let mut step = 0.5;
        for _ in 0..60 {
            let num = v.dot(&(&p * &v));
            let den = rhs(&v).max(f64::MIN_POSITIVE);
            let mut gden = bq * &v * 2.0;
            for (w, lf) in fx {
                let s = lf.eval(&v).signum();
                lf.grad_into(&v, w * s, &mut gden);
            }
            let g = (&p * &v * 2.0 - gden * (num / den)) / den;
            let g = &g - &v * v.dot(&g);
            if g.norm() < 1e-14 {
                break;
            }
            let mut improved = false;
            while step > 1e-8 {
                let cand = (&v - &g * (step / g.norm())).normalize();
                let fc = ratio(&cand);
                if fc < f {
                    v = cand;
                    f = fc;
                    step *= 1.5;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if f < best.0 {
            best = (f, v);
        }
    }
    report.inv_c2_sampled = best.0;
    report.hyperbolic = report.inv_c2_certified > 0.0;
    if report.hyperbolic {
        report.c = Some(1.0 / report.inv_c2_certified.sqrt());
        let v = &best.1;
        report.margin = v.dot(&(&p * v)) - report.inv_c2_certified * rhs(v);
    } else {
        report.margin = best.1.dot(&(&p * &best.1));
        report.witness = Some(best.1.iter().cloned().collect());
    }
    report
}

/// Hyperbolicity at parameter `t` over the variation space `vary` (jets on `U`).
pub fn verify_hyperbolicity(
    inst: &Instance,
    table: &PairTable,
    d2: &Delta2Form,
    fol: &Foliation,
    vary: &JetSpace,
    t: f64,
    trials: usize,
    seed: u64,
) -> HyperbolicityReport {
    let forms = soft_forms(inst, table, fol, t);
    let (_, p) = forms.on_basis(&vary.basis);
    let b = inst.block();
    let k = vary.dim();
    let mut bq = DMatrix::zeros(k, k);
    let mut fx = Vec::new();
    for &x in &fol.region {
        let w = fol.theta(inst, t, x) * inst.weights[x];
        if w <= 0.0 {
            continue;
        }
        let rows = vary.basis.rows(x * b, b);
        bq += rows.transpose() * rows * w;
        fx.push((w, local_delta2(d2, x, &vary.basis)));
    }
    verify_hyperbolicity_forms(t, &p, &bq, &fx, trials, seed)
}

/// Deterministic random jet restricted to `space` (combination of its basis).
pub fn random_in_space(space: &JetSpace, rng: &mut impl Rng) -> DVector<f64> {
    let c = DVector::from_fn(space.dim(), |_, _| rng.random::<f64>() * 2.0 - 1.0);
    &space.basis * c
}
