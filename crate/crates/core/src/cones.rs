//! Causal futures read off from retarded solutions, and their transitive closure.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::GreensSystem;
use crate::instance::Instance;
use crate::EPS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationKind {
    HatR,
    R,
}

/// A relation on point indices stored as bit rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CausalRelation {
    pub n: usize,
    pub kind: RelationKind,
    rows: Vec<Vec<u64>>,
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

impl CausalRelation {
    pub fn empty(n: usize, kind: RelationKind) -> Self {
        CausalRelation {
            n,
            kind,
            rows: vec![vec![0; words(n)]; n],
        }
    }

    pub fn from_pairs(n: usize, kind: RelationKind, pairs: &[(usize, usize)]) -> Self {
        let mut r = Self::empty(n, kind);
        for &(i, j) in pairs {
            r.insert(i, j);
        }
        r
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        self.rows[i][j / 64] |= 1 << (j % 64);
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i][j / 64] >> (j % 64) & 1 == 1
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| {
                (0..self.n)
                    .filter(move |&j| self.contains(i, j))
                    .map(move |j| (i, j))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.rows
            .iter()
            .flatten()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self ∘ other = {(x, z) : (x, y) ∈ self, (y, z) ∈ other}`.
    pub fn compose(&self, other: &CausalRelation) -> CausalRelation {
        let mut out = Self::empty(self.n, self.kind);
        for i in 0..self.n {
            for j in 0..self.n {
                if self.contains(i, j) {
                    for (a, b) in out.rows[i].iter_mut().zip(&other.rows[j]) {
                        *a |= b;
                    }
                }
            }
        }
        out
    }

    pub fn is_subset(&self, other: &CausalRelation) -> bool {
        self.rows
            .iter()
            .zip(&other.rows)
            .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x & !y == 0))
    }

    pub fn is_transitive(&self) -> bool {
        self.compose(self).is_subset(self)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j\n");
        for (i, j) in self.pairs() {
            let _ = writeln!(s, "{i},{j}");
        }
        s
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut s = format!("digraph {name} {{\n");
        for i in 0..self.n {
            let _ = writeln!(s, "  {i};");
        }
        for (i, j) in self.pairs() {
            if i != j {
                let _ = writeln!(s, "  {i} -> {j};");
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Points where column `c` of `m` is above `eps` times its largest entry.
fn column_support(m: &nalgebra::DMatrix<f64>, c: usize, block: usize, eps: f64) -> Vec<usize> {
    let col = m.column(c);
    let top = col.amax();
    if top == 0.0 {
        return Vec::new();
    }
    (0..col.len() / block)
        .filter(|&i| {
            (0..block)
                .map(|q| col[i * block + q].powi(2))
                .sum::<f64>()
                .sqrt()
                > eps * top
        })
        .collect()
}

/// `J∨(V)`: union of the supports of the retarded solutions for every basis
/// source at the points of `V`.
pub fn causal_future(gs: &GreensSystem, v: &[usize]) -> Result<Vec<usize>> {
    let b = gs.block;
    let mut hit = vec![false; gs.n_coeffs() / b];
    for &x in v {
        if gs.admissible.binary_search(&x).is_err() {
            return Err(Error::NotAdmissible(x));
        }
        for (c, &k) in gs.columns.iter().enumerate() {
            if k / b == x {
                for y in column_support(&gs.s_ret, c, b, EPS) {
                    hit[y] = true;
                }
            }
        }
    }
    Ok((0..hit.len()).filter(|&i| hit[i]).collect())
}

/// Smallest nonzero distance between points.
pub fn lattice_spacing(inst: &Instance) -> f64 {
    let n = inst.n_points();
    (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| inst.distance(i, j))
                .filter(|&d| d > 0.0)
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// `R̂`: `(x, y)` iff `y ∈ J∨(V_x)` with `V_x` the closed ball of radius
/// `radius` (default: the lattice spacing) around `x`, clipped to the
/// admissible sources. Rows of non-admissible `x` stay empty.
pub fn build_hat_r(inst: &Instance, gs: &GreensSystem, radius: Option<f64>) -> CausalRelation {
    let n = inst.n_points();
    let mut rel = CausalRelation::empty(n, RelationKind::HatR);
    if gs.columns.is_empty() {
        return rel;
    }
    let radius = radius.unwrap_or_else(|| lattice_spacing(inst)) * (1.0 + 1e-12);
    let rows: Vec<(usize, Vec<usize>)> = gs
        .admissible
        .par_iter()
        .map(|&x| {
            let ball: Vec<usize> = gs
                .admissible
                .iter()
                .copied()
                .filter(|&y| inst.distance(x, y) <= radius)
                .collect();
            (x, causal_future(gs, &ball).unwrap_or_default())
        })
        .collect();
    for (x, fut) in rows {
        for y in fut {
            rel.insert(x, y);
        }
    }
    rel
}

/// Closure under composition by repeated squaring `R ← R ∪ R∘R`.
pub fn transitive_closure(rel: &CausalRelation) -> CausalRelation {
    let mut r = rel.clone();
    r.kind = RelationKind::R;
    loop {
        let sq = r.compose(&r);
        if sq.is_subset(&r) {
            return r;
        }
        for (a, b) in r.rows.iter_mut().zip(&sq.rows) {
            for (x, y) in a.iter_mut().zip(b) {
                *x |= y;
            }
        }
    }
}

pub fn future_set(rel: &CausalRelation, x: usize) -> Vec<usize> {
    (0..rel.n).filter(|&y| rel.contains(x, y)).collect()
}

/// Euclidean distance from `(dt, ρ)` to the future cone `{dt ≥ κ ρ}` in the
/// `(time, radial)` half plane.
pub fn cone_distance(dt: f64, rho: f64, kappa: f64) -> f64 {
    if dt >= kappa * rho {
        return 0.0;
    }
    let norm = (1.0 + kappa * kappa).sqrt();
    let proj = (dt * kappa + rho) / norm;
    if proj <= 0.0 {
        (dt * dt + rho * rho).sqrt()
    } else {
        (dt - kappa * rho).abs() / norm
    }
}

fn separation(inst: &Instance, x: usize, y: usize) -> (f64, f64) {
    let d = inst.displacement(y, x);
    (d[0], d[1..].iter().map(|a| a * a).sum::<f64>().sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeViolation {
    pub source: usize,
    pub point: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeReport {
    pub slope: f64,
    pub dilation: f64,
    pub checked: usize,
    pub violations: Vec<ConeViolation>,
}

/// Checks every retarded support against the `κ`-cone of its source point
/// dilated by `dilation`.
pub fn retarded_cone_report(
    inst: &Instance,
    gs: &GreensSystem,
    slope: f64,
    dilation: f64,
) -> ConeReport {
    let b = gs.block;
    let mut checked = 0;
    let mut violations = Vec::new();
    for (c, &k) in gs.columns.iter().enumerate() {
        let x = k / b;
        for y in column_support(&gs.s_ret, c, b, EPS) {
            checked += 1;
            let (dt, rho) = separation(inst, x, y);
            let distance = cone_distance(dt, rho, slope);
            if distance > dilation {
                violations.push(ConeViolation {
                    source: x,
                    point: y,
                    distance,
                });
            }
        }
    }
    ConeReport {
        slope,
        dilation,
        checked,
        violations,
    }
}

/// The same check for the pairs of a relation.
pub fn relation_cone_report(
    inst: &Instance,
    rel: &CausalRelation,
    slope: f64,
    dilation: f64,
) -> ConeReport {
    let pairs = rel.pairs();
    let violations = pairs
        .iter()
        .filter_map(|&(x, y)| {
            let (dt, rho) = separation(inst, x, y);
            let distance = cone_distance(dt, rho, slope);
            (distance > dilation).then_some(ConeViolation {
                source: x,
                point: y,
                distance,
            })
        })
        .collect();
    ConeReport {
        slope,
        dilation,
        checked: pairs.len(),
        violations,
    }
}

/// Plot-ready rows `source, time, point, spatial offset` for the future sets
/// of `sources`.
pub fn cross_sections_csv(inst: &Instance, rel: &CausalRelation, sources: &[usize]) -> String {
    let mut s = String::from("source,time,point,offset\n");
    for &x in sources {
        for y in future_set(rel, x) {
            let (dt, rho) = separation(inst, x, y);
            let _ = writeln!(s, "{x},{dt},{y},{rho}");
        }
    }
    s
}
