use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::linalg::{null_space, RANK_TOL};

/// Per-point jets `(a_i, u_i)` stored flat as `[a_1, u_1.., a_2, u_2.., ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct JetVector {
    pub block: usize,
    pub coeffs: DVector<f64>,
}

impl JetVector {
    pub fn zeros(inst: &Instance) -> Self {
        JetVector {
            block: inst.block(),
            coeffs: DVector::zeros(inst.n_coeffs()),
        }
    }

    pub fn from_coeffs(inst: &Instance, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != inst.n_coeffs() {
            return Err(Error::Shape(format!(
                "jet has {} coefficients, instance needs {}",
                coeffs.len(),
                inst.n_coeffs()
            )));
        }
        if coeffs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape("jet has non-finite coefficients".into()));
        }
        Ok(JetVector {
            block: inst.block(),
            coeffs,
        })
    }

    pub fn n_points(&self) -> usize {
        self.coeffs.len() / self.block
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.coeffs.as_slice()[i * self.block..(i + 1) * self.block]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        let b = self.block;
        &mut self.coeffs.as_mut_slice()[i * b..(i + 1) * b]
    }

    pub fn scalar(&self, i: usize) -> f64 {
        self.coeffs[i * self.block]
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.at(i)[1..]
    }

    /// Euclidean norm of the jet value at `i`.
    pub fn point_norm(&self, i: usize) -> f64 {
        self.at(i).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Multiply the jet at each point by a scalar function.
    pub fn scaled_pointwise(&self, f: &[f64]) -> JetVector {
        let mut out = self.clone();
        for (i, &fi) in f.iter().enumerate() {
            for c in out.at_mut(i) {
                *c *= fi;
            }
        }
        out
    }

    /// `{i : |v(x_i)| > eps * max_j |v(x_j)|}`.
    pub fn support(&self, eps: f64) -> Vec<usize> {
        let norms: Vec<f64> = (0..self.n_points()).map(|i| self.point_norm(i)).collect();
        let top = norms.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return Vec::new();
        }
        (0..norms.len()).filter(|&i| norms[i] > eps * top).collect()
    }
}

impl Serialize for JetVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coeffs.as_slice().serialize(s)
    }
}

/// Plain coefficient array as read from a jet file; bind it to an instance with
/// [`JetVector::from_coeffs`].
#[derive(Deserialize)]
#[serde(transparent)]
pub struct RawJet(pub Vec<f64>);

/// `b_i b̃_i + ⟨u_i, ũ_i⟩` with the identity metric.
pub fn pointwise_product(v: &JetVector, w: &JetVector, i: usize) -> f64 {
    v.at(i).iter().zip(w.at(i)).map(|(a, b)| a * b).sum()
}

/// `Σ_i weight_i ρ_i (v, w)(x_i)`.
pub fn l2_product(inst: &Instance, v: &JetVector, w: &JetVector, weight: &[f64]) -> f64 {
    (0..inst.n_points())
        .map(|i| weight[i] * inst.weights[i] * pointwise_product(v, w, i))
        .sum()
}

/// Weight vector `ρ_i` repeated over the jet components of each point.
pub fn coeff_weights(inst: &Instance) -> DVector<f64> {
    let b = inst.block();
    DVector::from_fn(inst.n_coeffs(), |k, _| inst.weights[k / b])
}

/// A linear space of jets, stored as an orthonormal basis of columns.
#[derive(Clone, Debug)]
pub struct JetSpace {
    pub block: usize,
    /// Coefficients that some candidate jet may occupy.
    pub mask: Vec<bool>,
    pub carrier: Vec<usize>,
    pub basis: DMatrix<f64>,
}

impl JetSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_coeffs(&self) -> usize {
        self.basis.nrows()
    }

    pub fn empty(n_coeffs: usize, block: usize) -> Self {
        JetSpace {
            block,
            mask: vec![false; n_coeffs],
            carrier: Vec::new(),
            basis: DMatrix::zeros(n_coeffs, 0),
        }
    }

    /// Subspace of the span of orthonormal `candidates` cut out by
    /// `constraints * jet = 0`.
    pub fn from_candidates(
        block: usize,
        carrier: Vec<usize>,
        candidates: &DMatrix<f64>,
        constraints: Option<&DMatrix<f64>>,
    ) -> Self {
        let n = candidates.nrows();
        let mask = (0..n)
            .map(|r| candidates.row(r).iter().any(|&x| x != 0.0))
            .collect();
        let basis = match constraints {
            Some(c) if c.nrows() > 0 && candidates.ncols() > 0 => {
                let reduced = c * candidates;
                let ns = null_space(&reduced, RANK_TOL);
                candidates * ns
            }
            _ => candidates.clone(),
        };
        JetSpace {
            block,
            mask,
            carrier,
            basis,
        }
    }

    pub fn jet(&self, k: usize) -> DVector<f64> {
        self.basis.column(k).into_owned()
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Carrier points at which no basis jet has a scalar component.
    pub fn scalar_gaps(&self) -> Vec<usize> {
        self.carrier
            .iter()
            .copied()
            .filter(|&i| {
                self.basis
                    .row(i * self.block)
                    .iter()
                    .all(|x| x.abs() <= 1e-12)
            })
            .collect()
    }
}

/// Jets supported on `carrier` whose vector components at point `i` are
/// restricted to the axes in `vector_mask(i)`, cut down by `constraints`.
pub fn build_space(
    inst: &Instance,
    carrier: &[usize],
    vector_mask: impl Fn(usize) -> Vec<usize>,
    constraints: Option<&DMatrix<f64>>,
) -> JetSpace {
    let b = inst.block();
    let mut cols = Vec::new();
    for &i in carrier {
        cols.push(i * b);
        for a in vector_mask(i) {
            cols.push(i * b + 1 + a);
        }
    }
    let mut cand = DMatrix::zeros(inst.n_coeffs(), cols.len());
    for (c, &k) in cols.iter().enumerate() {
        cand[(k, c)] = 1.0;
    }
    JetSpace::from_candidates(b, carrier.to_vec(), &cand, constraints)
}

/// Full mask: scalar and every vector direction.
pub fn all_axes(inst: &Instance) -> impl Fn(usize) -> Vec<usize> {
    let m = inst.dim;
    move |_| (0..m).collect()
}

/// Unit jet direction `(1, λ e_0) / |.|` of the tilted variation family.
pub fn tilted_direction(block: usize, tilt: f64) -> Vec<f64> {
    let mut d = vec![0.0; block];
    let norm = (1.0 + tilt * tilt).sqrt();
    d[0] = 1.0 / norm;
    if block > 1 {
        d[1] = tilt / norm;
    }
    d
}

/// Candidate matrix with one column per point of `points`, each the tilted
/// direction placed at that point.
pub fn tilted_candidates(inst: &Instance, points: &[usize], tilt: f64) -> DMatrix<f64> {
    let b = inst.block();
    let dir = tilted_direction(b, tilt);
    let mut cand = DMatrix::zeros(inst.n_coeffs(), points.len());
    for (c, &i) in points.iter().enumerate() {
        for (k, &x) in dir.iter().enumerate() {
            cand[(i * b + k, c)] = x;
        }
    }
    cand
}

/// The variation space restricted to `points`: one tilted jet per point.
pub fn vary_space(inst: &Instance, points: &[usize], tilt: f64) -> JetSpace {
    JetSpace::from_candidates(
        inst.block(),
        points.to_vec(),
        &tilted_candidates(inst, points, tilt),
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::KernelSpec;

    fn lattice(n: usize) -> Instance {
        Instance::generate_lattice(1, &[n], 1.0, KernelSpec::iso(1.5, 1.0), &[0], 1.0).unwrap()
    }

    #[test]
    fn pointwise_examples() {
        let inst = Instance::generate_lattice(2, &[3, 3], 1.0, KernelSpec::iso(1.2, 1.0), &[], 1.0)
            .unwrap();
        let mut v = JetVector::zeros(&inst);
        let mut w = JetVector::zeros(&inst);
        assert_eq!(pointwise_product(&v, &w, 0), 0.0);
        v.at_mut(0).copy_from_slice(&[2.0, 1.0, 0.0]);
        w.at_mut(0).copy_from_slice(&[1.0, 3.0, 4.0]);
        assert_eq!(pointwise_product(&v, &w, 0), 5.0);
    }

    #[test]
    fn space_dimensions() {
        let inst =
            Instance::generate_lattice(1, &[4], 1.0, KernelSpec::iso(1.5, 1.0), &[], 1.0).unwrap();
        let all: Vec<usize> = (0..4).collect();
        assert_eq!(build_space(&inst, &all, all_axes(&inst), None).dim(), 8);
        let scalar = build_space(&inst, &all, |_| vec![], None);
        assert_eq!(scalar.dim(), 4);
        let mut c = DMatrix::zeros(1, 8);
        for i in 0..4 {
            c[(0, 2 * i)] = 1.0;
        }
        let s = build_space(&inst, &all, |_| vec![], Some(&c));
        assert_eq!(s.dim(), 3);
        assert!((&c * &s.basis).amax() < 1e-12);
    }

    #[test]
    fn total_volume() {
        let mut inst = lattice(8);
        inst.weights = (0..8).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut v = JetVector::zeros(&inst);
        for i in 0..8 {
            v.at_mut(i)[0] = 1.0;
        }
        let vol: f64 = inst.weights.iter().sum();
        assert!((l2_product(&inst, &v, &v, &[1.0; 8]) - vol).abs() < 1e-14);
        assert_eq!(l2_product(&inst, &v, &v, &[0.0; 8]), 0.0);
    }
}
