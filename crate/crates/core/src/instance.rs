use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shipped kernel families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    IsoBump,
    LightconeBump,
}

/// Parameters of a compactly supported kernel.
///
/// `cone_offset` shifts the cone variable of the lightcone kernel,
/// `q = dt^2 - k^2 |dx|^2 + cone_offset`, so that the kernel is positive on the
/// diagonal. When absent it defaults to `0.3 * range^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub name: KernelName,
    pub range: f64,
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone_offset: Option<f64>,
}

impl KernelSpec {
    pub fn iso(range: f64, amplitude: f64) -> Self {
        KernelSpec {
            name: KernelName::IsoBump,
            range,
            amplitude,
            cone_slope: None,
            cone_offset: None,
        }
    }

    pub fn lightcone(range: f64, amplitude: f64, slope: f64) -> Self {
        KernelSpec {
            name: KernelName::LightconeBump,
            range,
            amplitude,
            cone_slope: Some(slope),
            cone_offset: None,
        }
    }

    pub fn slope(&self) -> f64 {
        self.cone_slope.unwrap_or(1.0)
    }

    pub fn offset(&self) -> f64 {
        self.cone_offset.unwrap_or(0.3 * self.range * self.range)
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidInstance(format!(
                "kernel {what} must be positive and finite"
            )))
        };
        if !(self.range > 0.0 && self.range.is_finite()) {
            return bad("range");
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return bad("amplitude");
        }
        if self.name == KernelName::LightconeBump {
            if !(self.slope() > 0.0 && self.slope().is_finite()) {
                return bad("cone_slope");
            }
            if !(self.offset() > 0.0 && self.offset().is_finite()) {
                return bad("cone_offset");
            }
        }
        Ok(())
    }
}

/// Value, gradient and Hessian of a displacement kernel `f(d)`.
pub struct KernelJet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// A translation-invariant kernel `L(x, y) = f(x - y)` with `f` even and
/// supported in the ball of radius `range()`.
pub trait Kernel: Send + Sync {
    fn range(&self) -> f64;
    fn eval(&self, d: &[f64]) -> KernelJet;
}

fn bump(d: &[f64], r: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
    // g = 1 - |d|^2/r^2, returns g^2 with derivatives; zero outside the ball
    let m = d.len();
    let d2: f64 = d.iter().map(|x| x * x).sum();
    let r2 = r * r;
    let g = 1.0 - d2 / r2;
    if g <= 0.0 {
        return (0.0, DVector::zeros(m), DMatrix::zeros(m, m));
    }
    let dv = DVector::from_column_slice(d);
    let grad = &dv * (-4.0 * g / r2);
    let mut hess = &dv * dv.transpose() * (8.0 / (r2 * r2));
    for k in 0..m {
        hess[(k, k)] -= 4.0 * g / r2;
    }
    (g * g, grad, hess)
}

impl Kernel for KernelSpec {
    fn range(&self) -> f64 {
        self.range
    }

    fn eval(&self, d: &[f64]) -> KernelJet {
        let m = d.len();
        let c = self.amplitude;
        let (b, gb, hb) = bump(d, self.range);
        match self.name {
            KernelName::IsoBump => KernelJet {
                value: c * b,
                grad: gb * c,
                hess: hb * c,
            },
            KernelName::LightconeBump => {
                let k2 = self.slope() * self.slope();
                let mut q = d[0] * d[0] + self.offset();
                for x in &d[1..] {
                    q -= k2 * x * x;
                }
                if q <= 0.0 || b == 0.0 {
                    return KernelJet {
                        value: 0.0,
                        grad: DVector::zeros(m),
                        hess: DMatrix::zeros(m, m),
                    };
                }
                let mut gq = DVector::zeros(m);
                let mut hq = DMatrix::zeros(m, m);
                gq[0] = 2.0 * d[0];
                hq[(0, 0)] = 2.0;
                for k in 1..m {
                    gq[k] = -2.0 * k2 * d[k];
                    hq[(k, k)] = -2.0 * k2;
                }
                let a = q * q;
                let ga = &gq * (2.0 * q);
                let ha = &gq * gq.transpose() * 2.0 + hq * (2.0 * q);
                let cross = &ga * gb.transpose();
                let hess = (hb * a + ha * b + &cross + cross.transpose()) * c;
                let grad = (gb * a + ga * b) * c;
                KernelJet {
                    value: c * a * b,
                    grad,
                    hess,
                }
            }
        }
    }
}

/// All first and second derivative blocks of `L` at an ordered pair `(x, y)`.
#[derive(Clone, Debug)]
pub struct PairJet {
    pub value: f64,
    pub d1: DVector<f64>,
    pub d2: DVector<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d22: DMatrix<f64>,
}

impl PairJet {
    fn from_kernel(k: KernelJet) -> Self {
        PairJet {
            value: k.value,
            d2: -&k.grad,
            d1: k.grad,
            d12: -&k.hess,
            d22: k.hess.clone(),
            d11: k.hess,
        }
    }

    fn block(
        &self,
        right: &DVector<f64>,
        left: &DVector<f64>,
        hess: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let m = self.d1.len();
        let mut h = DMatrix::zeros(m + 1, m + 1);
        h[(0, 0)] = self.value;
        for k in 0..m {
            h[(0, k + 1)] = right[k];
            h[(k + 1, 0)] = left[k];
            for l in 0..m {
                h[(k + 1, l + 1)] = hess[(k, l)];
            }
        }
        h
    }

    /// Form of `∇_{1,u}∇_{1,v}L`: rows are components of `u(x)`, columns of `v(x)`.
    pub fn h11(&self) -> DMatrix<f64> {
        self.block(&self.d1, &self.d1, &self.d11)
    }

    /// Form of `∇_{1,u}∇_{2,v}L`: rows are components of `u(x)`, columns of `v(y)`.
    pub fn h12(&self) -> DMatrix<f64> {
        self.block(&self.d2, &self.d1, &self.d12)
    }

    /// Form of `∇_{2,u}∇_{2,v}L`: both jets evaluated at `y`.
    pub fn h22(&self) -> DMatrix<f64> {
        self.block(&self.d2, &self.d2, &self.d22)
    }
}

/// Result of [`Instance::eval_kernel`].
#[derive(Clone, Debug)]
pub enum KernelEval {
    Value(f64),
    Gradients {
        d1: DVector<f64>,
        d2: DVector<f64>,
    },
    Hessians {
        d11: DMatrix<f64>,
        d12: DMatrix<f64>,
        d22: DMatrix<f64>,
    },
}

/// Neighbor lists with all kernel blocks, `rows[i]` lists `(j, jet of (x_i, x_j))`
/// for every `j` with nonvanishing kernel data, including `j = i`.
pub struct PairTable {
    pub rows: Vec<Vec<(usize, PairJet)>>,
}

/// A finite weighted point cloud together with its kernel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Instance {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kernel: KernelSpec,
    pub s_param: f64,
    #[serde(default)]
    pub periodic: Option<Vec<Option<f64>>>,
}

impl Instance {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Number of jet coefficients per point.
    pub fn block(&self) -> usize {
        self.dim + 1
    }

    pub fn n_coeffs(&self) -> usize {
        self.n_points() * self.block()
    }

    pub fn period(&self, axis: usize) -> Option<f64> {
        self.periodic
            .as_ref()
            .and_then(|p| p.get(axis).copied().flatten())
    }

    pub fn time(&self, i: usize) -> f64 {
        self.points[i][0]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(msg));
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if self.points.is_empty() {
            return bad("at least one point is required".into());
        }
        if self.weights.len() != self.points.len() {
            return bad(format!(
                "{} weights for {} points",
                self.weights.len(),
                self.points.len()
            ));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.len() != self.dim {
                return bad(format!(
                    "point {i} has {} coordinates, expected {}",
                    p.len(),
                    self.dim
                ));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(i));
            }
        }
        for (i, w) in self.weights.iter().enumerate() {
            if !(*w > 0.0 && w.is_finite()) {
                return bad(format!("weight {i} = {w} is not positive"));
            }
        }
        if !(self.s_param > 0.0 && self.s_param.is_finite()) {
            return bad("s_param must be positive".into());
        }
        if let Some(p) = &self.periodic {
            if p.len() != self.dim {
                return bad(format!(
                    "periodic has {} entries, expected {}",
                    p.len(),
                    self.dim
                ));
            }
            for (a, q) in p.iter().enumerate() {
                if let Some(q) = q {
                    if !(*q > 2.0 * self.kernel.range) {
                        return bad(format!(
                            "period {q} on axis {a} does not exceed twice the kernel range"
                        ));
                    }
                }
            }
        }
        self.kernel.validate()?;
        let mut order: Vec<usize> = (0..self.n_points()).collect();
        order.sort_by(|&a, &b| self.points[a].partial_cmp(&self.points[b]).unwrap());
        for w in order.windows(2) {
            if self.distance(w[0], w[1]) == 0.0 {
                return bad(format!("points {} and {} coincide", w[0], w[1]));
            }
        }
        if self.kernel.eval(&vec![0.0; self.dim]).value <= 0.0 {
            return bad("kernel vanishes on the diagonal".into());
        }
        Ok(())
    }

    /// Minimal-image displacement `x_i - x_j`.
    pub fn displacement(&self, i: usize, j: usize) -> Vec<f64> {
        self.displacement_of(&self.points[i], &self.points[j])
    }

    pub fn displacement_of(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(a, (p, q))| {
                let d = p - q;
                match self.period(a) {
                    Some(per) => d - per * (d / per).round(),
                    None => d,
                }
            })
            .collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.displacement(i, j)
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn pair_jet(&self, i: usize, j: usize) -> PairJet {
        PairJet::from_kernel(self.kernel.eval(&self.displacement(i, j)))
    }

    /// Kernel value `L(x_i, x_j)`.
    pub fn lagrangian(&self, i: usize, j: usize) -> f64 {
        self.kernel.eval(&self.displacement(i, j)).value
    }

    pub fn eval_kernel(&self, i: usize, j: usize, order: u8) -> Result<KernelEval> {
        let n = self.n_points();
        if i >= n || j >= n {
            return Err(Error::Shape(format!(
                "point index out of range ({i}, {j}) for {n} points"
            )));
        }
        for k in [i, j] {
            if self.points[k].iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(k));
            }
        }
        let p = self.pair_jet(i, j);
        match order {
            0 => Ok(KernelEval::Value(p.value)),
            1 => Ok(KernelEval::Gradients { d1: p.d1, d2: p.d2 }),
            2 => Ok(KernelEval::Hessians {
                d11: p.d11,
                d12: p.d12,
                d22: p.d22,
            }),
            o => Err(Error::InvalidOrder(o)),
        }
    }

    /// Indices `j` with `dist(x_i, x_j) < radius`, ascending.
    pub fn ball(&self, i: usize, radius: f64) -> Vec<usize> {
        (0..self.n_points())
            .filter(|&j| self.distance(i, j) < radius)
            .collect()
    }

    /// The compact range `𝔎(K)`: all points within `r + r/10` of `K`.
    pub fn compact_range(&self, k: &[usize]) -> Vec<usize> {
        let reach = 1.1 * self.kernel.range;
        (0..self.n_points())
            .filter(|&j| k.iter().any(|&i| self.distance(i, j) < reach))
            .collect()
    }

    /// Kernel data for all pairs within range, built in parallel over rows.
    pub fn pair_table(&self) -> PairTable {
        let r = self.kernel.range;
        let rows = (0..self.n_points())
            .into_par_iter()
            .map(|i| {
                (0..self.n_points())
                    .filter(|&j| self.distance(i, j) < r)
                    .map(|j| (j, self.pair_jet(i, j)))
                    .collect()
            })
            .collect();
        PairTable { rows }
    }

    /// Copy with coordinate 0 negated, i.e. time reversed.
    pub fn time_mirrored(&self) -> Instance {
        let mut out = self.clone();
        for p in &mut out.points {
            p[0] = -p[0];
        }
        out
    }

    /// Regular lattice with unit weights. Axis 0 varies slowest, so points are
    /// ordered by time row.
    pub fn generate_lattice(
        dim: usize,
        extent: &[usize],
        spacing: f64,
        kernel: KernelSpec,
        periodic_axes: &[usize],
        s_param: f64,
    ) -> Result<Instance> {
        if extent.len() != dim {
            return Err(Error::Lattice(format!(
                "{} extents for dimension {dim}",
                extent.len()
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Lattice("spacing must be positive".into()));
        }
        let mut periodic = vec![None; dim];
        for &a in periodic_axes {
            if a >= dim {
                return Err(Error::Lattice(format!("periodic axis {a} out of range")));
            }
            if extent[a] < 3 {
                return Err(Error::Lattice(format!(
                    "periodic axis {a} needs at least 3 points"
                )));
            }
            let per = extent[a] as f64 * spacing;
            if per <= 2.0 * kernel.range {
                return Err(Error::Lattice(format!(
                    "period {per} on axis {a} does not exceed twice the kernel range {}",
                    kernel.range
                )));
            }
            periodic[a] = Some(per);
        }
        let total: usize = extent.iter().product();
        if total == 0 {
            return Err(Error::Lattice("empty lattice".into()));
        }
        let mut points = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut p = vec![0.0; dim];
            for a in (0..dim).rev() {
                p[a] = (idx % extent[a]) as f64 * spacing;
                idx /= extent[a];
            }
            points.push(p);
        }
        let inst = Instance {
            dim,
            weights: vec![1.0; total],
            points,
            kernel,
            s_param,
            periodic: if periodic_axes.is_empty() {
                None
            } else {
                Some(periodic)
            },
        };
        inst.validate()?;
        Ok(inst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64], kernel: KernelSpec) -> Instance {
        Instance {
            dim: 1,
            points: xs.iter().map(|&x| vec![x]).collect(),
            weights: vec![1.0; xs.len()],
            kernel,
            s_param: 1.0,
            periodic: None,
        }
    }

    #[test]
    fn iso_examples() {
        let inst = line(&[0.0, 1.0, 2.0], KernelSpec::iso(2.0, 1.0));
        let p = inst.pair_jet(0, 0);
        assert_eq!(p.value, 1.0);
        assert_eq!(p.d1[0], 0.0);
        let p = inst.pair_jet(1, 0);
        assert!((p.value - 0.5625).abs() < 1e-15);
        assert!((p.d1[0] + 0.75).abs() < 1e-15);
        let p = inst.pair_jet(2, 0);
        assert_eq!(p.value, 0.0);
        assert_eq!(p.d1[0], 0.0);
        assert_eq!(p.d11[(0, 0)], 0.0);
    }

    #[test]
    fn bad_order_rejected() {
        let inst = line(&[0.0, 1.0], KernelSpec::iso(2.0, 1.0));
        assert!(matches!(
            inst.eval_kernel(0, 1, 3),
            Err(Error::InvalidOrder(3))
        ));
    }

    #[test]
    fn lattice_guards() {
        let k = KernelSpec::iso(2.5, 1.0);
        assert!(Instance::generate_lattice(1, &[4], 1.0, k.clone(), &[0], 1.0).is_err());
        let inst =
            Instance::generate_lattice(2, &[8, 8], 1.0, KernelSpec::iso(1.5, 1.0), &[1], 1.0)
                .unwrap();
        assert_eq!(inst.n_points(), 64);
    }

    #[test]
    fn compact_range_on_line() {
        let xs: Vec<f64> = (-6..=6).map(|i| i as f64).collect();
        let inst = line(&xs, KernelSpec::iso(2.5, 1.0));
        let got = inst.compact_range(&[6]);
        let want: Vec<usize> = (0..xs.len()).filter(|&j| xs[j].abs() < 2.75).collect();
        assert_eq!(got, want);
        assert!(inst.compact_range(&[]).is_empty());
    }
}
