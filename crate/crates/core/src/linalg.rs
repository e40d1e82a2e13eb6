//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative singular-value cutoff used for all rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis (as columns) of the null space of `a`, deciding rank with
/// singular values below `rel_tol * largest`.
///
/// Columns of `a` that are identically zero are free coordinates and are split
/// off before the SVD, which keeps the decomposition small for sparse
/// constraint sets.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    null_space_with(a, |smax| rel_tol * smax)
}

/// Null space with an absolute singular-value threshold.
pub fn null_space_abs(a: &DMatrix<f64>, abs_tol: f64) -> DMatrix<f64> {
    null_space_with(a, |_| abs_tol)
}

fn null_space_with(a: &DMatrix<f64>, cutoff: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = a.ncols();
    let (free, used): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&j| a.column(j).iter().all(|&x| x == 0.0));
    let mut cols: Vec<DVector<f64>> = free
        .iter()
        .map(|&j| {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            e
        })
        .collect();
    if !used.is_empty() {
        let k = used.len();
        let rows = a.nrows().max(k);
        // pad to at least square so that the SVD returns a full right basis
        let mut sub = DMatrix::zeros(rows, k);
        for (c, &j) in used.iter().enumerate() {
            sub.view_mut((0, c), (a.nrows(), 1)).copy_from(&a.column(j));
        }
        let svd = sub.svd(false, true);
        let vt = svd.v_t.expect("right singular vectors");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let thr = cutoff(smax);
        for (r, &s) in svd.singular_values.iter().enumerate() {
            if s <= thr || smax == 0.0 {
                let mut e = DVector::zeros(n);
                for (c, &j) in used.iter().enumerate() {
                    e[j] = vt[(r, c)];
                }
                cols.push(e);
            }
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&cols)
}

/// Orthonormal basis of the column span of `a` (rank decided relative to the
/// largest singular value).
pub fn orthonormal_span(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| smax > 0.0 && svd.singular_values[k] > rel_tol * smax)
        .collect();
    let cols: Vec<DVector<f64>> = keep.iter().map(|&k| u.column(k).into_owned()).collect();
    if cols.is_empty() {
        DMatrix::zeros(a.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimal-norm least-squares solver `x = A⁺ b` with a relative singular-value cutoff.
#[derive(Clone, Debug)]
pub struct MinNormSolver {
    u: DMatrix<f64>,
    s_inv: DVector<f64>,
    v: DMatrix<f64>,
    pub rank: usize,
    pub sigma_max: f64,
    pub sigma_min_kept: f64,
}

impl MinNormSolver {
    pub fn new(a: &DMatrix<f64>, rel_tol: f64) -> Self {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return MinNormSolver {
                u: DMatrix::zeros(m, 0),
                s_inv: DVector::zeros(0),
                v: DMatrix::zeros(n, 0),
                rank: 0,
                sigma_max: 0.0,
                sigma_min_kept: 0.0,
            };
        }
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("left singular vectors");
        let vt = svd.v_t.expect("right singular vectors");
        let sv = svd.singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..sv.len())
            .filter(|&k| smax > 0.0 && sv[k] > rel_tol * smax)
            .collect();
        let rank = keep.len();
        let mut uk = DMatrix::zeros(m, rank);
        let mut vk = DMatrix::zeros(n, rank);
        let mut s_inv = DVector::zeros(rank);
        let mut smin = f64::INFINITY;
        for (c, &k) in keep.iter().enumerate() {
            uk.set_column(c, &u.column(k));
            vk.set_column(c, &vt.row(k).transpose());
            s_inv[c] = 1.0 / sv[k];
            smin = smin.min(sv[k]);
        }
        MinNormSolver {
            u: uk,
            s_inv,
            v: vk,
            rank,
            sigma_max: smax,
            sigma_min_kept: if rank == 0 { 0.0 } else { smin },
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let c = self.u.transpose() * b;
        &self.v * c.component_mul(&self.s_inv)
    }

    /// Orthonormal basis of the row space (the orthogonal complement of the null space).
    pub fn row_space(&self) -> &DMatrix<f64> {
        &self.v
    }
}

/// Smallest eigenvalue of the pencil `(p, b)` for symmetric `p` and symmetric
/// positive definite `b`. Returns `None` when `b` is not positive definite.
pub fn min_generalized_eigen(p: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<(f64, DVector<f64>)> {
    let chol = b.clone().cholesky()?;
    let l = chol.l();
    let linv = l.clone().try_inverse()?;
    let c = &linv * p * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let (k, lam) =
        eig.eigenvalues
            .iter()
            .cloned()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (k, v)| if v < acc.1 { (k, v) } else { acc },
            );
    let y = eig.eigenvectors.column(k).into_owned();
    let x = linv.transpose() * y;
    Some((lam, x))
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let a = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(eig.eigenvectors.nrows(), order.len());
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
