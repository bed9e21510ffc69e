//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative singular-value cutoff used wherever two ranks are compared.
pub const RANK_TOL: f64 = 1e-9;

/// Thin SVD with singular values sorted in descending order.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

impl SortedSvd {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("SVD input".into()));
        }
        let k = m.nrows().min(m.ncols());
        if k == 0 {
            return Ok(Self {
                u: DMatrix::zeros(m.nrows(), 0),
                singular_values: Vec::new(),
                v_t: DMatrix::zeros(0, m.ncols()),
            });
        }
        let svd = m.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested V^T");
        let s = svd.singular_values;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        Ok(Self {
            u: u.select_columns(&order),
            singular_values: order.iter().map(|&i| s[i]).collect(),
            v_t: v_t.select_rows(&order),
        })
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        numerical_rank(&self.singular_values, rel_tol)
    }
}

/// Number of singular values above `rel_tol * s_max`.
pub fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    let top = singular_values.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > rel_tol * top).count()
}

pub fn rank_of(m: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    Ok(SortedSvd::new(m)?.rank(rel_tol))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (values, eig.eigenvectors.select_columns(&order))
}

pub fn eigvalsh(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().cloned().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `f(H)` for Hermitian `H`, applied through the spectral decomposition.
pub fn hermitian_function<F>(h: &DMatrix<Complex64>, f: F) -> DMatrix<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    let (vals, vecs) = eigh(h);
    let mut scaled = vecs.clone();
    for (j, &lam) in vals.iter().enumerate() {
        let fj = f(lam);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * vecs.adjoint()
}

/// Largest singular value of a Hermitian matrix.
pub fn hermitian_op_norm(h: &DMatrix<Complex64>) -> f64 {
    eigvalsh(h).iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Partial trace keeping `len` contiguous sites starting at `start` (0-based).
pub fn reduce_to_window(
    rho: &DMatrix<Complex64>,
    n_sites: usize,
    d: usize,
    start: usize,
    len: usize,
) -> DMatrix<Complex64> {
    let left = d.pow(start as u32);
    let keep = d.pow(len as u32);
    let right = d.pow((n_sites - start - len) as u32);
    let mut out = DMatrix::zeros(keep, keep);
    for a in 0..left {
        for c in 0..right {
            for i in 0..keep {
                let row = (a * keep + i) * right + c;
                for j in 0..keep {
                    let col = (a * keep + j) * right + c;
                    out[(i, j)] += rho[(row, col)];
                }
            }
        }
    }
    out
}

/// Complex Ginibre matrix with real and imaginary parts i.i.d. N(0, 1).
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    })
}

/// `(G + G^dagger) / 2` for a Ginibre `G`.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<Complex64> {
    let g = ginibre(dim, dim, rng);
    (&g + g.adjoint()).scale(0.5)
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn max_abs_diff_c(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Hilbert-Schmidt inner product `tr[a^dagger b]`.
pub fn hs_inner(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn dvector_from(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
