use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::{hermitian_deviation, LocalBasis, DENSE_CAP, HERMITIAN_TOL};
use crate::error::{Error, Result};
use crate::linalg::{eigvalsh, reduce_to_window};

use super::MatrixProductOperator;

/// Explicit `d^N x d^N` Hermitian operator, the brute-force oracle at small N.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n_sites: usize,
    d: usize,
    matrix: DMatrix<Complex64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<Complex64>, d: usize) -> Result<Self> {
        let n_sites = sites_for_dim(matrix.nrows(), d)?;
        if matrix.ncols() != matrix.nrows() {
            return Err(Error::ShapeMismatch("dense operator must be square".into()));
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self { n_sites, d, matrix })
    }

    /// `|psi><psi|` for a (not necessarily normalized) state vector.
    pub fn from_pure(psi: &DVector<Complex64>, d: usize) -> Result<Self> {
        Self::new(psi * psi.adjoint(), d)
    }

    pub fn maximally_mixed(n_sites: usize, d: usize) -> Result<Self> {
        check_cap(n_sites)?;
        let dim = d.pow(n_sites as u32);
        let m = DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0));
        Self::new(m, d)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `tr[rho^2]`.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigvalsh(&self.matrix)
    }

    /// Reduction to `len` contiguous sites starting at `start` (0-based).
    pub fn reduce(&self, start: usize, len: usize) -> Result<DenseOperator> {
        if len == 0 || start + len > self.n_sites {
            return Err(Error::InvalidArgument(format!(
                "window {start}..{} outside {} sites",
                start + len,
                self.n_sites
            )));
        }
        let m = reduce_to_window(&self.matrix, self.n_sites, self.d, start, len);
        Ok(Self {
            n_sites: len,
            d: self.d,
            matrix: m,
        })
    }

    /// Full Pauli-coefficient vector `c(a) = tr[rho P(a)]`.
    pub fn coefficients(&self) -> Result<Vec<f64>> {
        LocalBasis::for_dimension(self.d)?.coeffs_from_dense(&self.matrix)
    }

    /// Exact MPO form by sequential SVD of the coefficient tensor.
    pub fn to_mpo(&self) -> Result<MatrixProductOperator> {
        MatrixProductOperator::from_coefficients(&self.coefficients()?, self.d, 1e-13)
    }

    pub fn scaled(&self, factor: f64) -> DenseOperator {
        Self {
            n_sites: self.n_sites,
            d: self.d,
            matrix: self.matrix.scale(factor),
        }
    }
}

pub(crate) fn check_cap(n_sites: usize) -> Result<()> {
    if n_sites > DENSE_CAP {
        return Err(Error::CapExceeded {
            n: n_sites,
            cap: DENSE_CAP,
        });
    }
    Ok(())
}

fn sites_for_dim(dim: usize, d: usize) -> Result<usize> {
    if d < 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    let mut n = 0;
    let mut acc = 1;
    while acc < dim {
        acc *= d;
        n += 1;
    }
    if acc != dim || n == 0 {
        return Err(Error::ShapeMismatch(format!("dimension {dim} is not a power of {d}")));
    }
    check_cap(n)?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximally_mixed_properties() {
        let rho = DenseOperator::maximally_mixed(3, 2).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-15);
        assert!((rho.purity() - 0.125).abs() < 1e-15);
        let one = rho.reduce(1, 1).unwrap();
        assert!((one.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(DenseOperator::new(DMatrix::zeros(3, 3), 2).is_err());
        assert!(matches!(
            DenseOperator::maximally_mixed(13, 2),
            Err(Error::CapExceeded { .. })
        ));
    }
}
