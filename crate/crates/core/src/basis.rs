//! Orthonormal single-site operator basis and the coefficient conventions
//! shared by every other module.
//!
//! For qubits the basis is `(1, X, Y, Z) / sqrt(2)`, so that
//! `tr[P(a) P(b)] = delta(a, b)`. A string of basis elements over `m` sites is
//! addressed by a multi-index `(a_1, .., a_m)` packed big-endian: site 1 is the
//! most significant digit in base `d^2`. Dense matrices use the matching
//! Kronecker order (site 1 most significant).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest number of sites for which dense `d^N x d^N` matrices are built.
pub const DENSE_CAP: usize = 12;

/// Hermiticity tolerance for dense inputs.
pub const HERMITIAN_TOL: f64 = 1e-10;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// A normalized Hermitian operator basis for one site of local dimension `d`.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    d: usize,
    elements: Vec<DMatrix<Complex64>>,
}

impl LocalBasis {
    /// The normalized Pauli basis `(1, X, Y, Z) / sqrt(2)`.
    pub fn qubit() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| Complex64::new(re * s, im * s);
        let elements = vec![
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), C0, C0, c(1.0, 0.0)]),
            DMatrix::from_row_slice(2, 2, &[C0, c(1.0, 0.0), c(1.0, 0.0), C0]),
            DMatrix::from_row_slice(2, 2, &[C0, c(0.0, -1.0), c(0.0, 1.0), C0]),
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), C0, C0, c(-1.0, 0.0)]),
        ];
        Self { d: 2, elements }
    }

    /// Basis for local dimension `d`. Only `d = 2` is provided.
    pub fn for_dimension(d: usize) -> Result<Self> {
        match d {
            2 => Ok(Self::qubit()),
            _ => Err(Error::UnsupportedDimension(d)),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of basis elements, `d^2`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, alpha: usize) -> Result<&DMatrix<Complex64>> {
        self.elements.get(alpha).ok_or(Error::IndexOutOfRange {
            what: "basis",
            index: alpha,
            bound: self.elements.len(),
        })
    }

    /// Kronecker product `P(a_1) x .. x P(a_m)`.
    pub fn string_dense(&self, alphas: &[usize]) -> Result<DMatrix<Complex64>> {
        if alphas.len() > DENSE_CAP {
            return Err(Error::CapExceeded {
                n: alphas.len(),
                cap: DENSE_CAP,
            });
        }
        let mut out = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for &a in alphas {
            out = out.kronecker(self.element(a)?);
        }
        Ok(out)
    }

    /// Pauli coefficients `c(a) = tr[M P(a_1)..P(a_m)]` of a Hermitian matrix.
    pub fn coeffs_from_dense(&self, m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
        let dev = hermitian_deviation(m);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let sites = self.sites_of(m.nrows())?;
        if m.ncols() != m.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let q = self.len();
        // tr[M P] = sum_ij M_ij P_ji
        let mut forward = vec![C0; q * q];
        for (a, p) in self.elements.iter().enumerate() {
            for i in 0..self.d {
                for j in 0..self.d {
                    forward[a * q + i * self.d + j] = p[(j, i)];
                }
            }
        }
        let mut data = interleave(m, self.d, sites);
        for site in 0..sites {
            apply_site_map(&mut data, q, sites, site, &forward);
        }
        Ok(data.into_iter().map(|z| z.re).collect())
    }

    /// Inverse of [`coeffs_from_dense`](Self::coeffs_from_dense).
    pub fn dense_from_coeffs(&self, coeffs: &[f64]) -> Result<DMatrix<Complex64>> {
        let q = self.len();
        let sites = string_length(coeffs.len(), q)?;
        if sites > DENSE_CAP {
            return Err(Error::CapExceeded {
                n: sites,
                cap: DENSE_CAP,
            });
        }
        // M_ij = sum_a c_a P(a)_ij
        let mut backward = vec![C0; q * q];
        for (a, p) in self.elements.iter().enumerate() {
            for i in 0..self.d {
                for j in 0..self.d {
                    backward[(i * self.d + j) * q + a] = p[(i, j)];
                }
            }
        }
        let mut data: Vec<Complex64> = coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect();
        for site in 0..sites {
            apply_site_map(&mut data, q, sites, site, &backward);
        }
        Ok(deinterleave(&data, self.d, sites))
    }

    fn sites_of(&self, dim: usize) -> Result<usize> {
        let mut n = 0;
        let mut acc = 1;
        while acc < dim {
            acc *= self.d;
            n += 1;
        }
        if acc != dim {
            return Err(Error::ShapeMismatch(format!(
                "dimension {dim} is not a power of d = {}",
                self.d
            )));
        }
        if n > DENSE_CAP {
            return Err(Error::CapExceeded { n, cap: DENSE_CAP });
        }
        Ok(n)
    }
}

/// Normalized qubit Pauli matrix for basis index `alpha` in `0..4`.
pub fn pauli_matrix(alpha: usize) -> Result<DMatrix<Complex64>> {
    LocalBasis::qubit().element(alpha).cloned()
}

/// Dense Kronecker product of qubit basis elements.
pub fn pauli_string_dense(alphas: &[usize]) -> Result<DMatrix<Complex64>> {
    LocalBasis::qubit().string_dense(alphas)
}

/// Qubit Pauli coefficients of a Hermitian `2^m x 2^m` matrix.
pub fn coeffs_from_dense(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    LocalBasis::qubit().coeffs_from_dense(m)
}

pub fn dense_from_coeffs(coeffs: &[f64]) -> Result<DMatrix<Complex64>> {
    LocalBasis::qubit().dense_from_coeffs(coeffs)
}

/// Packs `(a_1, .., a_m)` into `sum a_i q^(m-i)` with `q = d^2`.
pub fn pack(alphas: &[usize], d: usize) -> usize {
    let q = d * d;
    alphas.iter().fold(0, |acc, &a| acc * q + a)
}

pub fn unpack(mut index: usize, m: usize, d: usize) -> Vec<usize> {
    let q = d * d;
    let mut out = vec![0; m];
    for slot in out.iter_mut().rev() {
        *slot = index % q;
        index /= q;
    }
    out
}

/// Number of sites `m` such that `len == q^m`.
pub fn string_length(len: usize, q: usize) -> Result<usize> {
    let mut m = 0;
    let mut acc = 1;
    while acc < len {
        acc *= q;
        m += 1;
    }
    if acc != len {
        return Err(Error::ShapeMismatch(format!(
            "coefficient vector length {len} is not a power of {q}"
        )));
    }
    Ok(m)
}

/// Largest absolute entry of `M - M^dagger`.
pub fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Reorders a `d^m x d^m` matrix into a vector indexed by interleaved
/// `(i_1 j_1, .., i_m j_m)` pairs, each pair a base-`d^2` digit.
fn interleave(m: &DMatrix<Complex64>, d: usize, sites: usize) -> Vec<Complex64> {
    let dim = m.nrows();
    let mut out = vec![C0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[pair_index(i, j, d, sites)] = m[(i, j)];
        }
    }
    out
}

fn deinterleave(data: &[Complex64], d: usize, sites: usize) -> DMatrix<Complex64> {
    let dim = d.pow(sites as u32);
    DMatrix::from_fn(dim, dim, |i, j| data[pair_index(i, j, d, sites)])
}

fn pair_index(mut i: usize, mut j: usize, d: usize, sites: usize) -> usize {
    let q = d * d;
    let mut idx = 0;
    let mut scale = 1;
    for _ in 0..sites {
        idx += ((i % d) * d + (j % d)) * scale;
        i /= d;
        j /= d;
        scale *= q;
    }
    idx
}

/// Applies a `q x q` map (row-major) to digit `site` of a base-`q` tensor.
fn apply_site_map(data: &mut [Complex64], q: usize, sites: usize, site: usize, map: &[Complex64]) {
    let inner = q.pow((sites - site - 1) as u32);
    let outer = data.len() / (inner * q);
    let mut buf = vec![C0; q];
    for o in 0..outer {
        let base = o * q * inner;
        for t in 0..inner {
            for (a, slot) in buf.iter_mut().enumerate() {
                let mut acc = C0;
                for b in 0..q {
                    acc += map[a * q + b] * data[base + b * inner + t];
                }
                *slot = acc;
            }
            for (a, v) in buf.iter().enumerate() {
                data[base + a * inner + t] = *v;
            }
        }
    }
}
