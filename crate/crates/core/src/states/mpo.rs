use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::{string_length, LocalBasis, DENSE_CAP};
use crate::error::{Error, Result};
use crate::linalg::SortedSvd;

use super::DenseOperator;

/// One MPO site: a real `D_left x D_right` matrix for every basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor {
    matrices: Vec<DMatrix<f64>>,
}

impl SiteTensor {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::ShapeMismatch("site tensor without matrices".into()))?;
        let shape = first.shape();
        if matrices.iter().any(|m| m.shape() != shape) {
            return Err(Error::ShapeMismatch("site matrices differ in shape".into()));
        }
        Ok(Self { matrices })
    }

    pub fn zeros(q: usize, left: usize, right: usize) -> Self {
        Self {
            matrices: vec![DMatrix::zeros(left, right); q],
        }
    }

    pub fn left(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn right(&self) -> usize {
        self.matrices[0].ncols()
    }

    pub fn basis_len(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrix(&self, alpha: usize) -> &DMatrix<f64> {
        &self.matrices[alpha]
    }

    pub fn matrix_mut(&mut self, alpha: usize) -> &mut DMatrix<f64> {
        &mut self.matrices[alpha]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }
}

/// Matrix product operator in Pauli-coefficient form,
/// `c(a_1..a_N) = P_1[a_1] .. P_N[a_N]` with `O = sum_a c(a) P(a_1)..P(a_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProductOperator {
    d: usize,
    sites: Vec<SiteTensor>,
}

impl MatrixProductOperator {
    pub fn new(d: usize, sites: Vec<SiteTensor>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidArgument("MPO needs at least one site".into()));
        }
        let q = d * d;
        for (i, s) in sites.iter().enumerate() {
            if s.basis_len() != q {
                return Err(Error::ShapeMismatch(format!(
                    "site {i} has {} basis matrices, expected {q}",
                    s.basis_len()
                )));
            }
            if i > 0 && sites[i - 1].right() != s.left() {
                return Err(Error::ShapeMismatch(format!("bond mismatch before site {i}")));
            }
            if s.matrices.iter().flat_map(|m| m.iter()).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("MPO site {i}")));
            }
        }
        if sites[0].left() != 1 || sites[sites.len() - 1].right() != 1 {
            return Err(Error::ShapeMismatch("boundary bonds must be 1".into()));
        }
        Ok(Self { d, sites })
    }

    /// Product operator from one coefficient vector per site.
    pub fn product(d: usize, local: &[Vec<f64>]) -> Result<Self> {
        let q = d * d;
        let sites = local
            .iter()
            .map(|c| {
                if c.len() != q {
                    return Err(Error::ShapeMismatch(format!("local coefficients need length {q}")));
                }
                SiteTensor::new(c.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, sites)
    }

    /// `1 / d^N` as a bond-one MPO.
    pub fn maximally_mixed(n_sites: usize, d: usize) -> Result<Self> {
        let mut local = vec![0.0; d * d];
        local[0] = 1.0 / (d as f64).sqrt();
        Self::product(d, &vec![local; n_sites])
    }

    /// Random real MPO with i.i.d. standard-normal tensor entries and
    /// uniform interior bond dimension `bond`.
    pub fn random_real<R: Rng + ?Sized>(n_sites: usize, d: usize, bond: usize, rng: &mut R) -> Result<Self> {
        let q = d * d;
        let sites = (0..n_sites)
            .map(|i| {
                let left = if i == 0 { 1 } else { bond };
                let right = if i + 1 == n_sites { 1 } else { bond };
                SiteTensor::new(
                    (0..q)
                        .map(|_| DMatrix::from_fn(left, right, |_, _| rng.sample(StandardNormal)))
                        .collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, sites)
    }

    /// Exact factorization of a coefficient vector by sequential SVD,
    /// discarding singular values below `rel_tol * s_max` at each cut.
    pub fn from_coefficients(coeffs: &[f64], d: usize, rel_tol: f64) -> Result<Self> {
        let q = d * d;
        let n = string_length(coeffs.len(), q)?;
        if n == 0 {
            return Err(Error::InvalidArgument("empty coefficient vector".into()));
        }
        let mut sites = Vec::with_capacity(n);
        // remainder: bond x q^(n - i), row-major
        let mut bond = 1;
        let mut rest = coeffs.len();
        let mut remainder = coeffs.to_vec();
        for _ in 0..n - 1 {
            let cols = rest / q;
            let m = DMatrix::from_fn(bond * q, cols, |row, col| remainder[row * cols + col]);
            let svd = SortedSvd::new(&m)?;
            let keep = svd.rank(rel_tol).max(1);
            let mut site = SiteTensor::zeros(q, bond, keep);
            for a in 0..bond {
                for alpha in 0..q {
                    for b in 0..keep {
                        site.matrices[alpha][(a, b)] = svd.u[(a * q + alpha, b)];
                    }
                }
            }
            sites.push(site);
            let mut next = vec![0.0; keep * cols];
            for b in 0..keep {
                let s = svd.singular_values[b];
                for col in 0..cols {
                    next[b * cols + col] = s * svd.v_t[(b, col)];
                }
            }
            remainder = next;
            bond = keep;
            rest = cols;
        }
        let mut last = SiteTensor::zeros(q, bond, 1);
        for a in 0..bond {
            for alpha in 0..q {
                last.matrices[alpha][(a, 0)] = remainder[a * q + alpha];
            }
        }
        sites.push(last);
        Self::new(d, sites)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sites(&self) -> &[SiteTensor] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &SiteTensor {
        &self.sites[i]
    }

    /// `D_1 .. D_{N+1}` with `D_1 = D_{N+1} = 1`.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.sites.iter().map(|s| s.left()).collect();
        dims.push(1);
        dims
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// `c(a)` by left-to-right vector-matrix products.
    pub fn expectation(&self, alphas: &[usize]) -> Result<f64> {
        if alphas.len() != self.n_sites() {
            return Err(Error::ShapeMismatch(format!(
                "string of length {} for {} sites",
                alphas.len(),
                self.n_sites()
            )));
        }
        let q = self.d * self.d;
        let mut row = DMatrix::from_element(1, 1, 1.0);
        for (site, &a) in self.sites.iter().zip(alphas) {
            if a >= q {
                return Err(Error::IndexOutOfRange {
                    what: "basis",
                    index: a,
                    bound: q,
                });
            }
            row = row * site.matrix(a);
        }
        Ok(row[(0, 0)])
    }

    /// `tr[O] = d^(N/2) c(0..0)`.
    pub fn trace(&self) -> f64 {
        let c0 = self
            .expectation(&vec![0; self.n_sites()])
            .expect("identity string has the right length");
        c0 * (self.d as f64).powf(self.n_sites() as f64 / 2.0)
    }

    /// Coefficients of the reduction to `len` sites starting at `start`
    /// (0-based), i.e. `tr[O P(a_1)..P(a_len)]` with identities elsewhere.
    pub fn window_coefficients(&self, start: usize, len: usize) -> Result<Vec<f64>> {
        let n = self.n_sites();
        if len == 0 || start + len > n {
            return Err(Error::InvalidArgument(format!("window {start}..{} outside {n} sites", start + len)));
        }
        let sqrt_d = (self.d as f64).sqrt();
        let mut left = DMatrix::from_element(1, 1, 1.0);
        for site in &self.sites[..start] {
            left = (left * site.matrix(0)) * sqrt_d;
        }
        let mut right = DMatrix::from_element(1, 1, 1.0);
        for site in self.sites[start + len..].iter().rev() {
            right = (site.matrix(0) * right) * sqrt_d;
        }
        Ok(self.contract_window(start, len, left, &right))
    }

    /// [`window_coefficients`](Self::window_coefficients) for every window of
    /// `len` sites, sharing the identity environments between windows.
    pub fn all_window_coefficients(&self, len: usize) -> Result<Vec<Vec<f64>>> {
        let n = self.n_sites();
        if len == 0 || len > n {
            return Err(Error::InvalidArgument(format!("window length {len} invalid for {n} sites")));
        }
        let sqrt_d = (self.d as f64).sqrt();
        // rights[s] traces out sites s..n
        let mut rights = vec![DMatrix::from_element(1, 1, 1.0); n + 1];
        for s in (0..n).rev() {
            rights[s] = (self.sites[s].matrix(0) * &rights[s + 1]) * sqrt_d;
        }
        let mut left = DMatrix::from_element(1, 1, 1.0);
        let mut out = Vec::with_capacity(n - len + 1);
        for start in 0..=n - len {
            out.push(self.contract_window(start, len, left.clone(), &rights[start + len]));
            left = (left * self.sites[start].matrix(0)) * sqrt_d;
        }
        Ok(out)
    }

    fn contract_window(&self, start: usize, len: usize, left: DMatrix<f64>, right: &DMatrix<f64>) -> Vec<f64> {
        let q = self.d * self.d;
        let mut rows = vec![left];
        for site in &self.sites[start..start + len] {
            let mut next = Vec::with_capacity(rows.len() * q);
            for r in &rows {
                for a in 0..q {
                    next.push(r * site.matrix(a));
                }
            }
            rows = next;
        }
        rows.iter().map(|r| (r * right)[(0, 0)]).collect()
    }

    /// All `d^(2N)` coefficients. Limited by the dense cap.
    pub fn coefficients(&self) -> Result<Vec<f64>> {
        if self.n_sites() > DENSE_CAP {
            return Err(Error::CapExceeded {
                n: self.n_sites(),
                cap: DENSE_CAP,
            });
        }
        self.window_coefficients(0, self.n_sites())
    }

    pub fn to_dense(&self) -> Result<DenseOperator> {
        let basis = LocalBasis::for_dimension(self.d)?;
        let m = basis.dense_from_coeffs(&self.coefficients()?)?;
        DenseOperator::new(m, self.d)
    }

    /// Hilbert-Schmidt inner product `tr[A B] = sum_a c_A(a) c_B(a)` by
    /// transfer contraction.
    pub fn inner(&self, other: &MatrixProductOperator) -> Result<f64> {
        if self.n_sites() != other.n_sites() || self.d != other.d {
            return Err(Error::ShapeMismatch("MPOs differ in size or local dimension".into()));
        }
        let mut env = DMatrix::from_element(1, 1, 1.0);
        for (a, b) in self.sites.iter().zip(&other.sites) {
            let mut next = DMatrix::zeros(a.right(), b.right());
            for (ma, mb) in a.matrices.iter().zip(&b.matrices) {
                next += ma.transpose() * &env * mb;
            }
            env = next;
        }
        Ok(env[(0, 0)])
    }

    /// `tr[O^2]`.
    pub fn purity(&self) -> f64 {
        self.inner(self).expect("same shape")
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in out.sites[0].matrices.iter_mut() {
            *m *= factor;
        }
        out
    }

    /// Rescaled to unit trace.
    pub fn trace_normalized(&self) -> Result<Self> {
        let t = self.trace();
        if t == 0.0 || !t.is_finite() {
            return Err(Error::ZeroTrace);
        }
        Ok(self.scaled(1.0 / t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::pack;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_site_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mpo = MatrixProductOperator::product(2, &[vec![s, 0.0, 0.0, 0.0]]).unwrap();
        let dense = mpo.to_dense().unwrap();
        let m = dense.matrix();
        assert!((m[(0, 0)] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((m[(1, 1)] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(m[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn product_of_zero_projectors() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let zero = vec![s, 0.0, 0.0, s];
        let mpo = MatrixProductOperator::product(2, &vec![zero; 3]).unwrap();
        let m = mpo.to_dense().unwrap().into_matrix();
        for i in 0..8 {
            for j in 0..8 {
                let e = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert!((m[(i, j)] - Complex64::new(e, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn dense_round_trip_reproduces_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mpo = MatrixProductOperator::random_real(5, 2, 3, &mut rng).unwrap();
        let c = mpo.coefficients().unwrap();
        let back = mpo.to_dense().unwrap().coefficients().unwrap();
        let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in c.iter().zip(&back) {
            assert!((x - y).abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn expectation_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mpo = MatrixProductOperator::random_real(6, 2, 3, &mut rng).unwrap();
        let c = mpo.to_dense().unwrap().coefficients().unwrap();
        for _ in 0..50 {
            let alphas: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
            let direct = mpo.expectation(&alphas).unwrap();
            assert!((direct - c[pack(&alphas, 2)]).abs() < 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn identity_string_of_trace_one_state() {
        let mpo = MatrixProductOperator::maximally_mixed(4, 2).unwrap();
        assert!((mpo.expectation(&[0; 4]).unwrap() - 0.25).abs() < 1e-15);
        assert!((mpo.trace() - 1.0).abs() < 1e-14);
        assert!((mpo.purity() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn from_coefficients_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mpo = MatrixProductOperator::random_real(5, 2, 2, &mut rng).unwrap();
        let c = mpo.coefficients().unwrap();
        let refit = MatrixProductOperator::from_coefficients(&c, 2, 1e-13).unwrap();
        assert!(refit.max_bond() <= 4);
        let c2 = refit.coefficients().unwrap();
        let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(c.iter().zip(&c2).all(|(x, y)| (x - y).abs() < 1e-11 * scale));
    }

    #[test]
    fn window_coefficients_match_dense_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mpo = MatrixProductOperator::random_real(5, 2, 2, &mut rng).unwrap();
        let dense = mpo.to_dense().unwrap();
        let from_mpo = mpo.window_coefficients(1, 3).unwrap();
        let from_dense = dense.reduce(1, 3).unwrap().coefficients().unwrap();
        for (x, y) in from_mpo.iter().zip(&from_dense) {
            assert!((x - y).abs() < 1e-11 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn inner_product_matches_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = MatrixProductOperator::random_real(4, 2, 2, &mut rng).unwrap();
        let b = MatrixProductOperator::random_real(4, 2, 3, &mut rng).unwrap();
        let ca = a.coefficients().unwrap();
        let cb = b.coefficients().unwrap();
        let direct: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
        assert!((a.inner(&b).unwrap() - direct).abs() < 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn rejects_inconsistent_bonds() {
        let a = SiteTensor::zeros(4, 1, 2);
        let b = SiteTensor::zeros(4, 3, 1);
        assert!(MatrixProductOperator::new(2, vec![a, b]).is_err());
    }
}
