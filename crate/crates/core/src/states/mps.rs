use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::basis::LocalBasis;
use crate::error::{Error, Result};
use crate::linalg::ginibre;

use super::dense::check_cap;
use super::mpo::{MatrixProductOperator, SiteTensor};

/// Kraus operators of a single-site channel.
pub type Kraus = Vec<DMatrix<Complex64>>;

/// Open-boundary matrix product state, `psi(s) = A_1[s_1] .. A_N[s_N]`.
#[derive(Debug, Clone)]
pub struct MatrixProductState {
    d: usize,
    tensors: Vec<Vec<DMatrix<Complex64>>>,
}

impl MatrixProductState {
    pub fn new(d: usize, tensors: Vec<Vec<DMatrix<Complex64>>>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::InvalidArgument("MPS needs at least one site".into()));
        }
        for (i, site) in tensors.iter().enumerate() {
            if site.len() != d {
                return Err(Error::ShapeMismatch(format!("site {i} needs {d} matrices")));
            }
            let shape = site[0].shape();
            if site.iter().any(|m| m.shape() != shape) {
                return Err(Error::ShapeMismatch(format!("site {i} matrices differ in shape")));
            }
            if i > 0 && tensors[i - 1][0].ncols() != shape.0 {
                return Err(Error::ShapeMismatch(format!("bond mismatch before site {i}")));
            }
        }
        if tensors[0][0].nrows() != 1 || tensors[tensors.len() - 1][0].ncols() != 1 {
            return Err(Error::ShapeMismatch("boundary bonds must be 1".into()));
        }
        Ok(Self { d, tensors })
    }

    /// Tensor entries with real and imaginary parts i.i.d. N(0, 1),
    /// interior bond dimension `bond`, normalized to unit norm.
    pub fn random_gaussian<R: Rng + ?Sized>(n_sites: usize, d: usize, bond: usize, rng: &mut R) -> Result<Self> {
        let tensors = (0..n_sites)
            .map(|i| {
                let left = if i == 0 { 1 } else { bond };
                let right = if i + 1 == n_sites { 1 } else { bond };
                (0..d).map(|_| ginibre(left, right, rng)).collect()
            })
            .collect();
        let mut mps = Self::new(d, tensors)?;
        mps.normalize()?;
        Ok(mps)
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tensors(&self) -> &[Vec<DMatrix<Complex64>>] {
        &self.tensors
    }

    /// `<psi|psi>` by transfer contraction.
    pub fn norm_sqr(&self) -> f64 {
        let mut env = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for site in &self.tensors {
            let mut next = DMatrix::zeros(site[0].ncols(), site[0].ncols());
            for a in site {
                next += a.adjoint() * &env * a;
            }
            env = next;
        }
        env[(0, 0)].re
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let f = Complex64::new(1.0 / n.sqrt(), 0.0);
        for a in self.tensors[0].iter_mut() {
            *a *= f;
        }
        Ok(())
    }

    /// Full state vector, site 1 most significant.
    pub fn to_vector(&self) -> Result<DVector<Complex64>> {
        check_cap(self.n_sites())?;
        let mut rows: Vec<DMatrix<Complex64>> = vec![DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))];
        for site in &self.tensors {
            let mut next = Vec::with_capacity(rows.len() * self.d);
            for r in &rows {
                for a in site {
                    next.push(r * a);
                }
            }
            rows = next;
        }
        Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r[(0, 0)])))
    }

    /// `|psi><psi|` (optionally followed by a local channel on every site)
    /// as a real Pauli-coefficient MPO of bond dimension `D^2`.
    ///
    /// The bond space of each cut is the real span of Hermitian `D x D`
    /// matrices; the transfer map `X -> sum_{s,s'} Q_{s s'} A[s]^dag X A[s']`
    /// with Hermitian `Q` preserves it, which keeps every tensor real.
    pub fn to_mpo(&self, channels: Option<&[Kraus]>) -> Result<MatrixProductOperator> {
        if let Some(ch) = channels {
            if ch.len() != self.n_sites() {
                return Err(Error::ShapeMismatch("one channel per site required".into()));
            }
        }
        let basis = LocalBasis::for_dimension(self.d)?;
        let q = basis.len();
        let mut sites = Vec::with_capacity(self.n_sites());
        for (i, a) in self.tensors.iter().enumerate() {
            let (dl, dr) = a[0].shape();
            let hl = hermitian_basis(dl);
            let hr = hermitian_basis(dr);
            // Heisenberg-picture observables Q = Phi^dag(P)
            let observables: Vec<DMatrix<Complex64>> = (0..q)
                .map(|alpha| {
                    let p = basis.element(alpha).expect("alpha < q");
                    match channels {
                        None => p.clone(),
                        Some(ch) => ch[i].iter().map(|k| k.adjoint() * p * k).sum(),
                    }
                })
                .collect();
            let mut site = SiteTensor::zeros(q, hl.len(), hr.len());
            for (mu, h) in hl.iter().enumerate() {
                // G[s][s'] = A[s]^dag H_mu A[s']
                let g: Vec<Vec<DMatrix<Complex64>>> = (0..self.d)
                    .map(|s| (0..self.d).map(|t| a[s].adjoint() * h * &a[t]).collect())
                    .collect();
                for (alpha, obs) in observables.iter().enumerate() {
                    let mut x = DMatrix::<Complex64>::zeros(dr, dr);
                    for s in 0..self.d {
                        for t in 0..self.d {
                            x += &g[s][t] * obs[(s, t)];
                        }
                    }
                    for (nu, hn) in hr.iter().enumerate() {
                        site.matrix_mut(alpha)[(mu, nu)] = (hn * &x).trace().re;
                    }
                }
            }
            sites.push(site);
        }
        MatrixProductOperator::new(self.d, sites)
    }
}

/// Orthonormal Hermitian basis of `D x D` matrices under `tr[A B]`.
pub fn hermitian_basis(dim: usize) -> Vec<DMatrix<Complex64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(dim * dim);
    for j in 0..dim {
        let mut m = DMatrix::zeros(dim, dim);
        m[(j, j)] = Complex64::new(1.0, 0.0);
        out.push(m);
    }
    for j in 0..dim {
        for k in j + 1..dim {
            let mut re = DMatrix::zeros(dim, dim);
            re[(j, k)] = Complex64::new(s, 0.0);
            re[(k, j)] = Complex64::new(s, 0.0);
            out.push(re);
            let mut im = DMatrix::zeros(dim, dim);
            im[(j, k)] = Complex64::new(0.0, s);
            im[(k, j)] = Complex64::new(0.0, -s);
            out.push(im);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff_c;
    use crate::states::DenseOperator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hermitian_basis_is_orthonormal() {
        let b = hermitian_basis(3);
        assert_eq!(b.len(), 9);
        for (i, x) in b.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                let t = (x * y).trace();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((t.re - e).abs() < 1e-15 && t.im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pure_mpo_matches_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mps = MatrixProductState::random_gaussian(4, 2, 2, &mut rng).unwrap();
        assert!((mps.norm_sqr() - 1.0).abs() < 1e-12);
        let psi = mps.to_vector().unwrap();
        let dense = DenseOperator::from_pure(&psi, 2).unwrap();
        let via_mpo = mps.to_mpo(None).unwrap().to_dense().unwrap();
        assert!(max_abs_diff_c(dense.matrix(), via_mpo.matrix()) < 1e-12);
        assert_eq!(mps.to_mpo(None).unwrap().max_bond(), 4);
    }
}
