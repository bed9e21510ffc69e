use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_function, hermitian_op_norm, random_hermitian};

use super::mps::Kraus;
use super::{DenseOperator, MatrixProductOperator, MatrixProductState};

/// Coupling strength `t * ||H_k||_op` used for the weak-interaction family.
pub const DEFAULT_COUPLING: f64 = 0.01;

/// A random MPS whose sites each interact with a private ancilla, which is
/// then traced out. The result is an MPO of bond dimension `d^2`.
#[derive(Debug, Clone)]
pub struct AncillaModel {
    pub mps: MatrixProductState,
    /// Per-site Kraus operators `K_a = <a| U_k |0>` on the system qudit.
    pub channels: Vec<Kraus>,
}

impl AncillaModel {
    /// Draws the model for `n_sites` qubits. `coupling = t * ||H_k||_op`.
    pub fn sample(n_sites: usize, coupling: f64, seed: u64) -> Result<Self> {
        if !(coupling >= 0.0) || !coupling.is_finite() {
            return Err(Error::InvalidArgument(format!("coupling must be >= 0, got {coupling}")));
        }
        if n_sites < 1 {
            return Err(Error::InvalidArgument("need at least one site".into()));
        }
        let d = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mps = MatrixProductState::random_gaussian(n_sites, d, d, &mut rng)?;
        let channels = (0..n_sites)
            .map(|_| {
                let h = random_hermitian(d * d, &mut rng);
                let norm = hermitian_op_norm(&h);
                let t = if norm > 0.0 { coupling / norm } else { 0.0 };
                let u = hermitian_function(&h, |x| Complex64::new(0.0, -x * t).exp());
                // system x ancilla ordering, ancilla starts in |0>
                (0..d)
                    .map(|a| DMatrix::from_fn(d, d, |s, sp| u[(s * d + a, sp * d)]))
                    .collect()
            })
            .collect();
        Ok(Self { mps, channels })
    }

    pub fn to_mpo(&self) -> Result<MatrixProductOperator> {
        self.mps.to_mpo(Some(&self.channels))
    }

    /// Dense oracle: project onto the MPS vector, then apply each site
    /// channel to the full matrix.
    pub fn to_dense(&self) -> Result<DenseOperator> {
        let psi = self.mps.to_vector()?;
        let d = self.mps.d();
        let n = self.mps.n_sites();
        let mut rho = &psi * psi.adjoint();
        for (i, kraus) in self.channels.iter().enumerate() {
            let left = DMatrix::<Complex64>::identity(d.pow(i as u32), d.pow(i as u32));
            let rn = d.pow((n - i - 1) as u32);
            let right = DMatrix::<Complex64>::identity(rn, rn);
            let mut next = DMatrix::zeros(rho.nrows(), rho.ncols());
            for k in kraus {
                let full = left.kronecker(k).kronecker(&right);
                next += &full * &rho * full.adjoint();
            }
            rho = next;
        }
        rho = (&rho + rho.adjoint()).scale(0.5);
        DenseOperator::new(rho, d)
    }
}

/// Random mixed state with an exact MPO of bond dimension `d^2`.
pub fn random_mpo_via_ancilla(n_sites: usize, coupling: f64, seed: u64) -> Result<MatrixProductOperator> {
    AncillaModel::sample(n_sites, coupling, seed)?.to_mpo()
}
