//! Target states: dense oracles at small N and Pauli-coefficient MPOs at any N.

mod ancilla;
mod dense;
mod mpo;
mod mps;
mod named;
mod thermal;

pub use ancilla::{random_mpo_via_ancilla, AncillaModel, DEFAULT_COUPLING};
pub use dense::DenseOperator;
pub use mpo::{MatrixProductOperator, SiteTensor};
pub use mps::{hermitian_basis, Kraus, MatrixProductState};
pub use named::NamedState;
pub use thermal::{hamiltonian_dense, thermal_dense, HamiltonianFamily, HamiltonianSpec};

use crate::error::Result;

/// `dense_from_mpo`: explicit matrix of an MPO.
pub fn dense_from_mpo(mpo: &MatrixProductOperator) -> Result<DenseOperator> {
    mpo.to_dense()
}

/// `mpo_expectation`: coefficient `c(a)` of the string `a`.
pub fn mpo_expectation(mpo: &MatrixProductOperator, alphas: &[usize]) -> Result<f64> {
    mpo.expectation(alphas)
}

/// Either representation of a state, as loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyState {
    Dense(DenseOperator),
    Mpo(MatrixProductOperator),
}

impl AnyState {
    pub fn n_sites(&self) -> usize {
        match self {
            Self::Dense(s) => s.n_sites(),
            Self::Mpo(m) => m.n_sites(),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Self::Dense(s) => s.d(),
            Self::Mpo(m) => m.d(),
        }
    }

    /// Dense form, converting an MPO if it fits under the dense cap.
    pub fn to_dense(&self) -> Result<DenseOperator> {
        match self {
            Self::Dense(s) => Ok(s.clone()),
            Self::Mpo(m) => m.to_dense(),
        }
    }

    /// MPO form, factorizing a dense operator exactly.
    pub fn to_mpo(&self) -> Result<MatrixProductOperator> {
        match self {
            Self::Dense(s) => s.to_mpo(),
            Self::Mpo(m) => Ok(m.clone()),
        }
    }
}

impl From<DenseOperator> for AnyState {
    fn from(s: DenseOperator) -> Self {
        Self::Dense(s)
    }
}

impl From<MatrixProductOperator> for AnyState {
    fn from(m: MatrixProductOperator) -> Self {
        Self::Mpo(m)
    }
}
