use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, random_hermitian};

use super::dense::check_cap;
use super::DenseOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianFamily {
    /// `H = -sum X_i X_{i+1} - sum Z_i`
    CriticalIsing,
    /// `H = sum r_{i,i+1}` with random Hermitian two-site terms.
    RandomNextNeighbour,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub family: HamiltonianFamily,
    pub n_sites: usize,
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
}

impl HamiltonianSpec {
    pub fn critical_ising(n_sites: usize, beta: f64) -> Self {
        Self {
            family: HamiltonianFamily::CriticalIsing,
            n_sites,
            beta,
            seed: 0,
        }
    }

    pub fn random_next_neighbour(n_sites: usize, beta: f64, seed: u64) -> Self {
        Self {
            family: HamiltonianFamily::RandomNextNeighbour,
            n_sites,
            beta,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(Error::InvalidArgument("Hamiltonian needs N >= 2".into()));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be >= 0, got {}", self.beta)));
        }
        check_cap(self.n_sites)
    }
}

const D: usize = 2;

fn pauli_x() -> DMatrix<Complex64> {
    let o = Complex64::new(0.0, 0.0);
    let i = Complex64::new(1.0, 0.0);
    DMatrix::from_row_slice(2, 2, &[o, i, i, o])
}

fn pauli_z() -> DMatrix<Complex64> {
    let o = Complex64::new(0.0, 0.0);
    let i = Complex64::new(1.0, 0.0);
    DMatrix::from_row_slice(2, 2, &[i, o, o, -i])
}

/// `1 x op x 1` with `op` acting on sites `start..start+k` of `n`.
fn embed(op: &DMatrix<Complex64>, start: usize, n: usize) -> DMatrix<Complex64> {
    let mut k = 0;
    let mut dim = 1;
    while dim < op.nrows() {
        dim *= D;
        k += 1;
    }
    let left = DMatrix::<Complex64>::identity(D.pow(start as u32), D.pow(start as u32));
    let right_n = D.pow((n - start - k) as u32);
    let right = DMatrix::<Complex64>::identity(right_n, right_n);
    left.kronecker(op).kronecker(&right)
}

pub fn hamiltonian_dense(spec: &HamiltonianSpec) -> Result<DMatrix<Complex64>> {
    spec.validate()?;
    let n = spec.n_sites;
    let dim = D.pow(n as u32);
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    match spec.family {
        HamiltonianFamily::CriticalIsing => {
            let xx = pauli_x().kronecker(&pauli_x());
            for i in 0..n - 1 {
                h -= embed(&xx, i, n);
            }
            for i in 0..n {
                h -= embed(&pauli_z(), i, n);
            }
        }
        HamiltonianFamily::RandomNextNeighbour => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            for i in 0..n - 1 {
                let r = random_hermitian(D * D, &mut rng);
                h += embed(&r, i, n);
            }
        }
    }
    Ok(h)
}

/// `exp(-beta H) / tr[exp(-beta H)]` by full diagonalization.
pub fn thermal_dense(spec: &HamiltonianSpec) -> Result<DenseOperator> {
    let h = hamiltonian_dense(spec)?;
    let (vals, vecs) = eigh(&h);
    let e0 = vals[0];
    let weights: Vec<f64> = vals.iter().map(|&e| (-spec.beta * (e - e0)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut scaled = vecs.clone();
    for (j, w) in weights.iter().enumerate() {
        let f = Complex64::new(w / z, 0.0);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= f;
        }
    }
    let mut rho = scaled * vecs.adjoint();
    // symmetrize away rounding so the Hermiticity check is exact
    rho = (&rho + rho.adjoint()).scale(0.5);
    DenseOperator::new(rho, D)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigvalsh;

    #[test]
    fn infinite_temperature_is_maximally_mixed() {
        for spec in [
            HamiltonianSpec::critical_ising(3, 0.0),
            HamiltonianSpec::random_next_neighbour(3, 0.0, 4),
        ] {
            let rho = thermal_dense(&spec).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    let e = if i == j { 0.125 } else { 0.0 };
                    assert!((rho.matrix()[(i, j)] - Complex64::new(e, 0.0)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn two_site_ising_ground_energy() {
        let h = hamiltonian_dense(&HamiltonianSpec::critical_ising(2, 1.0)).unwrap();
        let e0 = eigvalsh(&h)[0];
        assert!((e0 + 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gibbs_state_is_a_state() {
        let rho = thermal_dense(&HamiltonianSpec::critical_ising(8, 5.0)).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        assert!(rho.eigenvalues().iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn random_family_is_seeded() {
        let a = hamiltonian_dense(&HamiltonianSpec::random_next_neighbour(3, 1.0, 9)).unwrap();
        let b = hamiltonian_dense(&HamiltonianSpec::random_next_neighbour(3, 1.0, 9)).unwrap();
        let c = hamiltonian_dense(&HamiltonianSpec::random_next_neighbour(3, 1.0, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_negative_beta() {
        assert!(thermal_dense(&HamiltonianSpec::critical_ising(3, -1.0)).is_err());
        assert!(thermal_dense(&HamiltonianSpec::critical_ising(1, 1.0)).is_err());
    }
}
