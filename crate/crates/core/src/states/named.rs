use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

use super::dense::check_cap;
use super::{DenseOperator, MatrixProductOperator, MatrixProductState};

const D: usize = 2;

/// Pure qubit states with closed-form constructions.
#[derive(Debug, Clone, PartialEq)]
pub enum NamedState {
    /// `[|0..01> + e^{i phi_1}|0..10> + .. + e^{i phi_{N-1}}|10..0>] / sqrt(N)`
    W { n_sites: usize, phases: Vec<f64> },
    /// `(|0..0> + |1..1>) / sqrt(2)`
    Ghz { n_sites: usize },
    /// Tensor product of single-qubit state vectors (normalized on use).
    Product { local: Vec<[Complex64; 2]> },
}

impl NamedState {
    pub fn w(n_sites: usize, phases: Vec<f64>) -> Result<Self> {
        if n_sites < 1 || phases.len() + 1 != n_sites {
            return Err(Error::InvalidArgument(format!(
                "W state on {n_sites} sites needs {} phases, got {}",
                n_sites.saturating_sub(1),
                phases.len()
            )));
        }
        Ok(Self::W { n_sites, phases })
    }

    pub fn ghz(n_sites: usize) -> Result<Self> {
        if n_sites < 1 {
            return Err(Error::InvalidArgument("GHZ needs at least one site".into()));
        }
        Ok(Self::Ghz { n_sites })
    }

    /// `|0..0>` on `n_sites` qubits.
    pub fn all_zero(n_sites: usize) -> Self {
        let zero = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        Self::Product {
            local: vec![zero; n_sites],
        }
    }

    pub fn n_sites(&self) -> usize {
        match self {
            Self::W { n_sites, .. } | Self::Ghz { n_sites } => *n_sites,
            Self::Product { local } => local.len(),
        }
    }

    /// Phase on the branch whose excitation sits at 0-based site `i`.
    fn w_branch_phase(phases: &[f64], n_sites: usize, i: usize) -> f64 {
        // the excitation on the last site carries no phase; site N-j carries phi_j
        if i + 1 == n_sites {
            0.0
        } else {
            phases[n_sites - 1 - i - 1]
        }
    }

    /// Direct construction of the state vector.
    pub fn state_vector(&self) -> Result<DVector<Complex64>> {
        let n = self.n_sites();
        check_cap(n)?;
        let dim = D.pow(n as u32);
        let mut psi = DVector::zeros(dim);
        match self {
            Self::W { phases, .. } => {
                let norm = 1.0 / (n as f64).sqrt();
                for i in 0..n {
                    let phase = Self::w_branch_phase(phases, n, i);
                    psi[1 << (n - 1 - i)] = Complex64::from_polar(norm, phase);
                }
            }
            Self::Ghz { .. } => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                psi[0] = Complex64::new(s, 0.0);
                psi[dim - 1] = Complex64::new(s, 0.0);
            }
            Self::Product { local } => {
                let mut v = DVector::from_element(1, Complex64::new(1.0, 0.0));
                for l in local {
                    let norm = (l[0].norm_sqr() + l[1].norm_sqr()).sqrt();
                    if norm == 0.0 {
                        return Err(Error::ZeroNorm);
                    }
                    let site = DVector::from_vec(vec![l[0] / norm, l[1] / norm]);
                    v = v.kronecker(&site);
                }
                psi = v;
            }
        }
        Ok(psi)
    }

    pub fn dense(&self) -> Result<DenseOperator> {
        DenseOperator::from_pure(&self.state_vector()?, D)
    }

    /// Bond dimension 2 (W, GHZ) or 1 (product).
    pub fn mps(&self) -> Result<MatrixProductState> {
        let n = self.n_sites();
        let c = |re: f64| Complex64::new(re, 0.0);
        let tensors = match self {
            Self::W { phases, .. } => {
                // bond state 0: no excitation yet, 1: excitation placed
                let norm = 1.0 / (n as f64).sqrt();
                (0..n)
                    .map(|i| {
                        let phase = Complex64::from_polar(1.0, Self::w_branch_phase(phases, n, i));
                        let full = |ab: [[Complex64; 2]; 2]| DMatrix::from_fn(2, 2, |r, s| ab[r][s]);
                        let (mut a0, mut a1) = (full([[c(1.0), c(0.0)], [c(0.0), c(1.0)]]), full([[c(0.0), phase], [c(0.0), c(0.0)]]));
                        if n == 1 {
                            a0 = DMatrix::from_element(1, 1, c(0.0));
                            a1 = DMatrix::from_element(1, 1, phase);
                        } else if i == 0 {
                            a0 = a0.rows(0, 1).into_owned() * c(norm);
                            a1 = a1.rows(0, 1).into_owned() * c(norm);
                        } else if i + 1 == n {
                            a0 = a0.columns(1, 1).into_owned();
                            a1 = a1.columns(1, 1).into_owned();
                        }
                        vec![a0, a1]
                    })
                    .collect()
            }
            Self::Ghz { .. } => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                (0..n)
                    .map(|i| {
                        let mut a0 = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
                        let mut a1 = DMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(1.0)]);
                        if n == 1 {
                            a0 = DMatrix::from_element(1, 1, c(s));
                            a1 = DMatrix::from_element(1, 1, c(s));
                        } else if i == 0 {
                            a0 = a0.rows(0, 1).into_owned() * c(s) + a0.rows(1, 1).into_owned() * c(s);
                            a1 = a1.rows(0, 1).into_owned() * c(s) + a1.rows(1, 1).into_owned() * c(s);
                        } else if i + 1 == n {
                            a0 = DMatrix::from_column_slice(2, 1, &[c(1.0), c(0.0)]);
                            a1 = DMatrix::from_column_slice(2, 1, &[c(0.0), c(1.0)]);
                        }
                        vec![a0, a1]
                    })
                    .collect()
            }
            Self::Product { local } => local
                .iter()
                .map(|l| {
                    let norm = (l[0].norm_sqr() + l[1].norm_sqr()).sqrt();
                    vec![
                        DMatrix::from_element(1, 1, l[0] / norm),
                        DMatrix::from_element(1, 1, l[1] / norm),
                    ]
                })
                .collect(),
        };
        MatrixProductState::new(D, tensors)
    }

    pub fn mpo(&self) -> Result<MatrixProductOperator> {
        self.mps()?.to_mpo(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff_c;

    #[test]
    fn ghz_projector() {
        let rho = NamedState::ghz(3).unwrap().dense().unwrap();
        let m = rho.matrix();
        for (i, j) in [(0, 0), (0, 7), (7, 0), (7, 7)] {
            assert!((m[(i, j)].re - 0.5).abs() < 1e-15);
        }
        assert!((rho.purity() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn w_state_normalized() {
        let psi = NamedState::w(8, vec![0.0; 7]).unwrap().state_vector().unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn w_reductions_independent_of_phase() {
        let phases = vec![0.3, -1.2, 2.5];
        let rho = NamedState::w(4, phases).unwrap().dense().unwrap();
        for k in 0..4 {
            let one = rho.reduce(k, 1).unwrap();
            let m = one.matrix();
            assert!((m[(0, 0)].re - 0.75).abs() < 1e-14);
            assert!((m[(1, 1)].re - 0.25).abs() < 1e-14);
            assert!(m[(0, 1)].norm() < 1e-14);
        }
    }

    #[test]
    fn mps_forms_match_direct_vectors() {
        let states = [
            NamedState::w(5, vec![0.1, 0.7, -2.0, 1.3]).unwrap(),
            NamedState::ghz(5).unwrap(),
            NamedState::Product {
                local: vec![
                    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)],
                    [Complex64::new(0.3, 0.0), Complex64::new(0.4, 0.0)],
                    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
                ],
            },
        ];
        for s in &states {
            let direct = s.dense().unwrap();
            let via_mpo = s.mpo().unwrap().to_dense().unwrap();
            assert!(max_abs_diff_c(direct.matrix(), via_mpo.matrix()) < 1e-12, "{s:?}");
            assert!(s.mpo().unwrap().max_bond() <= 4);
        }
    }

    #[test]
    fn w_phase_convention() {
        // phi_1 sits on |0..010>
        let psi = NamedState::w(3, vec![1.0, 2.0]).unwrap().state_vector().unwrap();
        assert!((psi[1].arg() - 0.0).abs() < 1e-15);
        assert!((psi[2].arg() - 1.0).abs() < 1e-15);
        assert!((psi[4].arg() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_wrong_phase_count() {
        assert!(NamedState::w(4, vec![0.0; 4]).is_err());
    }
}
