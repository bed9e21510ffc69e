use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::DENSE_CAP;
use crate::error::{Error, Result};
use crate::linalg::RANK_TOL;
use crate::measurement::{NoiseModel, PauliBlockData};

use super::solver::RegularizerSpec;

/// Inversion policy for the whole chain; the concrete per-site
/// [`RegularizerSpec`] is derived from it and the block noise descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SolverMode {
    TruncatedPinv {
        tau: f64,
    },
    /// `sigma2 = None` takes the variance from the data's noise descriptors.
    Tikhonov {
        #[serde(default)]
        sigma2: Option<f64>,
    },
    /// Regularization matrix from the per-block inverse Fisher information.
    Fisher,
}

impl SolverMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TruncatedPinv { .. } => "truncated_pinv",
            Self::Tikhonov { .. } => "tikhonov",
            Self::Fisher => "fisher",
        }
    }
}

impl Default for SolverMode {
    fn default() -> Self {
        Self::Tikhonov { sigma2: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub l: usize,
    pub r: usize,
    #[serde(default)]
    pub solver: SolverMode,
    /// Relative singular-value cutoff for ranks and for the unregularized inverse.
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    /// Largest N for which dense checks are attempted.
    #[serde(default = "default_cap")]
    pub dense_fallback_cap: usize,
    /// Rescale the estimate to unit trace.
    #[serde(default)]
    pub normalize_trace: bool,
}

fn default_rank_tol() -> f64 {
    RANK_TOL
}

fn default_cap() -> usize {
    DENSE_CAP
}

impl ReconstructionConfig {
    pub fn new(l: usize, r: usize, solver: SolverMode) -> Self {
        Self {
            l,
            r,
            solver,
            rank_tol: RANK_TOL,
            dense_fallback_cap: DENSE_CAP,
            normalize_trace: false,
        }
    }

    /// Default split of a block size: `l = ceil((R-1)/2)`, `r = floor((R-1)/2)`.
    pub fn for_window(window: usize) -> Result<Self> {
        if window < 3 {
            return Err(Error::InvalidArgument(format!("block size must be at least 3, got {window}")));
        }
        Ok(Self::new(window / 2, (window - 1) / 2, SolverMode::default()))
    }

    pub fn with_solver(mut self, solver: SolverMode) -> Self {
        self.solver = solver;
        self
    }

    pub fn window(&self) -> usize {
        self.l + self.r + 1
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if self.l < 1 || self.r < 1 {
            return Err(Error::InvalidArgument(format!(
                "l and r must both be at least 1, got l={}, r={}",
                self.l, self.r
            )));
        }
        if self.window() > n_sites {
            return Err(Error::InvalidArgument(format!(
                "block size {} exceeds the chain length {n_sites}",
                self.window()
            )));
        }
        if !(0.0..1.0).contains(&self.rank_tol) {
            return Err(Error::InvalidArgument(format!("rank_tol must lie in [0, 1), got {}", self.rank_tol)));
        }
        match self.solver {
            SolverMode::TruncatedPinv { tau } if !(0.0..1.0).contains(&tau) => {
                Err(Error::InvalidArgument(format!("tau must lie in [0, 1), got {tau}")))
            }
            SolverMode::Tikhonov { sigma2: Some(s) } if !(s >= 0.0) || !s.is_finite() => {
                Err(Error::InvalidArgument(format!("sigma^2 must be >= 0, got {s}")))
            }
            _ => Ok(()),
        }
    }

    /// Concrete inversion policy for the block with 0-based index `block`.
    pub fn regularizer_for(&self, data: &PauliBlockData, block: usize) -> RegularizerSpec {
        let unregularized = RegularizerSpec::TruncatedPinv { tau: self.rank_tol };
        let noise = data.noise(block);
        match self.solver {
            SolverMode::TruncatedPinv { tau } => RegularizerSpec::TruncatedPinv { tau },
            SolverMode::Tikhonov { sigma2 } => {
                let s2 = sigma2.unwrap_or_else(|| {
                    let p = column_covariance(noise, self.l, self.r, data.d());
                    p.map_or(0.0, |p| p.trace() / p.nrows() as f64)
                });
                if s2 > 0.0 {
                    RegularizerSpec::Tikhonov { sigma2: s2 }
                } else {
                    unregularized
                }
            }
            SolverMode::Fisher => match column_covariance(noise, self.l, self.r, data.d()) {
                Some(p) => RegularizerSpec::Fisher { p },
                None => unregularized,
            },
        }
    }
}

/// `P = E[G^T G]` for the noise `G` on `B`, summed over rows. `None` for exact data.
pub fn column_covariance(noise: &NoiseModel, l: usize, r: usize, d: usize) -> Option<DMatrix<f64>> {
    let q = d * d;
    let rows = q.pow(l as u32);
    let cols = q.pow(r as u32);
    let df = d as f64;
    match noise {
        NoiseModel::None => None,
        NoiseModel::Scalar { variance } => {
            (*variance > 0.0).then(|| DMatrix::identity(cols, cols).scale(rows as f64 * df * variance))
        }
        NoiseModel::Fisher {
            covariance: None,
            fallback_variance,
        } => (*fallback_variance > 0.0)
            .then(|| DMatrix::identity(cols, cols).scale(rows as f64 * df * fallback_variance)),
        NoiseModel::Fisher {
            covariance: Some(cov),
            ..
        } => {
            // B[i, j] = sqrt(d) * theta at packed index (i, j, 0); the identity
            // string is fixed by the trace and carries no noise
            let param = |i: usize, j: usize| (i * cols + j) * q;
            let mut p = DMatrix::zeros(cols, cols);
            for i in 0..rows {
                for j in 0..cols {
                    let a = param(i, j);
                    if a == 0 {
                        continue;
                    }
                    for jp in 0..cols {
                        let b = param(i, jp);
                        if b == 0 {
                            continue;
                        }
                        p[(j, jp)] += df * cov[(a - 1, b - 1)];
                    }
                }
            }
            Some(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{add_gaussian_noise, exact_block_data};
    use crate::states::DenseOperator;

    #[test]
    fn default_split() {
        let c = ReconstructionConfig::for_window(5).unwrap();
        assert_eq!((c.l, c.r), (2, 2));
        let c = ReconstructionConfig::for_window(4).unwrap();
        assert_eq!((c.l, c.r), (2, 1));
        assert!(ReconstructionConfig::for_window(2).is_err());
    }

    #[test]
    fn validation() {
        let c = ReconstructionConfig::for_window(5).unwrap();
        assert!(c.validate(5).is_ok());
        assert!(c.validate(4).is_err());
        assert!(ReconstructionConfig::new(0, 2, SolverMode::Fisher).validate(8).is_err());
    }

    #[test]
    fn tikhonov_variance_from_noise() {
        let rho = DenseOperator::maximally_mixed(6, 2).unwrap();
        let data = exact_block_data(&rho, 5).unwrap();
        let cfg = ReconstructionConfig::for_window(5).unwrap();
        assert_eq!(cfg.regularizer_for(&data, 0), RegularizerSpec::TruncatedPinv { tau: 1e-9 });
        let noisy = add_gaussian_noise(&data, 1e-2, 1).unwrap();
        match cfg.regularizer_for(&noisy, 0) {
            // balanced split: the effective variance equals sigma^2
            RegularizerSpec::Tikhonov { sigma2 } => assert!((sigma2 - 1e-4).abs() < 1e-18),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fisher_row_sum_rule() {
        let (l, r, d) = (1, 1, 2);
        let n = 63;
        let cov = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + i as f64 } else { 0.0 });
        let p = column_covariance(
            &NoiseModel::Fisher {
                covariance: Some(cov),
                fallback_variance: 0.0,
            },
            l,
            r,
            d,
        )
        .unwrap();
        // column j collects rows i = 0..4 at packed (i*4 + j)*4, minus the identity
        for j in 0..4 {
            let expected: f64 = (0..4)
                .map(|i| (i * 4 + j) * 4)
                .filter(|&a| a != 0)
                .map(|a| 2.0 * a as f64)
                .sum();
            assert!((p[(j, j)] - expected).abs() < 1e-12);
        }
        assert_eq!(p[(0, 1)], 0.0);
    }
}
