use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SortedSvd;

/// How one local least-squares problem `B x = e` is inverted.
#[derive(Debug, Clone, PartialEq)]
pub enum RegularizerSpec {
    /// Moore-Penrose inverse discarding singular values below `tau * s_1`.
    TruncatedPinv { tau: f64 },
    /// `(B^T B + sigma2 I)^-1 B^T`.
    Tikhonov { sigma2: f64 },
    /// `(B^T B + P)^-1 B^T` for a symmetric PSD `P` over the columns of `B`.
    Fisher { p: DMatrix<f64> },
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::TruncatedPinv { tau } if !(0.0..1.0).contains(tau) => {
                Err(Error::InvalidArgument(format!("tau must lie in [0, 1), got {tau}")))
            }
            Self::Tikhonov { sigma2 } if !(*sigma2 >= 0.0) || !sigma2.is_finite() => {
                Err(Error::InvalidArgument(format!("sigma^2 must be >= 0, got {sigma2}")))
            }
            Self::Fisher { p } => {
                if !p.is_square() {
                    return Err(Error::ShapeMismatch("P must be square".into()));
                }
                if p.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("regularization matrix".into()));
                }
                let asym = (p - p.transpose()).amax();
                if asym > 1e-10 * p.amax().max(1.0) {
                    return Err(Error::InvalidArgument(format!("P is not symmetric ({asym:e})")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            Self::TruncatedPinv { .. } => "truncated_pinv",
            Self::Tikhonov { .. } => "tikhonov",
            Self::Fisher { .. } => "fisher",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverFlag {
    /// `B` vanished; the solution was set to zero.
    ZeroMatrix,
    /// Singular values were discarded by the truncation threshold.
    Truncated,
    /// `B^T B + P` was not positive definite; a pseudoinverse was used instead.
    FactorizationFallback,
}

/// Filter factors applied to the singular values of `B`, i.e. the `f_i` in
/// `x = V diag(f_i / s_i) U^T e`. Not defined for the Fisher mode.
pub fn filter_factors(singular_values: &[f64], reg: &RegularizerSpec) -> Option<Vec<f64>> {
    let top = singular_values.iter().cloned().fold(0.0, f64::max);
    match reg {
        RegularizerSpec::TruncatedPinv { tau } => Some(
            singular_values
                .iter()
                .map(|&s| if s > 0.0 && s >= tau * top { 1.0 } else { 0.0 })
                .collect(),
        ),
        RegularizerSpec::Tikhonov { sigma2 } => Some(
            singular_values
                .iter()
                .map(|&s| {
                    let s2 = s * s;
                    if s2 + sigma2 > 0.0 {
                        s2 / (s2 + sigma2)
                    } else {
                        0.0
                    }
                })
                .collect(),
        ),
        RegularizerSpec::Fisher { .. } => None,
    }
}

/// The regularized inverse of one `B_k`, computed once and applied to every
/// right-hand side.
#[derive(Debug, Clone)]
pub struct SiteInverse {
    /// `d^{2r} x d^{2l}` matrix replacing the pseudoinverse of `B`.
    pub matrix: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub filter_factors: Option<Vec<f64>>,
    pub flags: Vec<SolverFlag>,
}

impl SiteInverse {
    pub fn new(b: &DMatrix<f64>, reg: &RegularizerSpec) -> Result<Self> {
        reg.validate()?;
        let svd = SortedSvd::new(b)?;
        let s = &svd.singular_values;
        let mut flags = Vec::new();
        let top = s.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            flags.push(SolverFlag::ZeroMatrix);
            return Ok(Self {
                matrix: DMatrix::zeros(b.ncols(), b.nrows()),
                singular_values: s.clone(),
                filter_factors: filter_factors(s, reg),
                flags,
            });
        }
        let factors = filter_factors(s, reg);
        let matrix = match (&factors, reg) {
            (Some(f), _) => {
                if matches!(reg, RegularizerSpec::TruncatedPinv { .. }) && f.iter().any(|&x| x == 0.0) {
                    flags.push(SolverFlag::Truncated);
                }
                let scaled: Vec<f64> = s
                    .iter()
                    .zip(f)
                    .map(|(&si, &fi)| if fi == 0.0 { 0.0 } else { fi / si })
                    .collect();
                let mut vt = svd.v_t.clone();
                for (i, w) in scaled.iter().enumerate() {
                    vt.row_mut(i).scale_mut(*w);
                }
                vt.transpose() * svd.u.transpose()
            }
            (None, RegularizerSpec::Fisher { p }) => {
                check_p_shape(b, p)?;
                let bt = b.transpose();
                fisher_solve(b, p, &bt, &mut flags)?
            }
            (None, _) => unreachable!("filter factors exist for SVD modes"),
        };
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("regularized inverse".into()));
        }
        Ok(Self {
            matrix,
            singular_values: s.clone(),
            filter_factors: factors,
            flags,
        })
    }
}

fn check_p_shape(b: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<()> {
    if p.nrows() != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "P is {}x{} but B has {} columns",
            p.nrows(),
            p.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Solves `(B^T B + P) x = rhs` by Cholesky, falling back to a truncated
/// pseudoinverse of the normal matrix when it is not positive definite.
fn fisher_solve(
    b: &DMatrix<f64>,
    p: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    flags: &mut Vec<SolverFlag>,
) -> Result<DMatrix<f64>> {
    let mut normal = b.transpose() * b + p;
    normal = (&normal + normal.transpose()).scale(0.5);
    if let Some(chol) = normal.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    flags.push(SolverFlag::FactorizationFallback);
    let svd = SortedSvd::new(&normal)?;
    let top = svd.singular_values.first().copied().unwrap_or(0.0);
    let mut ut = svd.u.transpose();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let w = if s > crate::linalg::RANK_TOL * top { 1.0 / s } else { 0.0 };
        ut.row_mut(i).scale_mut(w);
    }
    Ok(svd.v_t.transpose() * ut * rhs)
}

/// Solution of the regularized least-squares problem, and the flags raised.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: DMatrix<f64>,
    pub flags: Vec<SolverFlag>,
}

/// `x = B^+ e` with `B^+` chosen by `reg`. `e` may hold several columns.
pub fn robust_solve(b: &DMatrix<f64>, e: &DMatrix<f64>, reg: &RegularizerSpec) -> Result<SolveOutcome> {
    if e.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "B has {} rows, right-hand side has {}",
            b.nrows(),
            e.nrows()
        )));
    }
    if let RegularizerSpec::Fisher { p } = reg {
        reg.validate()?;
        check_p_shape(b, p)?;
        if b.iter().all(|&x| x == 0.0) {
            return Ok(SolveOutcome {
                x: DMatrix::zeros(b.ncols(), e.ncols()),
                flags: vec![SolverFlag::ZeroMatrix],
            });
        }
        let mut flags = Vec::new();
        let x = fisher_solve(b, p, &(b.transpose() * e), &mut flags)?;
        return Ok(SolveOutcome { x, flags });
    }
    let inv = SiteInverse::new(b, reg)?;
    Ok(SolveOutcome {
        x: &inv.matrix * e,
        flags: inv.flags,
    })
}
