use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::counts::{setting_probabilities, subset_string, CountsBlock};

/// Probabilities below this are clipped before dividing.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Relative eigenvalue cutoff below which the information is declared singular.
pub const FISHER_SINGULAR_TOL: f64 = 1e-12;

/// Multinomial Fisher information over the non-identity normalized Pauli
/// coefficients of a block (packed indices `1..4^R`, shifted down by one),
/// evaluated at `coeffs`.
pub fn fisher_information(block: &CountsBlock, coeffs: &[f64]) -> Result<DMatrix<f64>> {
    block.validate()?;
    let r = block.window;
    let len = 1usize << (2 * r);
    if coeffs.len() != len {
        return Err(Error::ShapeMismatch(format!("{} coefficients for a {r}-site block", coeffs.len())));
    }
    let dim = len - 1;
    let scale = 2f64.powf(-(r as f64) / 2.0);
    let n_out = 1usize << r;
    let mut f = DMatrix::<f64>::zeros(dim, dim);
    for s in block.settings.iter().filter(|s| s.shots > 0) {
        let probs = setting_probabilities(coeffs, &s.axes);
        // parameter index of every non-empty subset for this setting
        let params: Vec<usize> = (1..n_out).map(|t| subset_string(&s.axes, t) - 1).collect();
        for (o, &p) in probs.iter().enumerate() {
            let w = s.shots as f64 / p.max(PROBABILITY_FLOOR);
            let g: Vec<f64> = (1..n_out)
                .map(|t| if (t & o).count_ones() % 2 == 0 { scale } else { -scale })
                .collect();
            for (a, &ia) in params.iter().enumerate() {
                let ga = w * g[a];
                for (b, &ib) in params.iter().enumerate() {
                    f[(ia, ib)] += ga * g[b];
                }
            }
        }
    }
    Ok(f)
}

/// Inverse of the Fisher information, the Cramer-Rao covariance proxy.
pub fn fisher_covariance(fisher: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = fisher.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= FISHER_SINGULAR_TOL * max {
        return Err(Error::Singular(format!(
            "Fisher information has eigenvalue range [{min:e}, {max:e}]"
        )));
    }
    let q = &eig.eigenvectors;
    let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x));
    let c = q * inv * q.transpose();
    Ok((&c + c.transpose()).scale(0.5))
}
