use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::basis::{coeffs_from_dense, dense_from_coeffs};
use crate::error::{Error, Result};

use super::counts::{probabilities_from_table, subset_table, walsh_hadamard, CountsBlock};

/// Result of a local maximum-likelihood fit on one block.
#[derive(Debug, Clone)]
pub struct MleEstimate {
    /// PSD, unit-trace `2^R x 2^R` matrix.
    pub density: DMatrix<Complex64>,
    /// Normalized Pauli coefficients of `density`.
    pub coeffs: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after every accepted step, starting from the initial point.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step gains less than this.
    pub tolerance: f64,
    /// Initial dilution strength; large values approach the plain R-rho-R map.
    pub initial_step: f64,
    pub max_step: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-10,
            initial_step: 10.0,
            max_step: 1e4,
        }
    }
}

const PROB_FLOOR: f64 = 1e-300;
const MIN_STEP: f64 = 1e-10;

pub fn local_mle(block: &CountsBlock) -> Result<MleEstimate> {
    local_mle_with(block, &MleOptions::default())
}

/// Diluted `R rho R` likelihood ascent starting from the maximally mixed state.
/// A step is accepted only if it does not lower the likelihood; otherwise the
/// dilution is halved and retried.
pub fn local_mle_with(block: &CountsBlock, opts: &MleOptions) -> Result<MleEstimate> {
    block.validate()?;
    let r = block.window;
    let dim = 1usize << r;
    let total = block.total_shots() as f64;
    let mut rho = DMatrix::<Complex64>::identity(dim, dim).scale(1.0 / dim as f64);
    let tables: Vec<Vec<usize>> = block.settings.iter().map(|s| subset_table(&s.axes)).collect();
    let mut coeffs = coeffs_from_dense(&rho)?;
    let (mut ll, mut probs) = tabled_log_likelihood(block, &tables, &coeffs);
    let mut trace = vec![ll];
    let mut step = opts.initial_step;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        iterations += 1;
        let r_op = dense_from_coeffs(&r_operator_coeffs(block, &tables, &probs, total))?;
        let mut accepted = false;
        while step >= MIN_STEP {
            let mut g = r_op.scale(step);
            for i in 0..dim {
                g[(i, i)] += Complex64::new(1.0, 0.0);
            }
            let next = diluted_step(&g, &rho);
            let next_coeffs = coeffs_from_dense(&next)?;
            let (next_ll, next_probs) = tabled_log_likelihood(block, &tables, &next_coeffs);
            if next_ll >= ll {
                let gain = next_ll - ll;
                rho = next;
                coeffs = next_coeffs;
                probs = next_probs;
                ll = next_ll;
                trace.push(ll);
                accepted = true;
                step = (step * 2.0).min(opts.max_step);
                if gain < opts.tolerance {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no ascent direction left at machine precision
            converged = true;
        }
        if converged {
            break;
        }
    }

    let d_scale = (dim as f64).sqrt().recip();
    coeffs[0] = d_scale;
    let estimate = MleEstimate {
        density: rho,
        coeffs,
        log_likelihood: ll,
        iterations,
        converged,
        trace,
    };
    if !converged {
        return Err(Error::MleNotConverged {
            iterations,
            best: Box::new(estimate),
        });
    }
    Ok(estimate)
}

fn diluted_step(g: &DMatrix<Complex64>, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut next = g * rho * g.adjoint();
    next = (&next + next.adjoint()).scale(0.5);
    let tr = next.trace().re;
    next.scale(1.0 / tr)
}

/// `sum_{s,o} n_{s,o} log p_{s,o}`.
pub fn log_likelihood(block: &CountsBlock, coeffs: &[f64]) -> f64 {
    let tables: Vec<Vec<usize>> = block.settings.iter().map(|s| subset_table(&s.axes)).collect();
    tabled_log_likelihood(block, &tables, coeffs).0
}

/// Log-likelihood together with the outcome probabilities of every setting.
fn tabled_log_likelihood(block: &CountsBlock, tables: &[Vec<usize>], coeffs: &[f64]) -> (f64, Vec<Vec<f64>>) {
    let mut ll = 0.0;
    let probs = block
        .settings
        .iter()
        .zip(tables)
        .map(|(s, table)| {
            let p = probabilities_from_table(coeffs, table, block.window);
            ll += s
                .counts
                .iter()
                .zip(&p)
                .filter(|(&n, _)| n > 0)
                .map(|(&n, &p)| n as f64 * p.max(PROB_FLOOR).ln())
                .sum::<f64>();
            p
        })
        .collect();
    (ll, probs)
}

/// Coefficients of `sum_{s,o} (n_{s,o}/n) / p_{s,o} Pi_{s,o}`.
fn r_operator_coeffs(block: &CountsBlock, tables: &[Vec<usize>], probs: &[Vec<f64>], total: f64) -> Vec<f64> {
    let r = block.window;
    let scale = 2f64.powf(-(r as f64) / 2.0);
    let mut out = vec![0.0; 1usize << (2 * r)];
    for ((s, table), p) in block.settings.iter().zip(tables).zip(probs) {
        if s.shots == 0 {
            continue;
        }
        let mut w: Vec<f64> = s
            .counts
            .iter()
            .zip(p)
            .map(|(&n, &p)| if n == 0 { 0.0 } else { n as f64 / total / p.max(PROB_FLOOR) })
            .collect();
        walsh_hadamard(&mut w);
        for (wt, &index) in w.iter().zip(table) {
            out[index] += scale * wt;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::counts::{simulate_counts, Axis, SettingCounts};
    use crate::states::DenseOperator;

    fn hs_norm_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        (a - b).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn maximally_mixed_at_large_shots() {
        let rho = DenseOperator::maximally_mixed(1, 2).unwrap();
        let blocks = simulate_counts(&rho, 1, 1_000_000, 5).unwrap();
        let est = local_mle(&blocks[0]).unwrap();
        assert!(hs_norm_diff(&est.density, rho.matrix()) < 2e-3);
        assert!((est.coeffs[0] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn boundary_estimate_is_pure() {
        let block = CountsBlock {
            k: 1,
            window: 1,
            settings: vec![SettingCounts::new(vec![Axis::Z], vec![50, 0]).unwrap()],
        };
        let est = local_mle(&block).unwrap();
        assert!((est.density[(0, 0)].re - 1.0).abs() < 1e-6);
        assert!(est.density[(1, 1)].re.abs() < 1e-6);
    }

    #[test]
    fn likelihood_never_decreases() {
        let rho = crate::states::NamedState::w(3, vec![0.4, -0.8]).unwrap().dense().unwrap();
        let blocks = simulate_counts(&rho, 2, 100, 9).unwrap();
        for b in &blocks {
            let est = local_mle(b).unwrap();
            assert!(est.trace.windows(2).all(|w| w[1] >= w[0]));
            let ev = crate::linalg::eigvalsh(&est.density);
            assert!(ev[0] > -1e-12);
            assert!((est.density.trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let rho = crate::states::NamedState::ghz(2).unwrap().dense().unwrap();
        let blocks = simulate_counts(&rho, 2, 100, 1).unwrap();
        let opts = MleOptions {
            max_iterations: 2,
            ..MleOptions::default()
        };
        match local_mle_with(&blocks[0], &opts) {
            Err(Error::MleNotConverged { iterations, best }) => {
                assert_eq!(iterations, 2);
                assert_eq!(best.trace.len(), 3);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
