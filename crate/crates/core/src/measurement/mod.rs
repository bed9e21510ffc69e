//! Producing block data: exact reductions, injected Gaussian noise, and
//! local maximum-likelihood estimates from measurement counts.

mod block_data;
mod counts;
mod fisher;
mod mle;

use rayon::prelude::*;
use serde::Serialize;

pub use block_data::{
    add_gaussian_noise, exact_block_data, BlockSource, GaussianNoise, NoiseModel, PauliBlockData,
};
pub use counts::{
    all_settings, expected_counts, marginalize_global_counts, setting_probabilities, simulate_counts, Axis,
    CountsBlock, SettingCounts,
};
pub use fisher::{fisher_covariance, fisher_information, FISHER_SINGULAR_TOL, PROBABILITY_FLOOR};
pub use mle::{local_mle, local_mle_with, log_likelihood, MleEstimate, MleOptions};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountsOptions {
    pub mle: MleOptions,
    /// Attach inverse Fisher information to each block. When off, a scalar
    /// shot-noise variance is attached instead.
    pub fisher: bool,
}

impl Default for CountsOptions {
    fn default() -> Self {
        Self {
            mle: MleOptions::default(),
            fisher: true,
        }
    }
}

/// Per-block record of how the estimate was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockDiagnostics {
    pub k: usize,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub fisher_singular: bool,
}

/// Runs the local MLE on every block and packs the coefficients. Blocks must
/// cover `k = 1..=N-R+1` exactly once; their order in `blocks` is irrelevant.
pub fn block_data_from_counts(
    blocks: &[CountsBlock],
    opts: &CountsOptions,
) -> Result<(PauliBlockData, Vec<BlockDiagnostics>)> {
    let first = blocks.first().ok_or(Error::MissingBlock(1))?;
    let window = first.window;
    if blocks.iter().any(|b| b.window != window) {
        return Err(Error::Format("all blocks must share one window size".into()));
    }
    let mut sorted: Vec<&CountsBlock> = blocks.iter().collect();
    sorted.sort_by_key(|b| b.k);
    for (i, b) in sorted.iter().enumerate() {
        if b.k != i + 1 {
            return Err(if b.k > i + 1 {
                Error::MissingBlock(i + 1)
            } else {
                Error::Format(format!("block {} appears twice", b.k))
            });
        }
    }
    let n_sites = sorted.len() + window - 1;
    let d = 2usize;
    let results = sorted
        .par_iter()
        .map(|b| fit_block(b, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut coeffs = Vec::with_capacity(results.len());
    let mut noise = Vec::with_capacity(results.len());
    let mut diags = Vec::with_capacity(results.len());
    for (c, n, diag) in results {
        coeffs.push(c);
        noise.push(n);
        diags.push(diag);
    }
    Ok((PauliBlockData::new(n_sites, window, d, coeffs, noise)?, diags))
}

fn fit_block(block: &CountsBlock, opts: &CountsOptions) -> Result<(Vec<f64>, NoiseModel, BlockDiagnostics)> {
    let est = match local_mle_with(block, &opts.mle) {
        Ok(e) => e,
        Err(Error::MleNotConverged { best, .. }) => *best,
        Err(e) => return Err(e),
    };
    let min_shots = block
        .settings
        .iter()
        .map(|s| s.shots)
        .filter(|&n| n > 0)
        .min()
        .unwrap_or(1);
    // shot-noise variance of a Pauli expectation, in normalized units
    let fallback_variance = 1.0 / min_shots as f64 / 2f64.powi(block.window as i32);
    let (noise, singular) = if opts.fisher {
        let f = fisher_information(block, &est.coeffs)?;
        match fisher_covariance(&f) {
            Ok(c) => (
                NoiseModel::Fisher {
                    covariance: Some(c),
                    fallback_variance,
                },
                false,
            ),
            Err(Error::Singular(_)) => (
                NoiseModel::Fisher {
                    covariance: None,
                    fallback_variance,
                },
                true,
            ),
            Err(e) => return Err(e),
        }
    } else {
        (
            NoiseModel::Scalar {
                variance: fallback_variance,
            },
            false,
        )
    };
    let diag = BlockDiagnostics {
        k: block.k,
        iterations: est.iterations,
        converged: est.converged,
        log_likelihood: est.log_likelihood,
        fisher_singular: singular,
    };
    Ok((est.coeffs, noise, diag))
}
