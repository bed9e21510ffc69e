use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::states::{DenseOperator, MatrixProductOperator};

/// Per-block noise descriptor, in normalized-basis units.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// Exact data.
    None,
    /// I.i.d. noise of the given variance on every entry.
    Scalar { variance: f64 },
    /// Covariance proxy from the inverse Fisher information over the
    /// non-identity coefficients (packed indices `1..d^(2R)`). `covariance`
    /// is `None` when the information matrix was singular, in which case
    /// consumers fall back to `fallback_variance`.
    Fisher {
        covariance: Option<DMatrix<f64>>,
        fallback_variance: f64,
    },
}

/// Estimates of `tr[rho P(a_1)..P(a_R)]` for every block of `R` contiguous
/// sites. Block `i` (0-based) covers sites `i..i+R`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliBlockData {
    n_sites: usize,
    window: usize,
    d: usize,
    blocks: Vec<Vec<f64>>,
    noise: Vec<NoiseModel>,
}

impl PauliBlockData {
    pub fn new(n_sites: usize, window: usize, d: usize, blocks: Vec<Vec<f64>>, noise: Vec<NoiseModel>) -> Result<Self> {
        if window == 0 || window > n_sites {
            return Err(Error::InvalidArgument(format!("window {window} invalid for {n_sites} sites")));
        }
        let expected_blocks = n_sites - window + 1;
        if blocks.len() != expected_blocks {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected_blocks} blocks, got {}",
                blocks.len()
            )));
        }
        if noise.len() != blocks.len() {
            return Err(Error::ShapeMismatch("one noise descriptor per block".into()));
        }
        let len = (d * d).pow(window as u32);
        if let Some((i, _)) = blocks.iter().enumerate().find(|(_, b)| b.len() != len) {
            return Err(Error::ShapeMismatch(format!("block {i} must have {len} entries")));
        }
        if blocks.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("block data".into()));
        }
        Ok(Self {
            n_sites,
            window,
            d,
            blocks,
            noise,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Block size `R`.
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn noise(&self, i: usize) -> &NoiseModel {
        &self.noise[i]
    }

    pub fn noise_models(&self) -> &[NoiseModel] {
        &self.noise
    }

    /// Block `i` traced over its first site: coefficients on sites `i+1..i+R`.
    pub fn drop_first_site(&self, i: usize) -> Vec<f64> {
        let rest = (self.d * self.d).pow(self.window as u32 - 1);
        let sqrt_d = (self.d as f64).sqrt();
        self.blocks[i][..rest].iter().map(|x| x * sqrt_d).collect()
    }

    /// Block `i` traced over its last site: coefficients on sites `i..i+R-1`.
    pub fn drop_last_site(&self, i: usize) -> Vec<f64> {
        let q = self.d * self.d;
        let sqrt_d = (self.d as f64).sqrt();
        self.blocks[i].iter().step_by(q).map(|x| x * sqrt_d).collect()
    }
}

/// Anything whose reductions to contiguous windows can be evaluated exactly.
pub trait BlockSource {
    fn n_sites(&self) -> usize;
    fn local_dim(&self) -> usize;
    /// Coefficients of the reduction to sites `start..start+len` (0-based).
    fn window_coefficients(&self, start: usize, len: usize) -> Result<Vec<f64>>;

    /// Coefficients of every window of `len` sites, in order.
    fn all_windows(&self, len: usize) -> Result<Vec<Vec<f64>>> {
        (0..=self.n_sites() - len)
            .map(|start| self.window_coefficients(start, len))
            .collect()
    }
}

impl BlockSource for DenseOperator {
    fn n_sites(&self) -> usize {
        DenseOperator::n_sites(self)
    }

    fn local_dim(&self) -> usize {
        self.d()
    }

    fn window_coefficients(&self, start: usize, len: usize) -> Result<Vec<f64>> {
        self.reduce(start, len)?.coefficients()
    }
}

impl BlockSource for MatrixProductOperator {
    fn n_sites(&self) -> usize {
        MatrixProductOperator::n_sites(self)
    }

    fn local_dim(&self) -> usize {
        self.d()
    }

    fn window_coefficients(&self, start: usize, len: usize) -> Result<Vec<f64>> {
        MatrixProductOperator::window_coefficients(self, start, len)
    }

    fn all_windows(&self, len: usize) -> Result<Vec<Vec<f64>>> {
        self.all_window_coefficients(len)
    }
}

/// Exact expectation values on every window of `window` sites.
pub fn exact_block_data<S: BlockSource + ?Sized>(state: &S, window: usize) -> Result<PauliBlockData> {
    let n = state.n_sites();
    if window == 0 || window > n {
        return Err(Error::InvalidArgument(format!("window {window} invalid for {n} sites")));
    }
    let blocks = state.all_windows(window)?;
    let noise = vec![NoiseModel::None; blocks.len()];
    PauliBlockData::new(n, window, state.local_dim(), blocks, noise)
}

/// Gaussian noise injection. `sigma` is the standard deviation on the
/// unnormalized Pauli-string expectations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianNoise {
    pub sigma: f64,
    pub seed: u64,
    /// Also perturb the identity-string entry of every block.
    pub perturb_identity: bool,
}

impl GaussianNoise {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            seed,
            perturb_identity: true,
        }
    }

    /// Standard deviation on normalized-basis entries of an `R`-site block.
    pub fn normalized_std(&self, d: usize, window: usize) -> f64 {
        self.sigma / (d as f64).powf(window as f64 / 2.0)
    }

    pub fn apply(&self, data: &PauliBlockData) -> Result<PauliBlockData> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.sigma == 0.0 {
            return Ok(data.clone());
        }
        let std = self.normalized_std(data.d, data.window);
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = data.clone();
        for block in out.blocks.iter_mut() {
            for (idx, x) in block.iter_mut().enumerate() {
                let z = normal.sample(&mut rng);
                if idx != 0 || self.perturb_identity {
                    *x += z;
                }
            }
        }
        out.noise = vec![NoiseModel::Scalar { variance: std * std }; out.blocks.len()];
        Ok(out)
    }
}

pub fn add_gaussian_noise(data: &PauliBlockData, sigma: f64, seed: u64) -> Result<PauliBlockData> {
    GaussianNoise::new(sigma, seed).apply(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{random_mpo_via_ancilla, NamedState, DEFAULT_COUPLING};

    #[test]
    fn maximally_mixed_blocks() {
        let rho = DenseOperator::maximally_mixed(4, 2).unwrap();
        for r in 1..=4 {
            let data = exact_block_data(&rho, r).unwrap();
            let expected = 2f64.powf(-(r as f64) / 2.0);
            for b in data.blocks() {
                assert!((b[0] - expected).abs() < 1e-14);
                assert!(b[1..].iter().all(|x| x.abs() < 1e-14));
            }
        }
    }

    #[test]
    fn w_state_single_site_z() {
        let rho = NamedState::w(4, vec![0.4, 1.0, -0.3]).unwrap().dense().unwrap();
        let data = exact_block_data(&rho, 1).unwrap();
        // tr[rho_k Z / sqrt 2] = (1 - 2/4) / sqrt 2
        let expected = 0.5 / 2f64.sqrt();
        for b in data.blocks() {
            assert!((b[3] - expected).abs() < 1e-14);
            assert!((b[3] - 0.3536).abs() < 1e-4);
        }
    }

    #[test]
    fn dense_and_mpo_paths_agree() {
        let mpo = random_mpo_via_ancilla(6, DEFAULT_COUPLING, 21).unwrap();
        let dense = mpo.to_dense().unwrap();
        let a = exact_block_data(&mpo, 3).unwrap();
        let b = exact_block_data(&dense, 3).unwrap();
        for (x, y) in a.blocks().iter().flatten().zip(b.blocks().iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_consistency_and_range() {
        let mpo = random_mpo_via_ancilla(6, 0.3, 2).unwrap();
        let data = exact_block_data(&mpo, 3).unwrap();
        for i in 0..data.n_blocks() - 1 {
            let a = data.drop_first_site(i);
            let b = data.drop_last_site(i + 1);
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        let scale = 2f64.powf(1.5);
        assert!(data.blocks().iter().flatten().all(|x| (x * scale).abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn zero_sigma_is_identity() {
        let rho = DenseOperator::maximally_mixed(3, 2).unwrap();
        let data = exact_block_data(&rho, 2).unwrap();
        assert_eq!(add_gaussian_noise(&data, 0.0, 1).unwrap(), data);
        assert!(add_gaussian_noise(&data, -1.0, 1).is_err());
    }

    #[test]
    fn noise_is_deterministic() {
        let rho = DenseOperator::maximally_mixed(4, 2).unwrap();
        let data = exact_block_data(&rho, 2).unwrap();
        let a = add_gaussian_noise(&data, 0.1, 7).unwrap();
        let b = add_gaussian_noise(&data, 0.1, 7).unwrap();
        let c = add_gaussian_noise(&data, 0.1, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        match a.noise(0) {
            NoiseModel::Scalar { variance } => assert!((variance - 0.01 / 4.0).abs() < 1e-16),
            other => panic!("unexpected noise model {other:?}"),
        }
    }

    #[test]
    fn identity_entry_can_be_held_fixed() {
        let rho = DenseOperator::maximally_mixed(3, 2).unwrap();
        let data = exact_block_data(&rho, 2).unwrap();
        let noisy = GaussianNoise {
            sigma: 0.1,
            seed: 3,
            perturb_identity: false,
        }
        .apply(&data)
        .unwrap();
        assert!(noisy.blocks().iter().all(|b| (b[0] - 0.5).abs() < 1e-15));
        let perturbed = add_gaussian_noise(&data, 0.1, 3).unwrap();
        assert!(perturbed.blocks().iter().any(|b| (b[0] - 0.5).abs() > 1e-6));
    }

    #[test]
    fn injected_noise_has_requested_std() {
        // 10^4 samples of one entry
        let rho = DenseOperator::maximally_mixed(2, 2).unwrap();
        let data = exact_block_data(&rho, 2).unwrap();
        let target = 1e-2 / 2.0;
        let samples: Vec<f64> = (0..10_000)
            .map(|seed| add_gaussian_noise(&data, 1e-2, seed).unwrap().block(0)[5])
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        assert!((var.sqrt() / target - 1.0).abs() < 0.05);
    }
}
