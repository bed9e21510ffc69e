use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::pack;
use crate::error::{Error, Result};
use crate::measurement::PauliBlockData;
use crate::states::{MatrixProductOperator, SiteTensor};

use super::config::ReconstructionConfig;
use super::solver::{robust_solve, RegularizerSpec, SiteInverse, SolverFlag};
use super::transfer::{build_transfer_pair, TransferPair};

/// Relative cutoff for the exact factorization used when `N = R`.
const PASSTHROUGH_TOL: f64 = 1e-14;

/// Per-site summary for the reconstruction report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteSummary {
    pub k: usize,
    pub regularizer: &'static str,
    /// Scalar variance for Tikhonov, cutoff for the truncated inverse.
    pub parameter: Option<f64>,
    pub singular_values: Vec<f64>,
    pub flags: Vec<SolverFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub config: ReconstructionConfig,
    pub n_sites: usize,
    pub window: usize,
    pub solver_mode: &'static str,
    pub passthrough: bool,
    pub sites: Vec<SiteSummary>,
    pub flags: Vec<SolverFlag>,
    pub bond_dims: Vec<usize>,
    /// Where the estimate was written, when it was.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Precomputed per-site maps `M_k[alpha] = B_k^+ C_k[alpha]` and the closing
/// matrix read from the first block.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    cfg: ReconstructionConfig,
    n_sites: usize,
    d: usize,
    /// `L[(alpha_1..alpha_l), j]`, `d^{2l} x d^{2r}`.
    closing: DMatrix<f64>,
    /// Indexed by `k - l - 1`, then by `alpha`.
    maps: Vec<Vec<DMatrix<f64>>>,
    sites: Vec<SiteSummary>,
    passthrough: Option<Vec<f64>>,
}

fn describe(reg: &RegularizerSpec) -> Option<f64> {
    match reg {
        RegularizerSpec::TruncatedPinv { tau } => Some(*tau),
        RegularizerSpec::Tikhonov { sigma2 } => Some(*sigma2),
        RegularizerSpec::Fisher { .. } => None,
    }
}

fn check_data(data: &PauliBlockData, cfg: &ReconstructionConfig) -> Result<()> {
    cfg.validate(data.n_sites())?;
    if cfg.window() != data.window() {
        return Err(Error::InvalidArgument(format!(
            "l + r + 1 = {} does not match the block size {}",
            cfg.window(),
            data.window()
        )));
    }
    Ok(())
}

/// `L[a, j] = sqrt(d) * block_1[(a, j, 0)]`: the first block with its last
/// site traced out, as a map from the right window to the left strings.
fn closing_matrix(data: &PauliBlockData, l: usize, r: usize) -> DMatrix<f64> {
    let d = data.d();
    let q = d * d;
    let rows = q.pow(l as u32);
    let cols = q.pow(r as u32);
    let sqrt_d = (d as f64).sqrt();
    let block = data.block(0);
    DMatrix::from_fn(rows, cols, |a, j| sqrt_d * block[(a * cols + j) * q])
}

impl Reconstruction {
    pub fn new(data: &PauliBlockData, cfg: &ReconstructionConfig) -> Result<Self> {
        check_data(data, cfg)?;
        let n = data.n_sites();
        let d = data.d();
        let q = d * d;
        let (l, r) = (cfg.l, cfg.r);
        if n == data.window() {
            return Ok(Self {
                cfg: *cfg,
                n_sites: n,
                d,
                closing: DMatrix::zeros(0, 0),
                maps: Vec::new(),
                sites: Vec::new(),
                passthrough: Some(data.block(0).to_vec()),
            });
        }
        let built = (l + 1..=n - r)
            .into_par_iter()
            .map(|k| {
                let pair = build_transfer_pair(data, k, l, r)?;
                let reg = cfg.regularizer_for(data, k - l - 1);
                let inv = SiteInverse::new(&pair.b, &reg)?;
                let maps: Vec<DMatrix<f64>> = (0..q).map(|a| &inv.matrix * pair.c_slice(a, q)).collect();
                if maps.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("site map {k}")));
                }
                let summary = SiteSummary {
                    k,
                    regularizer: reg.mode_name(),
                    parameter: describe(&reg),
                    singular_values: inv.singular_values,
                    flags: inv.flags,
                };
                Ok((maps, summary))
            })
            .collect::<Result<Vec<_>>>()?;
        let (maps, sites) = built.into_iter().unzip();
        Ok(Self {
            cfg: *cfg,
            n_sites: n,
            d,
            closing: closing_matrix(data, l, r),
            maps,
            sites,
            passthrough: None,
        })
    }

    pub fn config(&self) -> &ReconstructionConfig {
        &self.cfg
    }

    /// Map `M_k[alpha]` for the 1-based recursion site `k`.
    pub fn site_map(&self, k: usize, alpha: usize) -> &DMatrix<f64> {
        &self.maps[k - self.cfg.l - 1][alpha]
    }

    pub fn closing(&self) -> &DMatrix<f64> {
        &self.closing
    }

    /// Coefficient of the string `alphas` in the estimate, by the precomputed maps.
    pub fn coefficient(&self, alphas: &[usize]) -> Result<f64> {
        let n = self.n_sites;
        let q = self.d * self.d;
        if alphas.len() != n {
            return Err(Error::ShapeMismatch(format!("string of length {} on {n} sites", alphas.len())));
        }
        if let Some(&bad) = alphas.iter().find(|&&a| a >= q) {
            return Err(Error::IndexOutOfRange {
                what: "basis",
                index: bad,
                bound: q,
            });
        }
        if let Some(block) = &self.passthrough {
            return Ok(block[pack(alphas, self.d)]);
        }
        let (l, r) = (self.cfg.l, self.cfg.r);
        let mut y = DVector::zeros(q.pow(r as u32));
        y[pack(&alphas[n - r..], self.d)] = 1.0;
        for k in (l + 1..=n - r).rev() {
            y = self.site_map(k, alphas[k - 1]) * y;
        }
        Ok((self.closing.row(pack(&alphas[..l], self.d)) * y)[(0, 0)])
    }

    /// Assembles the estimate as an MPO without enumerating strings.
    pub fn to_mpo(&self) -> Result<MatrixProductOperator> {
        let d = self.d;
        let q = d * d;
        if let Some(block) = &self.passthrough {
            let mpo = MatrixProductOperator::from_coefficients(block, d, PASSTHROUGH_TOL)?;
            return self.finish(mpo);
        }
        let (n, l, r) = (self.n_sites, self.cfg.l, self.cfg.r);
        let qr = q.pow(r as u32);
        let mut sites = Vec::with_capacity(n);
        if l == 1 {
            sites.push(SiteTensor::new(
                (0..q).map(|a| self.closing.rows(a, 1).into_owned()).collect(),
            )?);
        } else {
            // sites 1..l-1 copy their index into the bond; site l reads L
            for i in 1..l {
                let (left, right) = (q.pow(i as u32 - 1), q.pow(i as u32));
                let mut t = SiteTensor::zeros(q, left, right);
                for a in 0..q {
                    let m = t.matrix_mut(a);
                    for p in 0..left {
                        m[(p, p * q + a)] = 1.0;
                    }
                }
                sites.push(t);
            }
            let left = q.pow(l as u32 - 1);
            let mut t = SiteTensor::zeros(q, left, qr);
            for a in 0..q {
                let m = t.matrix_mut(a);
                for p in 0..left {
                    m.row_mut(p).copy_from(&self.closing.row(p * q + a));
                }
            }
            sites.push(t);
        }
        for site_maps in &self.maps {
            sites.push(SiteTensor::new(site_maps.clone())?);
        }
        // the last r sites unpack the one-hot string vector one index at a time
        for m in 1..=r {
            let rest = q.pow((r - m) as u32);
            let mut t = SiteTensor::zeros(q, q * rest, rest);
            for a in 0..q {
                let mat = t.matrix_mut(a);
                for j in 0..rest {
                    mat[(a * rest + j, j)] = 1.0;
                }
            }
            sites.push(t);
        }
        self.finish(MatrixProductOperator::new(d, sites)?)
    }

    fn finish(&self, mpo: MatrixProductOperator) -> Result<MatrixProductOperator> {
        if mpo.sites().iter().flat_map(|s| s.matrices()).flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("reconstructed tensors".into()));
        }
        if self.cfg.normalize_trace {
            mpo.trace_normalized()
        } else {
            Ok(mpo)
        }
    }

    pub fn report(&self, mpo: Option<&MatrixProductOperator>) -> ReconstructionReport {
        let mut flags: Vec<SolverFlag> = self.sites.iter().flat_map(|s| s.flags.iter().copied()).collect();
        flags.sort_by_key(|f| *f as u8);
        flags.dedup();
        ReconstructionReport {
            config: self.cfg,
            n_sites: self.n_sites,
            window: self.cfg.window(),
            solver_mode: self.cfg.solver.name(),
            passthrough: self.passthrough.is_some(),
            sites: self.sites.clone(),
            flags,
            bond_dims: mpo.map(|m| m.bond_dims()).unwrap_or_default(),
            output: None,
        }
    }
}

/// Reconstructs the MPO estimate from block data.
pub fn reconstruct_mpo(data: &PauliBlockData, cfg: &ReconstructionConfig) -> Result<MatrixProductOperator> {
    Reconstruction::new(data, cfg)?.to_mpo()
}

/// Like [`reconstruct_mpo`], also returning the report.
pub fn reconstruct_with_report(
    data: &PauliBlockData,
    cfg: &ReconstructionConfig,
) -> Result<(MatrixProductOperator, ReconstructionReport)> {
    let rec = Reconstruction::new(data, cfg)?;
    let mpo = rec.to_mpo()?;
    let report = rec.report(Some(&mpo));
    Ok((mpo, report))
}

/// Evaluates one coefficient of the estimate step by step: starting from the
/// string on the last `r` sites, each site `k = N-r..l+1` replaces
/// `e_{alpha_k} (x) y` by the regularized solution of `B_k y' = C_k (e_{alpha_k} (x) y)`,
/// and the result is closed against the first block.
pub fn evaluate_recursion(data: &PauliBlockData, alphas: &[usize], cfg: &ReconstructionConfig) -> Result<f64> {
    check_data(data, cfg)?;
    let n = data.n_sites();
    let d = data.d();
    let q = d * d;
    if alphas.len() != n {
        return Err(Error::ShapeMismatch(format!("string of length {} on {n} sites", alphas.len())));
    }
    if let Some(&bad) = alphas.iter().find(|&&a| a >= q) {
        return Err(Error::IndexOutOfRange {
            what: "basis",
            index: bad,
            bound: q,
        });
    }
    if n == data.window() {
        return Ok(data.block(0)[pack(alphas, d)]);
    }
    let (l, r) = (cfg.l, cfg.r);
    let qr = q.pow(r as u32);
    let mut y = DMatrix::zeros(qr, 1);
    y[(pack(&alphas[n - r..], d), 0)] = 1.0;
    for k in (l + 1..=n - r).rev() {
        let pair: TransferPair = build_transfer_pair(data, k, l, r)?;
        let mut lifted = DMatrix::zeros(q * qr, 1);
        lifted.rows_mut(alphas[k - 1] * qr, qr).copy_from(&y);
        let rhs = &pair.c * lifted;
        let reg = cfg.regularizer_for(data, k - l - 1);
        y = robust_solve(&pair.b, &rhs, &reg)?.x;
    }
    let closing = closing_matrix(data, l, r);
    Ok((closing.row(pack(&alphas[..l], d)) * y)[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::unpack;
    use crate::measurement::{add_gaussian_noise, exact_block_data};
    use crate::reconstruction::SolverMode;
    use crate::states::{random_mpo_via_ancilla, DenseOperator, DEFAULT_COUPLING};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_distance(a: &MatrixProductOperator, b: &MatrixProductOperator) -> f64 {
        let aa = a.inner(a).unwrap();
        (aa - 2.0 * a.inner(b).unwrap() + b.inner(b).unwrap()) / aa
    }

    #[test]
    fn maximally_mixed_estimate() {
        let rho = DenseOperator::maximally_mixed(6, 2).unwrap();
        let data = exact_block_data(&rho, 3).unwrap();
        let cfg = ReconstructionConfig::for_window(3).unwrap();
        let est = reconstruct_mpo(&data, &cfg).unwrap();
        let coeffs = est.coefficients().unwrap();
        assert!((coeffs[0] - 0.125).abs() < 1e-12);
        assert!(coeffs[1..].iter().all(|c| c.abs() < 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let alphas: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
            let v = evaluate_recursion(&data, &alphas, &cfg).unwrap();
            if alphas.iter().all(|&a| a == 0) {
                assert!((v - 0.125).abs() < 1e-12);
            } else {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_data_fixed_point() {
        for (n, window, seed) in [(6, 3, 1), (6, 4, 2), (7, 5, 3)] {
            let mpo = random_mpo_via_ancilla(n, 0.3, seed).unwrap();
            let data = exact_block_data(&mpo, window).unwrap();
            let cfg = ReconstructionConfig::for_window(window).unwrap();
            let est = reconstruct_mpo(&data, &cfg).unwrap();
            let dist = rel_distance(&mpo, &est);
            assert!(dist.abs() < 1e-8, "N={n} R={window}: {dist:e}");
        }
    }

    #[test]
    fn assembled_mpo_matches_stepwise_recursion() {
        let mpo = random_mpo_via_ancilla(6, DEFAULT_COUPLING, 4).unwrap();
        let data = add_gaussian_noise(&exact_block_data(&mpo, 5).unwrap(), 1e-3, 9).unwrap();
        let cfg = ReconstructionConfig::for_window(5).unwrap();
        let rec = Reconstruction::new(&data, &cfg).unwrap();
        let est = rec.to_mpo().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..30 {
            let idx = rng.random_range(0..4usize.pow(6));
            let alphas = unpack(idx, 6, 2);
            let a = evaluate_recursion(&data, &alphas, &cfg).unwrap();
            let b = est.expectation(&alphas).unwrap();
            let c = rec.coefficient(&alphas).unwrap();
            assert!((a - b).abs() < 1e-10 && (b - c).abs() < 1e-12);
        }
    }

    #[test]
    fn full_window_is_passthrough() {
        let mpo = random_mpo_via_ancilla(5, 0.3, 5).unwrap();
        let data = exact_block_data(&mpo, 5).unwrap();
        let cfg = ReconstructionConfig::for_window(5).unwrap();
        let (est, report) = reconstruct_with_report(&data, &cfg).unwrap();
        assert!(report.passthrough);
        assert!(rel_distance(&mpo, &est).abs() < 1e-12);
        let alphas = [1, 2, 3, 0, 1];
        let v = evaluate_recursion(&data, &alphas, &cfg).unwrap();
        assert!((v - mpo.expectation(&alphas).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn uneven_split_bond_dimensions() {
        let mpo = random_mpo_via_ancilla(7, 0.3, 6).unwrap();
        let data = exact_block_data(&mpo, 5).unwrap();
        let cfg = ReconstructionConfig::new(3, 1, SolverMode::default());
        let est = reconstruct_mpo(&data, &cfg).unwrap();
        assert_eq!(est.bond_dims(), vec![1, 4, 16, 4, 4, 4, 4, 1]);
        assert!(rel_distance(&mpo, &est).abs() < 1e-8);
    }

    #[test]
    fn trace_normalization_on_request() {
        let mpo = random_mpo_via_ancilla(6, 0.1, 7).unwrap();
        let data = add_gaussian_noise(&exact_block_data(&mpo, 3).unwrap(), 1e-2, 1).unwrap();
        let mut cfg = ReconstructionConfig::for_window(3).unwrap();
        let raw = reconstruct_mpo(&data, &cfg).unwrap();
        assert!((raw.trace() - 1.0).abs() > 1e-6);
        cfg.normalize_trace = true;
        let normalized = reconstruct_mpo(&data, &cfg).unwrap();
        assert!((normalized.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tikhonov_solution_norm_shrinks_with_sigma() {
        let mpo = random_mpo_via_ancilla(6, 0.3, 8).unwrap();
        let data = exact_block_data(&mpo, 3).unwrap();
        let pair = build_transfer_pair(&data, 3, 1, 1).unwrap();
        let e = pair.c_slice(2, 4);
        let mut last = f64::INFINITY;
        for sigma2 in [0.0, 1e-6, 1e-4, 1e-2, 1.0] {
            let x = robust_solve(&pair.b, &e, &RegularizerSpec::Tikhonov { sigma2 }).unwrap().x;
            let norm = x.norm();
            assert!(norm <= last + 1e-12);
            last = norm;
        }
    }

    #[test]
    fn mismatched_window_is_rejected() {
        let rho = DenseOperator::maximally_mixed(6, 2).unwrap();
        let data = exact_block_data(&rho, 3).unwrap();
        let cfg = ReconstructionConfig::for_window(5).unwrap();
        assert!(reconstruct_mpo(&data, &cfg).is_err());
    }
}
