//! Block-local measurement records in the x/y/z product bases and the
//! qubit outcome model shared by simulation, MLE and Fisher information.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::states::DenseOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Index of the matching normalized Pauli basis element.
    pub fn basis_index(self) -> usize {
        match self {
            Axis::X => 1,
            Axis::Y => 2,
            Axis::Z => 3,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c.to_ascii_lowercase() {
            'x' => Ok(Axis::X),
            'y' => Ok(Axis::Y),
            'z' => Ok(Axis::Z),
            _ => Err(Error::Format(format!("unknown measurement axis '{c}'"))),
        }
    }
}

/// Counts for one product-basis setting. Outcome `o` is a bitmask over the
/// block with site 1 as the most significant bit; a set bit means `-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SettingCounts {
    pub axes: Vec<Axis>,
    pub shots: u64,
    pub counts: Vec<u64>,
}

impl SettingCounts {
    pub fn new(axes: Vec<Axis>, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != 1 << axes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} outcomes for a {}-site setting",
                counts.len(),
                axes.len()
            )));
        }
        let shots = counts.iter().sum();
        Ok(Self { axes, shots, counts })
    }

    pub fn label(&self) -> String {
        self.axes.iter().map(|a| a.as_char()).collect()
    }
}

/// All settings measured on block `k` (1-based) of `window` sites.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsBlock {
    pub k: usize,
    pub window: usize,
    pub settings: Vec<SettingCounts>,
}

impl CountsBlock {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Format("block indices start at 1".into()));
        }
        for s in &self.settings {
            if s.axes.len() != self.window {
                return Err(Error::Format(format!(
                    "setting '{}' does not cover {} sites",
                    s.label(),
                    self.window
                )));
            }
            if s.counts.len() != 1 << self.window {
                return Err(Error::Format(format!("setting '{}' has wrong outcome count", s.label())));
            }
            let total: u64 = s.counts.iter().sum();
            if total != s.shots {
                return Err(Error::Format(format!(
                    "block {} setting '{}': counts sum to {total}, shots = {}",
                    self.k,
                    s.label(),
                    s.shots
                )));
            }
        }
        if self.total_shots() == 0 {
            return Err(Error::InvalidArgument(format!("block {} has no counts", self.k)));
        }
        Ok(())
    }

    pub fn total_shots(&self) -> u64 {
        self.settings.iter().map(|s| s.shots).sum()
    }
}

/// Every setting in `{x,y,z}^window`, site 1 varying slowest.
pub fn all_settings(window: usize) -> Vec<Vec<Axis>> {
    let mut out = vec![Vec::new()];
    for _ in 0..window {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                Axis::ALL.iter().map(move |&a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out
}

/// In-place Walsh-Hadamard transform, `y[o] = sum_T x[T] (-1)^{|T & o|}`.
pub(crate) fn walsh_hadamard(x: &mut [f64]) {
    let n = x.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (x[j], x[j + h]);
                x[j] = a + b;
                x[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Packed basis index of the string that carries `axes` on the sites in
/// bitmask `subset` and the identity elsewhere.
pub(crate) fn subset_string(axes: &[Axis], subset: usize) -> usize {
    let r = axes.len();
    axes.iter().enumerate().fold(0, |acc, (i, a)| {
        acc * 4 + if subset >> (r - 1 - i) & 1 == 1 { a.basis_index() } else { 0 }
    })
}

/// `subset_string(axes, t)` for every subset `t`.
pub(crate) fn subset_table(axes: &[Axis]) -> Vec<usize> {
    (0..1usize << axes.len()).map(|t| subset_string(axes, t)).collect()
}

pub(crate) fn probabilities_from_table(coeffs: &[f64], table: &[usize], r: usize) -> Vec<f64> {
    let scale = 2f64.powf(-(r as f64) / 2.0);
    let mut u: Vec<f64> = table.iter().map(|&i| coeffs[i] * scale).collect();
    walsh_hadamard(&mut u);
    u
}

/// Outcome probabilities `tr[rho Pi_{s,o}]` of a qubit block from its
/// normalized Pauli coefficients.
pub fn setting_probabilities(coeffs: &[f64], axes: &[Axis]) -> Vec<f64> {
    probabilities_from_table(coeffs, &subset_table(axes), axes.len())
}

/// Multinomial sampling of `shots` outcomes per setting on every block.
pub fn simulate_counts(state: &DenseOperator, window: usize, shots: u64, seed: u64) -> Result<Vec<CountsBlock>> {
    if state.d() != 2 {
        return Err(Error::UnsupportedDimension(state.d()));
    }
    let n = state.n_sites();
    if window == 0 || window > n {
        return Err(Error::InvalidArgument(format!("window {window} invalid for {n} sites")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let settings = all_settings(window);
    (0..=n - window)
        .map(|start| {
            let coeffs = state.reduce(start, window)?.coefficients()?;
            let mut out = Vec::with_capacity(settings.len());
            for axes in &settings {
                let probs = setting_probabilities(&coeffs, axes);
                let counts = sample_multinomial(shots, &probs, &mut rng)?;
                out.push(SettingCounts {
                    axes: axes.clone(),
                    shots,
                    counts,
                });
            }
            Ok(CountsBlock {
                k: start + 1,
                window,
                settings: out,
            })
        })
        .collect()
}

/// Counts equal to `round(p * scale)`; emulates the infinite-shot limit.
pub fn expected_counts(state: &DenseOperator, window: usize, scale: f64) -> Result<Vec<CountsBlock>> {
    if state.d() != 2 {
        return Err(Error::UnsupportedDimension(state.d()));
    }
    let n = state.n_sites();
    if window == 0 || window > n {
        return Err(Error::InvalidArgument(format!("window {window} invalid for {n} sites")));
    }
    let settings = all_settings(window);
    (0..=n - window)
        .map(|start| {
            let coeffs = state.reduce(start, window)?.coefficients()?;
            let settings = settings
                .iter()
                .map(|axes| {
                    let counts = setting_probabilities(&coeffs, axes)
                        .iter()
                        .map(|p| (p.max(0.0) * scale).round() as u64)
                        .collect();
                    SettingCounts::new(axes.clone(), counts)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CountsBlock {
                k: start + 1,
                window,
                settings,
            })
        })
        .collect()
}

fn sample_multinomial(shots: u64, probs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    let mut counts = vec![0; probs.len()];
    let mut remaining = shots;
    let mut mass: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let p = p.max(0.0);
        let cond = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, cond)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng);
        counts[i] = draw;
        remaining -= draw;
        mass -= p;
    }
    Ok(counts)
}

/// Reduces full-chain records (one block covering all `N` sites) to
/// `window`-site blocks: outcomes are marginalized over the other sites and
/// global settings that agree on the block are pooled by summing.
pub fn marginalize_global_counts(global: &CountsBlock, window: usize) -> Result<Vec<CountsBlock>> {
    global.validate()?;
    let n = global.window;
    if window == 0 || window > n {
        return Err(Error::InvalidArgument(format!("window {window} invalid for {n} sites")));
    }
    (0..=n - window)
        .map(|start| {
            let mut pooled: BTreeMap<Vec<Axis>, Vec<u64>> = BTreeMap::new();
            for s in &global.settings {
                let axes = s.axes[start..start + window].to_vec();
                let entry = pooled.entry(axes).or_insert_with(|| vec![0; 1 << window]);
                for (o, &c) in s.counts.iter().enumerate() {
                    let local = (o >> (n - start - window)) & ((1 << window) - 1);
                    entry[local] += c;
                }
            }
            let settings = pooled
                .into_iter()
                .map(|(axes, counts)| SettingCounts::new(axes, counts))
                .collect::<Result<Vec<_>>>()?;
            Ok(CountsBlock {
                k: start + 1,
                window,
                settings,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::LocalBasis;
    use crate::states::NamedState;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn projector(axes: &[Axis], outcome: usize) -> DMatrix<Complex64> {
        let basis = LocalBasis::qubit();
        let r = axes.len();
        let mut out = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for (i, a) in axes.iter().enumerate() {
            let sign = if outcome >> (r - 1 - i) & 1 == 1 { -1.0 } else { 1.0 };
            let p = basis.element(a.basis_index()).unwrap() * Complex64::new(sign * 2f64.sqrt(), 0.0);
            let local = (DMatrix::identity(2, 2) + p) * Complex64::new(0.5, 0.0);
            out = out.kronecker(&local);
        }
        out
    }

    #[test]
    fn probabilities_match_projector_traces() {
        let rho = NamedState::w(3, vec![0.3, 1.1]).unwrap().dense().unwrap();
        let coeffs = rho.coefficients().unwrap();
        for axes in all_settings(3) {
            let p = setting_probabilities(&coeffs, &axes);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (o, &po) in p.iter().enumerate() {
                let direct = (rho.matrix() * projector(&axes, o)).trace().re;
                assert!((po - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_zero_state_in_z() {
        let rho = NamedState::all_zero(3).dense().unwrap();
        let blocks = simulate_counts(&rho, 2, 500, 1).unwrap();
        for b in &blocks {
            b.validate().unwrap();
            let zz = b.settings.iter().find(|s| s.axes == vec![Axis::Z, Axis::Z]).unwrap();
            assert_eq!(zz.counts, vec![500, 0, 0, 0]);
        }
    }

    #[test]
    fn maximally_mixed_frequencies() {
        let rho = DenseOperator::maximally_mixed(2, 2).unwrap();
        let shots = 100_000u64;
        let blocks = simulate_counts(&rho, 2, shots, 2).unwrap();
        let p = 0.25;
        let se = (p * (1.0 - p) / shots as f64).sqrt();
        for s in &blocks[0].settings {
            for &c in &s.counts {
                assert!((c as f64 / shots as f64 - p).abs() < 3.0 * se);
            }
        }
    }

    #[test]
    fn global_marginalization_pools_settings() {
        let rho = NamedState::ghz(3).unwrap().dense().unwrap();
        let global = simulate_counts(&rho, 3, 10, 4).unwrap().remove(0);
        let blocks = marginalize_global_counts(&global, 2).unwrap();
        assert_eq!(blocks.len(), 2);
        for b in &blocks {
            b.validate().unwrap();
            assert_eq!(b.settings.len(), 9);
            // each block setting pools three global settings
            assert!(b.settings.iter().all(|s| s.shots == 30));
        }
    }

    #[test]
    fn validation_catches_bad_totals() {
        let mut b = CountsBlock {
            k: 1,
            window: 1,
            settings: vec![SettingCounts::new(vec![Axis::Z], vec![3, 1]).unwrap()],
        };
        b.validate().unwrap();
        b.settings[0].shots = 5;
        assert!(b.validate().is_err());
    }
}
