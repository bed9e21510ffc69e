//! Distances, purities and the phase-optimized W-state fidelity.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::states::{AnyState, DenseOperator, MatrixProductOperator};

/// `||b - a||^2 / ||a||^2` in the Hilbert-Schmidt norm, reference first.
pub fn hs_distance_dense(reference: &DenseOperator, estimate: &DenseOperator) -> Result<f64> {
    if reference.n_sites() != estimate.n_sites() || reference.d() != estimate.d() {
        return Err(Error::ShapeMismatch("operators act on different spaces".into()));
    }
    let norm: f64 = reference.matrix().iter().map(|x| x.norm_sqr()).sum();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let diff: f64 = (estimate.matrix() - reference.matrix()).iter().map(|x| x.norm_sqr()).sum();
    Ok(diff / norm)
}

/// Same quantity from the three transfer-contracted inner products.
pub fn hs_distance_mpo(reference: &MatrixProductOperator, estimate: &MatrixProductOperator) -> Result<f64> {
    let aa = reference.inner(reference)?;
    if aa == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let ab = reference.inner(estimate)?;
    let bb = estimate.inner(estimate)?;
    Ok(((aa - 2.0 * ab + bb) / aa).max(0.0))
}

/// Dispatches on the representations; a mixed pair is compared via MPOs.
pub fn hs_distance(reference: &AnyState, estimate: &AnyState) -> Result<f64> {
    match (reference, estimate) {
        (AnyState::Dense(a), AnyState::Dense(b)) => hs_distance_dense(a, b),
        _ => hs_distance_mpo(&reference.to_mpo()?, &estimate.to_mpo()?),
    }
}

/// `tr[rho^2]`.
pub fn purity(state: &AnyState) -> f64 {
    match state {
        AnyState::Dense(s) => s.purity(),
        AnyState::Mpo(m) => m.purity(),
    }
}

pub fn min_eigenvalue(state: &DenseOperator) -> f64 {
    state.eigenvalues()[0]
}

/// Best overlap with a pure W state over its local phases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WFidelity {
    pub f: f64,
    /// `phi_1..phi_{N-1}` in `[0, 2 pi)`, in the convention of [`crate::states::NamedState::W`].
    pub phases: Vec<f64>,
    /// Final fidelity of every restart, in start order.
    pub restarts: Vec<f64>,
}

impl WFidelity {
    /// Largest minus smallest restart value.
    pub fn spread(&self) -> f64 {
        let max = self.restarts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.restarts.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

pub const W_FIDELITY_STARTS: usize = 8;
const W_FIDELITY_SEED: u64 = 0x5745_4c4c;
const W_MAX_SWEEPS: usize = 100_000;

pub fn fidelity_w_optimized(rho: &DenseOperator) -> Result<WFidelity> {
    fidelity_w_optimized_with(rho, W_FIDELITY_STARTS, W_FIDELITY_SEED)
}

/// Maximizes `<W(phi)| rho |W(phi)>` by exact coordinate ascent from
/// `starts` random phase vectors. Only the single-excitation block of `rho`
/// enters; the last site's branch is the phase reference.
pub fn fidelity_w_optimized_with(rho: &DenseOperator, starts: usize, seed: u64) -> Result<WFidelity> {
    if rho.d() != 2 {
        return Err(Error::UnsupportedDimension(rho.d()));
    }
    if starts == 0 {
        return Err(Error::InvalidArgument("need at least one start".into()));
    }
    let n = rho.n_sites();
    let index = |i: usize| 1usize << (n - 1 - i);
    let m = DMatrix::from_fn(n, n, |i, j| rho.matrix()[(index(i), index(j))]);
    let value = |theta: &[f64]| -> f64 {
        let v: Vec<Complex64> = theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += v[i].conj() * m[(i, j)] * v[j];
            }
        }
        acc.re / n as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut restarts = Vec::with_capacity(starts);
    for _ in 0..starts {
        // theta_i is the phase of the branch with the excitation on site i
        let mut theta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..tau)).collect();
        theta[n - 1] = 0.0;
        let mut f = value(&theta);
        for _ in 0..W_MAX_SWEEPS {
            let mut step: f64 = 0.0;
            for k in 0..n.saturating_sub(1) {
                let field: Complex64 = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| m[(k, j)] * Complex64::from_polar(1.0, theta[j]))
                    .sum();
                if field.norm() > 0.0 {
                    let next = field.arg();
                    let delta = (next - theta[k]).rem_euclid(tau);
                    step = step.max(delta.min(tau - delta));
                    theta[k] = next;
                }
            }
            let next = value(&theta);
            // both the objective and the phases must have settled
            let change = (next - f).abs().max(step);
            f = next;
            if change < 1e-12 {
                break;
            }
        }
        restarts.push(f);
        if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
            best = Some((f, theta));
        }
    }
    let (f, theta) = best.expect("at least one start");
    let phases = (0..n.saturating_sub(1))
        .map(|p| theta[n - 2 - p].rem_euclid(tau))
        .collect();
    Ok(WFidelity { f, phases, restarts })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompareOptions {
    /// Compute the dense-only quantities (minimum eigenvalue).
    pub dense: bool,
    pub fidelity_w: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    #[serde(rename = "D")]
    pub d: f64,
    pub purity_ref: f64,
    pub purity_est: f64,
    pub min_eigenvalue_est: Option<f64>,
    pub fidelity_w: Option<WFidelity>,
}

impl ComparisonReport {
    pub const CSV_HEADER: [&'static str; 6] = ["D", "purity_ref", "purity_est", "min_eigenvalue_est", "fidelity_w", "phi_opt"];

    pub fn csv_record(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        vec![
            format!("{:e}", self.d),
            format!("{:e}", self.purity_ref),
            format!("{:e}", self.purity_est),
            opt(self.min_eigenvalue_est),
            opt(self.fidelity_w.as_ref().map(|w| w.f)),
            self.fidelity_w
                .as_ref()
                .map(|w| w.phases.iter().map(|p| format!("{p:.12}")).collect::<Vec<_>>().join(";"))
                .unwrap_or_default(),
        ]
    }
}

/// Compares an estimate against a reference.
pub fn compare(reference: &AnyState, estimate: &AnyState, opts: &CompareOptions) -> Result<ComparisonReport> {
    if reference.n_sites() != estimate.n_sites() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} sites, estimate {}",
            reference.n_sites(),
            estimate.n_sites()
        )));
    }
    let d = hs_distance(reference, estimate)?;
    let dense_est = if opts.dense || opts.fidelity_w {
        Some(estimate.to_dense()?)
    } else {
        None
    };
    let min_eigenvalue_est = match (&dense_est, opts.dense) {
        (Some(e), true) => Some(min_eigenvalue(e)),
        _ => None,
    };
    let fidelity_w = match (&dense_est, opts.fidelity_w) {
        (Some(e), true) => Some(fidelity_w_optimized(e)?),
        _ => None,
    };
    Ok(ComparisonReport {
        d,
        purity_ref: purity(reference),
        purity_est: purity(estimate),
        min_eigenvalue_est,
        fidelity_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{random_mpo_via_ancilla, NamedState};
    use nalgebra::DVector;

    #[test]
    fn distance_basics() {
        let a = NamedState::all_zero(3).dense().unwrap();
        assert_eq!(hs_distance_dense(&a, &a).unwrap(), 0.0);
        let mut psi = DVector::zeros(8);
        psi[7] = Complex64::new(1.0, 0.0);
        let b = DenseOperator::from_pure(&psi, 2).unwrap();
        assert!((hs_distance_dense(&a, &b).unwrap() - 2.0).abs() < 1e-15);
        let zero = DenseOperator::maximally_mixed(3, 2).unwrap().scaled(0.0);
        assert!(matches!(hs_distance_dense(&zero, &a), Err(Error::ZeroNorm)));
    }

    #[test]
    fn dense_and_mpo_paths_agree() {
        for seed in 0..3 {
            let a = random_mpo_via_ancilla(6, 0.3, seed).unwrap();
            let b = random_mpo_via_ancilla(6, 0.3, seed + 10).unwrap();
            let (da, db) = (a.to_dense().unwrap(), b.to_dense().unwrap());
            let x = hs_distance_mpo(&a, &b).unwrap();
            let y = hs_distance_dense(&da, &db).unwrap();
            assert!((x - y).abs() < 1e-10);
            assert!((a.purity() - da.purity()).abs() < 1e-12);
            // the unnormalized squared distance is symmetric
            let sym = hs_distance_mpo(&b, &a).unwrap() * b.purity();
            assert!((x * a.purity() - sym).abs() < 1e-12);
        }
    }

    #[test]
    fn w_self_fidelity() {
        let phases = vec![0.4, 2.0, 5.1, 1.2];
        let rho = NamedState::w(5, phases.clone()).unwrap().dense().unwrap();
        let w = fidelity_w_optimized(&rho).unwrap();
        assert!((w.f - 1.0).abs() < 1e-12);
        for (a, b) in w.phases.iter().zip(&phases) {
            assert!((a - b).abs() < 1e-6, "{:?}", w.phases);
        }
        assert_eq!(w.restarts.len(), 8);
    }

    #[test]
    fn maximally_mixed_fidelity() {
        let rho = DenseOperator::maximally_mixed(4, 2).unwrap();
        let w = fidelity_w_optimized(&rho).unwrap();
        assert!((w.f - 1.0 / 16.0).abs() < 1e-15);
        assert!(w.spread() < 1e-15);
    }

    #[test]
    fn fidelity_is_gauge_invariant() {
        let phases = vec![0.3, 1.7, 2.9];
        let rho = NamedState::w(4, phases).unwrap().dense().unwrap();
        let mixed = DenseOperator::new(
            rho.matrix().scale(0.6) + DMatrix::identity(16, 16).scale(0.4 / 16.0),
            2,
        )
        .unwrap();
        // a global phase on the single-excitation block is a diagonal unitary
        let mut u = DMatrix::<Complex64>::identity(16, 16);
        for i in 0..4 {
            u[(1 << i, 1 << i)] = Complex64::from_polar(1.0, 0.77);
        }
        let rotated = DenseOperator::new(&u * mixed.matrix() * u.adjoint(), 2).unwrap();
        let a = fidelity_w_optimized(&mixed).unwrap();
        let b = fidelity_w_optimized(&rotated).unwrap();
        assert!((a.f - b.f).abs() < 1e-12);
        assert!((a.f - (0.6 + 0.4 / 16.0)).abs() < 1e-12);
    }

    #[test]
    fn comparison_report_round_trip() {
        let a = random_mpo_via_ancilla(4, 0.3, 1).unwrap();
        let b = random_mpo_via_ancilla(4, 0.3, 2).unwrap();
        let rep = compare(
            &AnyState::Mpo(a.clone()),
            &AnyState::Mpo(b),
            &CompareOptions {
                dense: true,
                fidelity_w: true,
            },
        )
        .unwrap();
        assert!(rep.d > 0.0);
        assert!(rep.min_eigenvalue_est.unwrap() > -1e-10);
        assert_eq!(rep.csv_record().len(), ComparisonReport::CSV_HEADER.len());
        let json = serde_json::to_value(&rep).unwrap();
        assert!(json.get("D").is_some());
        let mixed = compare(&AnyState::Mpo(a.clone()), &AnyState::Dense(a.to_dense().unwrap()), &CompareOptions::default())
            .unwrap();
        assert!(mixed.d < 1e-12);
    }
}
