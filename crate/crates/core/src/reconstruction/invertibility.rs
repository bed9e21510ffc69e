use nalgebra::DMatrix;
use serde::Serialize;

use crate::basis::DENSE_CAP;
use crate::error::{Error, Result};
use crate::linalg::rank_of;
use crate::states::{DenseOperator, MatrixProductOperator};

/// Ranks of the local and global maps across the cut after site `k` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CutRanks {
    pub k: usize,
    pub local_rank: usize,
    pub global_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenseInvertibilityReport {
    pub l: usize,
    pub r: usize,
    pub rank_tol: f64,
    pub cuts: Vec<CutRanks>,
    pub is_invertible: bool,
}

fn check_lr(n: usize, l: usize, r: usize) -> Result<()> {
    if l < 1 || r < 1 || l + r + 1 > n {
        return Err(Error::InvalidArgument(format!("(l, r) = ({l}, {r}) invalid for {n} sites")));
    }
    Ok(())
}

/// Compares, for every cut `k` in `l..=N-r-1`, the rank of the map between
/// sites `k-l+1..k` and `k+1..k+r` with the rank of the map between the two
/// halves of the chain.
pub fn check_invertibility_dense(
    state: &DenseOperator,
    l: usize,
    r: usize,
    rank_tol: f64,
) -> Result<DenseInvertibilityReport> {
    let n = state.n_sites();
    if n > DENSE_CAP {
        return Err(Error::CapExceeded { n, cap: DENSE_CAP });
    }
    check_lr(n, l, r)?;
    let q = state.d() * state.d();
    let full = state.coefficients()?;
    let mut cuts = Vec::new();
    for k in l..n - r {
        let local = state.reduce(k - l, l + r)?.coefficients()?;
        let local_rank = rank_of(&DMatrix::from_row_slice(q.pow(l as u32), q.pow(r as u32), &local), rank_tol)?;
        let global = DMatrix::from_row_slice(q.pow(k as u32), q.pow((n - k) as u32), &full);
        let global_rank = rank_of(&global, rank_tol)?;
        cuts.push(CutRanks {
            k,
            local_rank,
            global_rank,
        });
    }
    let is_invertible = cuts.iter().all(|c| c.local_rank == c.global_rank);
    Ok(DenseInvertibilityReport {
        l,
        r,
        rank_tol,
        cuts,
        is_invertible,
    })
}

/// Span verdicts at cut `k`: left products over sites `k-l+1..k`, right
/// products over `k+1..k+r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpanCheck {
    pub k: usize,
    pub left_rank: usize,
    pub left_required: usize,
    pub right_rank: usize,
    pub right_required: usize,
    pub sufficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanReport {
    pub l: usize,
    pub r: usize,
    pub rank_tol: f64,
    pub cuts: Vec<SpanCheck>,
    /// All cuts satisfy the span conditions, which implies invertibility.
    pub sufficient: bool,
}

/// All products `P_a[alpha_a]..P_b[alpha_b]` flattened row-major, one row per string.
fn product_span(mpo: &MatrixProductOperator, first: usize, last: usize) -> DMatrix<f64> {
    let q = mpo.d() * mpo.d();
    let mut products: Vec<DMatrix<f64>> = mpo.site(first).matrices().to_vec();
    for i in first + 1..=last {
        let site = mpo.site(i);
        products = products
            .iter()
            .flat_map(|p| site.matrices().iter().map(move |m| p * m))
            .collect();
    }
    debug_assert_eq!(products.len(), q.pow((last - first + 1) as u32));
    let (rows, cols) = (products[0].nrows(), products[0].ncols());
    DMatrix::from_fn(products.len(), rows * cols, |s, e| products[s][(e / cols, e % cols)])
}

/// Sufficient condition for `(l, r)`-invertibility read off the MPO tensors.
pub fn check_invertibility_mpo_spans(
    mpo: &MatrixProductOperator,
    l: usize,
    r: usize,
    rank_tol: f64,
) -> Result<SpanReport> {
    let n = mpo.n_sites();
    check_lr(n, l, r)?;
    if mpo.trace().abs() < 1e-300 {
        return Err(Error::ZeroTrace);
    }
    let mut cuts = Vec::new();
    for k in l..n - r {
        // 0-based sites k-l..k-1 on the left, k..k+r-1 on the right
        let left = product_span(mpo, k - l, k - 1);
        let right = product_span(mpo, k, k + r - 1);
        let left_rank = rank_of(&left, rank_tol)?;
        let right_rank = rank_of(&right, rank_tol)?;
        let (left_required, right_required) = (left.ncols(), right.ncols());
        cuts.push(SpanCheck {
            k,
            left_rank,
            left_required,
            right_rank,
            right_required,
            sufficient: left_rank == left_required && right_rank == right_required,
        });
    }
    let sufficient = cuts.iter().all(|c| c.sufficient);
    Ok(SpanReport {
        l,
        r,
        rank_tol,
        cuts,
        sufficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RANK_TOL;
    use crate::states::{random_mpo_via_ancilla, NamedState, DEFAULT_COUPLING};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ghz_is_not_invertible() {
        let rho = NamedState::ghz(6).unwrap().dense().unwrap();
        let rep = check_invertibility_dense(&rho, 1, 1, RANK_TOL).unwrap();
        assert!(!rep.is_invertible);
        assert_eq!(rep.cuts[0].local_rank, 2);
        assert_eq!(rep.cuts[0].global_rank, 4);
    }

    #[test]
    fn product_and_mixed_states_are_invertible() {
        let product = NamedState::all_zero(6).dense().unwrap();
        let mixed = DenseOperator::maximally_mixed(6, 2).unwrap();
        for (l, r) in [(1, 1), (2, 1), (2, 2), (1, 3)] {
            for rho in [&product, &mixed] {
                let rep = check_invertibility_dense(rho, l, r, RANK_TOL).unwrap();
                assert!(rep.is_invertible);
                assert!(rep.cuts.iter().all(|c| c.local_rank == 1 && c.global_rank == 1));
            }
        }
    }

    #[test]
    fn ancilla_spans_by_dimension_counting() {
        let mpo = random_mpo_via_ancilla(8, DEFAULT_COUPLING, 11).unwrap();
        assert!(check_invertibility_mpo_spans(&mpo, 2, 2, RANK_TOL).unwrap().sufficient);
        let narrow = check_invertibility_mpo_spans(&mpo, 1, 1, RANK_TOL).unwrap();
        assert!(!narrow.sufficient);
        assert!(narrow.cuts.iter().any(|c| c.left_required == 16 && c.left_rank <= 4));
    }

    #[test]
    fn random_bond_two_passes_narrow_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mpo = MatrixProductOperator::random_real(6, 2, 2, &mut rng).unwrap();
        assert!(check_invertibility_mpo_spans(&mpo, 1, 1, RANK_TOL).unwrap().sufficient);
    }

    #[test]
    fn span_conditions_imply_dense_invertibility() {
        let mpo = random_mpo_via_ancilla(6, 0.3, 2).unwrap();
        let spans = check_invertibility_mpo_spans(&mpo, 2, 2, RANK_TOL).unwrap();
        let dense = check_invertibility_dense(&mpo.to_dense().unwrap(), 2, 2, RANK_TOL).unwrap();
        assert!(spans.sufficient);
        assert!(dense.is_invertible);
    }
}
