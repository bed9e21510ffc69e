use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::measurement::PauliBlockData;

/// Matrices of the two local maps at recursion site `k` (1-based): rows are
/// strings on sites `k-l..k-1`, columns strings on `k..k+r-1` (`b`) or
/// `k..k+r` (`c`).
#[derive(Debug, Clone, PartialEq)]
pub struct TransferPair {
    pub k: usize,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl TransferPair {
    /// Columns of `c` with the string on site `k` fixed to `alpha`.
    pub fn c_slice(&self, alpha: usize, q: usize) -> DMatrix<f64> {
        let width = self.c.ncols() / q;
        self.c.columns(alpha * width, width).into_owned()
    }
}

/// Block `k - l` (1-based) read as a `d^{2l} x d^{2(r+1)}` matrix, and its
/// identity-padded restriction.
pub fn build_transfer_pair(data: &PauliBlockData, k: usize, l: usize, r: usize) -> Result<TransferPair> {
    let n = data.n_sites();
    if l + r + 1 != data.window() {
        return Err(Error::InvalidArgument(format!(
            "l + r + 1 = {} does not match the block size {}",
            l + r + 1,
            data.window()
        )));
    }
    if k < l + 1 || k + r > n {
        return Err(Error::IndexOutOfRange {
            what: "recursion site",
            index: k,
            bound: n - r,
        });
    }
    let d = data.d();
    let q = d * d;
    let rows = q.pow(l as u32);
    let cols = q.pow(r as u32 + 1);
    let block = data.block(k - l - 1);
    let c = DMatrix::from_row_slice(rows, cols, block);
    let sqrt_d = (d as f64).sqrt();
    let b = DMatrix::from_fn(rows, cols / q, |i, j| sqrt_d * c[(i, j * q)]);
    Ok(TransferPair { k, b, c })
}
