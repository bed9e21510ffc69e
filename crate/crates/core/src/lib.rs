//! Reconstruction of mixed states of spin chains as matrix product operators
//! from their reductions to blocks of `R` contiguous sites.
//!
//! The pipeline is: generate a state ([`states`]), produce Pauli block data
//! from it ([`measurement`]), rebuild an MPO ([`reconstruction`]) and compare
//! ([`metrics`]). [`sweep`] runs that pipeline over parameter grids.

pub mod basis;
pub mod error;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod metrics;
pub mod reconstruction;
pub mod states;
pub mod sweep;

pub use error::{Error, Result};
