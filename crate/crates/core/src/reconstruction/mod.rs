//! Estimating an MPO from block data: local transfer maps, their regularized
//! inverses, invertibility diagnostics and the backward recursion.

mod config;
mod invertibility;
mod recursion;
mod solver;
mod transfer;

pub use config::{column_covariance, ReconstructionConfig, SolverMode};
pub use invertibility::{
    check_invertibility_dense, check_invertibility_mpo_spans, CutRanks, DenseInvertibilityReport, SpanCheck,
    SpanReport,
};
pub use recursion::{
    evaluate_recursion, reconstruct_mpo, reconstruct_with_report, Reconstruction, ReconstructionReport,
    SiteSummary,
};
pub use solver::{filter_factors, robust_solve, RegularizerSpec, SiteInverse, SolveOutcome, SolverFlag};
pub use transfer::{build_transfer_pair, TransferPair};
