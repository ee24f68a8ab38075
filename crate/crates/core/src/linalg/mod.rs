//! Local linear navigation: finite-difference Jacobian, SVD, low-rank
//! truncation and the pseudo-inverse step.

mod jacobian;
mod svd;

pub use jacobian::{estimate_jacobian, BbnFunction, GroundTruthFunction, JacobianEstimate, UnitCubeFunction, DEFAULT_STEP};
pub use svd::{
    low_rank, navigate_linear, pseudo_inverse, svd, FactorsExport, LinearStep, LowRankMap, PseudoInverse, SvdFactors,
    DEFAULT_SIGMA_TOL, MAX_SWEEPS,
};
