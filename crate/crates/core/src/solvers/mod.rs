//! Optimization engines: weighted-`ℓ1` coordinate descent and an ADMM for
//! the `ℓ∞` gradient-constrained program.

mod admm;
mod cd;
mod fused;

pub use admm::{admm_linf_constrained, project_linf, AdmmFit, AdmmSettings, LinfConstraint, QuadraticLoss};
pub use fused::{fused_lasso_bcd, fused_scalar_min, FusedFit, FusedLasso, SourceTerm};
pub use cd::{
    kkt_residual, quadratic_lasso_cd, weighted_lasso_cd, CdFit, CdSettings, QuadraticLasso, WeightedLasso,
};
