//! Diagnostics and theory checks: effective dimension, the behavior-error
//! term, the total-variation suboptimality bound, safe-improvement bound
//! verification and the collapsed-state counterexample audit.

mod audit;
mod bounds;
mod effdim;
mod stats;

pub use audit::{audit_counterexample, greedy_collapsed_policy, run_counterexample_audit, AuditItem, AuditReport, AUDIT_TOL};
pub use bounds::{
    eps_beta_continuous, eps_beta_policy, eps_beta_tabular, horizon_scale, mean_l2_error, tvd_suboptimality_bound,
    verify_theorem2, verify_theorem3, BoundReport, TvdBound,
};
pub use effdim::{
    effective_dimension, effective_dimension_trace, EffectiveDimensionReport, ProbeBatch, DEFAULT_EPSILON,
};
pub use stats::{iqm, mean_std, median};
