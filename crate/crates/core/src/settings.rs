//! Numeric tolerances shared by every solver.

/// Tolerances used throughout the crate.
///
/// The defaults are the values the algorithms are specified and tested
/// against; override individual fields only when working with systems whose
/// scaling differs substantially from the built-in examples.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericSettings {
    /// LU pivot threshold relative to the largest row norm.
    pub lu_pivot_rel: f64,
    /// Doubling iteration stops once the increment is below this fraction of `‖P‖∞`.
    pub lyap_increment_rel: f64,
    /// Maximum doubling steps before a Lyapunov solve is declared divergent.
    pub lyap_max_doublings: usize,
    /// Cholesky fails when a pivot is at most this times `trace(S)/n`.
    pub chol_pivot_rel: f64,
    /// Smallest Cholesky pivot accepted by the positive-definiteness test in `is_schur`.
    pub pd_pivot_abs: f64,
    /// Output variances below this are treated as exactly zero.
    pub zero_variance: f64,
    /// Relative tolerance for membership and redundancy tests: `a·z ≤ b + tol·(1+|b|)`.
    pub row_tol: f64,
    /// Primal feasibility tolerance for LP/QP.
    pub feas_tol: f64,
    /// Dual (multiplier) feasibility tolerance for LP/QP.
    pub dual_tol: f64,
    /// Diagonal regularization added to a QP Hessian with a tiny pivot.
    pub qp_regularization: f64,
    /// Ball residual at which the multiplier bisection stops.
    pub ball_tol: f64,
    /// Artificial bound used by the LP to detect unboundedness.
    pub lp_big: f64,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self {
            lu_pivot_rel: 1e-12,
            lyap_increment_rel: 1e-14,
            lyap_max_doublings: 200,
            chol_pivot_rel: 1e-12,
            pd_pivot_abs: 1e-10,
            zero_variance: 1e-14,
            row_tol: 1e-9,
            feas_tol: 1e-9,
            dual_tol: 1e-10,
            qp_regularization: 1e-10,
            ball_tol: 1e-8,
            lp_big: 1e6,
        }
    }
}
