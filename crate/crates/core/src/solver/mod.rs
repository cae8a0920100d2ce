//! Dense LP and convex QP solvers over halfspace systems `a·d ≤ b`.
//!
//! All pivot and active-set choices are deterministic, so identical inputs
//! give bit-identical outputs.

mod ball;
mod lp;
mod qp;

pub use ball::{
    ball_stationarity, solve_qp_ball, solve_qp_ball_with, BallConstraint, BallSolution, BallStatus,
};
pub use lp::{find_feasible_point, solve_lp, solve_lp_with, LpSolution, LpStatus};
pub use qp::{
    kkt_residuals, solve_qp, solve_qp_with, KktResiduals, QpProblem, QpSolution, QpStatus,
    QpWarmStart,
};

use crate::linalg::{dot, norm2};

/// The inequality `a·d ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Halfspace {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        Self { a, b }
    }

    /// `a·d − b`; positive means violated.
    pub fn residual(&self, d: &[f64]) -> f64 {
        dot(&self.a, d) - self.b
    }

    /// Scales the row so that `‖a‖₂ = 1`. Rows with `a = 0` are returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = norm2(&self.a);
        if n == 0.0 {
            return self.clone();
        }
        Self {
            a: self.a.iter().map(|x| x / n).collect(),
            b: self.b / n,
        }
    }

    /// Membership test with the relative band `a·d ≤ b + tol·(1+|b|)`.
    pub fn contains(&self, d: &[f64], tol: f64) -> bool {
        dot(&self.a, d) <= self.b + tol * (1.0 + self.b.abs())
    }
}

/// Largest residual `a·d − b` over `rows`; `−∞` for an empty system.
pub fn max_residual(rows: &[Halfspace], d: &[f64]) -> f64 {
    rows.iter()
        .map(|h| h.residual(d))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Whether every row holds within the relative band.
pub fn all_contain(rows: &[Halfspace], d: &[f64], tol: f64) -> bool {
    rows.iter().all(|h| h.contains(d, tol))
}
