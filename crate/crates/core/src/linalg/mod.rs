//! Dense linear algebra for the small systems handled by the governor.

mod decomp;
mod mat;

pub use decomp::{
    cholesky, cholesky_with, inverse, is_schur, is_schur_with, lu_solve, lu_solve_with,
    lyapunov_residual, mat_exp, min_ldl_pivot, psd_factor, solve_discrete_lyapunov,
    solve_discrete_lyapunov_with, Lu,
};
pub use mat::{add_vec, axpy, dot, norm2, norm_inf_vec, sub_vec, Mat};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision")]
    SingularMatrix,
    #[error("matrix is not Schur stable (Lyapunov iteration diverged)")]
    NotSchur,
    #[error("matrix is not positive definite")]
    NotPD,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
