use super::{LinalgError, Mat};
use crate::settings::NumericSettings;

/// LU factorization with partial pivoting, `P·A = L·U` packed into one matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Self, LinalgError> {
        Self::factor_with(a, &NumericSettings::default())
    }

    pub fn factor_with(a: &Mat, settings: &NumericSettings) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let max_row_norm = (0..n)
            .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let tol = settings.lu_pivot_rel * max_row_norm;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pval) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if pval <= tol || pval == 0.0 {
                return Err(LinalgError::SingularMatrix);
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= factor * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &Mat) -> Mat {
        let mut out = Mat::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.col(j));
            for (i, xi) in x.into_iter().enumerate() {
                out[(i, j)] = xi;
            }
        }
        out
    }
}

/// Solves `A·X = B` by LU with partial pivoting.
pub fn lu_solve(a: &Mat, b: &Mat) -> Result<Mat, LinalgError> {
    lu_solve_with(a, b, &NumericSettings::default())
}

pub fn lu_solve_with(a: &Mat, b: &Mat, settings: &NumericSettings) -> Result<Mat, LinalgError> {
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "lu_solve: A is {}x{}, B has {} rows",
            a.rows(),
            a.cols(),
            b.rows()
        )));
    }
    Ok(Lu::factor_with(a, settings)?.solve(b))
}

pub fn inverse(a: &Mat) -> Result<Mat, LinalgError> {
    lu_solve(a, &Mat::identity(a.rows()))
}

/// Cholesky factor `L` (lower triangular) with `L·Lᵀ = S`.
pub fn cholesky(s: &Mat) -> Result<Mat, LinalgError> {
    cholesky_with(s, &NumericSettings::default())
}

pub fn cholesky_with(s: &Mat, settings: &NumericSettings) -> Result<Mat, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::DimensionMismatch(
            "cholesky needs a square matrix".into(),
        ));
    }
    let n = s.rows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let threshold = settings.chol_pivot_rel * s.trace() / n as f64;
    factor_lower(s, threshold).ok_or(LinalgError::NotPD)
}

fn factor_lower(s: &Mat, threshold: f64) -> Option<Mat> {
    let n = s.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold && d > 0.0) {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut v = 0.5 * (s[(i, j)] + s[(j, i)]);
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Some(l)
}

/// Smallest pivot of an unpivoted `LDLᵀ` sweep; negative when `S` is indefinite.
pub fn min_ldl_pivot(s: &Mat) -> f64 {
    let n = s.rows();
    let mut l = Mat::zeros(n, n);
    let mut d = vec![0.0; n];
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut dj = s[(j, j)];
        for k in 0..j {
            dj -= l[(j, k)] * l[(j, k)] * d[k];
        }
        d[j] = dj;
        min_pivot = min_pivot.min(dj);
        l[(j, j)] = 1.0;
        for i in j + 1..n {
            let mut v = 0.5 * (s[(i, j)] + s[(j, i)]);
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)] * d[k];
            }
            // A zero pivot leaves the column undetermined; treat it as decoupled.
            l[(i, j)] = if dj.abs() > 0.0 { v / dj } else { 0.0 };
        }
    }
    if n == 0 {
        0.0
    } else {
        min_pivot
    }
}

/// Factor `L` with `L·Lᵀ = S` for a symmetric positive semi-definite `S`.
///
/// Pivots at or below `tol·max(diag)` are zeroed instead of rejected, so singular
/// covariances (including the zero matrix) are factored exactly.
pub fn psd_factor(s: &Mat, tol: f64) -> Result<Mat, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::DimensionMismatch(
            "psd_factor needs a square matrix".into(),
        ));
    }
    let n = s.rows();
    let scale = (0..n).map(|i| s[(i, i)]).fold(0.0, f64::max);
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol.max(1e-12) * scale.max(1.0) {
            return Err(LinalgError::NotPD);
        }
        if d <= tol * scale {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut v = 0.5 * (s[(i, j)] + s[(j, i)]);
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// Solves `AᵀPA − P + Q = 0` by the doubling iteration.
///
/// For the transpose form `APAᵀ − P + Q = 0` pass `Aᵀ`.
pub fn solve_discrete_lyapunov(a: &Mat, q: &Mat) -> Result<Mat, LinalgError> {
    solve_discrete_lyapunov_with(a, q, &NumericSettings::default())
}

pub fn solve_discrete_lyapunov_with(
    a: &Mat,
    q: &Mat,
    settings: &NumericSettings,
) -> Result<Mat, LinalgError> {
    if !a.is_square() || q.shape() != a.shape() {
        return Err(LinalgError::DimensionMismatch(format!(
            "lyapunov: A is {}x{}, Q is {}x{}",
            a.rows(),
            a.cols(),
            q.rows(),
            q.cols()
        )));
    }
    let mut p = q.symmetrize();
    let mut ak = a.clone();
    for _ in 0..settings.lyap_max_doublings {
        let inc = ak.transpose().matmul(&p).matmul(&ak);
        p = (&p + &inc).symmetrize();
        if !p.is_finite() {
            return Err(LinalgError::NotSchur);
        }
        let inc_norm = inc.norm_inf();
        let p_norm = p.norm_inf();
        if inc_norm <= settings.lyap_increment_rel * p_norm || p_norm == 0.0 {
            return Ok(p);
        }
        ak = ak.matmul(&ak);
        if !ak.is_finite() {
            return Err(LinalgError::NotSchur);
        }
    }
    Err(LinalgError::NotSchur)
}

/// Residual `‖AᵀPA − P + Q‖∞` of a discrete Lyapunov solution.
pub fn lyapunov_residual(a: &Mat, p: &Mat, q: &Mat) -> f64 {
    let r = &(&a.transpose().matmul(p).matmul(a) - p) + q;
    r.norm_inf()
}

/// Schur stability test: every eigenvalue strictly inside the unit disc.
///
/// Decided by whether the Lyapunov equation for `Aᵀ` with `Q = I` has a
/// positive-definite solution, which avoids a nonsymmetric eigensolver.
pub fn is_schur(a: &Mat) -> bool {
    is_schur_with(a, &NumericSettings::default())
}

pub fn is_schur_with(a: &Mat, settings: &NumericSettings) -> bool {
    if !a.is_square() {
        return false;
    }
    if a.rows() == 0 {
        return true;
    }
    match solve_discrete_lyapunov_with(&a.transpose(), &Mat::identity(a.rows()), settings) {
        Ok(p) => factor_lower(&p, settings.pd_pivot_abs).is_some(),
        Err(_) => false,
    }
}

/// Matrix exponential by scaling and squaring with a Taylor core.
///
/// The argument is scaled so that `‖M/2ˢ‖∞ ≤ 0.5`; the series is then summed
/// until the next term is below machine precision relative to the partial sum.
pub fn mat_exp(m: &Mat) -> Mat {
    assert!(m.is_square(), "mat_exp needs a square matrix");
    let n = m.rows();
    let norm = m.norm_inf();
    let mut s = 0u32;
    if norm > 0.5 {
        s = (norm / 0.5).log2().ceil() as u32;
    }
    let x = m.scale(0.5f64.powi(s as i32));
    let mut sum = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..=40 {
        term = term.matmul(&x).scale(1.0 / k as f64);
        sum = &sum + &term;
        if term.norm_inf() <= 1e-18 * sum.norm_inf() {
            break;
        }
    }
    for _ in 0..s {
        sum = sum.matmul(&sum);
    }
    sum
}
