//! Plant, controller, and the compact closed loop they form.
//!
//! The closed-loop state is `x̄ = [x_p; x_u]`. With reference `v` and
//! disturbance `w`:
//!
//! ```text
//! x̄(t+1) = Ā x̄(t) + B̄_v v + B̄_w w(t)
//! y(t)   = C̄ x̄(t) + D̄_v v + D̄_w w(t)
//! ```

use crate::linalg::{
    is_schur_with, lu_solve_with, mat_exp, psd_factor, solve_discrete_lyapunov_with, LinalgError,
    Mat,
};
use crate::settings::NumericSettings;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("closed-loop matrix is not Schur stable")]
    NotSchur,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("disturbance covariance is not symmetric positive semi-definite")]
    NotPSD,
    #[error("I - A_bar is singular")]
    SingularMatrix,
}

impl From<LinalgError> for ModelError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::SingularMatrix => ModelError::SingularMatrix,
            LinalgError::NotSchur => ModelError::NotSchur,
            LinalgError::NotPD => ModelError::NotPSD,
            LinalgError::DimensionMismatch(s) => ModelError::DimensionMismatch(s),
        }
    }
}

/// `x_p⁺ = A x_p + B_u u + B_w w`, `y = C x_p + D_u u + D_w w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: Mat,
    pub b_u: Mat,
    pub b_w: Mat,
    pub c: Mat,
    pub d_u: Mat,
    pub d_w: Mat,
}

/// `u = K_p x_p + K_u x_u + B_v v`, `x_u⁺ = A_p x_p + A_u x_u + D_v v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerModel {
    pub k_p: Mat,
    pub k_u: Mat,
    pub b_v: Mat,
    pub a_p: Mat,
    pub a_u: Mat,
    pub d_v: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_xp: usize,
    pub n_xu: usize,
    pub n_u: usize,
    pub n_v: usize,
    pub n_w: usize,
    pub n_y: usize,
}

impl Dims {
    /// Length of the closed-loop state `[x_p; x_u]`.
    pub fn n_x(&self) -> usize {
        self.n_xp + self.n_xu
    }

    /// Length of the stacked variable `z = (x_p, x_u, v)`.
    pub fn n_z(&self) -> usize {
        self.n_xp + self.n_xu + self.n_v
    }
}

fn expect_shape(name: &str, m: &Mat, rows: usize, cols: usize) -> Result<(), ModelError> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.rows(),
            m.cols()
        )))
    }
}

impl PlantModel {
    fn dims(&self) -> Result<(usize, usize, usize, usize), ModelError> {
        let n_xp = self.a.rows();
        let n_u = self.b_u.cols();
        let n_w = self.b_w.cols();
        let n_y = self.c.rows();
        expect_shape("A", &self.a, n_xp, n_xp)?;
        expect_shape("B_u", &self.b_u, n_xp, n_u)?;
        expect_shape("B_w", &self.b_w, n_xp, n_w)?;
        expect_shape("C", &self.c, n_y, n_xp)?;
        expect_shape("D_u", &self.d_u, n_y, n_u)?;
        expect_shape("D_w", &self.d_w, n_y, n_w)?;
        Ok((n_xp, n_u, n_w, n_y))
    }
}

/// The assembled closed loop. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopModel {
    plant: PlantModel,
    ctrl: ControllerModel,
    w: Mat,
    dims: Dims,
    a_bar: Mat,
    bv_bar: Mat,
    bw_bar: Mat,
    c_bar: Mat,
    dv_bar: Mat,
    dw_bar: Mat,
    /// `(I − Ā)⁻¹ B̄_v`, maps a constant reference to its equilibrium state.
    steady_gain: Mat,
    settings: NumericSettings,
}

/// Builds the compact closed loop with default numeric settings.
pub fn assemble(
    plant: PlantModel,
    ctrl: ControllerModel,
    w: Mat,
) -> Result<ClosedLoopModel, ModelError> {
    assemble_with(plant, ctrl, w, NumericSettings::default())
}

pub fn assemble_with(
    plant: PlantModel,
    ctrl: ControllerModel,
    w: Mat,
    settings: NumericSettings,
) -> Result<ClosedLoopModel, ModelError> {
    let (n_xp, n_u, n_w, n_y) = plant.dims()?;
    let n_xu = ctrl.a_u.rows();
    let n_v = ctrl.b_v.cols();
    expect_shape("K_p", &ctrl.k_p, n_u, n_xp)?;
    expect_shape("K_u", &ctrl.k_u, n_u, n_xu)?;
    expect_shape("B_v", &ctrl.b_v, n_u, n_v)?;
    expect_shape("A_p", &ctrl.a_p, n_xu, n_xp)?;
    expect_shape("A_u", &ctrl.a_u, n_xu, n_xu)?;
    expect_shape("D_v", &ctrl.d_v, n_xu, n_v)?;
    expect_shape("W", &w, n_w, n_w)?;
    if !w.is_symmetric(1e-12) || !w.is_finite() || psd_factor(&w, settings.zero_variance).is_err() {
        return Err(ModelError::NotPSD);
    }

    let a_bar = Mat::vstack(&[
        &Mat::hstack(&[
            &(&plant.a + &plant.b_u.matmul(&ctrl.k_p)),
            &plant.b_u.matmul(&ctrl.k_u),
        ]),
        &Mat::hstack(&[&ctrl.a_p, &ctrl.a_u]),
    ]);
    let bv_bar = Mat::vstack(&[&plant.b_u.matmul(&ctrl.b_v), &ctrl.d_v]);
    let bw_bar = Mat::vstack(&[&plant.b_w, &Mat::zeros(n_xu, n_w)]);
    let c_bar = Mat::hstack(&[
        &(&plant.c + &plant.d_u.matmul(&ctrl.k_p)),
        &plant.d_u.matmul(&ctrl.k_u),
    ]);
    let dv_bar = plant.d_u.matmul(&ctrl.b_v);
    let dw_bar = plant.d_w.clone();

    if !a_bar.is_finite() || !is_schur_with(&a_bar, &settings) {
        return Err(ModelError::NotSchur);
    }
    let n_x = n_xp + n_xu;
    let steady_gain = lu_solve_with(&(&Mat::identity(n_x) - &a_bar), &bv_bar, &settings)?;

    Ok(ClosedLoopModel {
        plant,
        ctrl,
        w,
        dims: Dims {
            n_xp,
            n_xu,
            n_u,
            n_v,
            n_w,
            n_y,
        },
        a_bar,
        bv_bar,
        bw_bar,
        c_bar,
        dv_bar,
        dw_bar,
        steady_gain,
        settings,
    })
}

/// Output covariances `Σ_y(0..=T)` together with the stationary limit.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSequence {
    pub sigma_y: Vec<Mat>,
    pub sigma_y_inf: Mat,
    pub sigma_x_inf: Mat,
}

impl ClosedLoopModel {
    pub fn plant(&self) -> &PlantModel {
        &self.plant
    }
    pub fn controller(&self) -> &ControllerModel {
        &self.ctrl
    }
    pub fn w(&self) -> &Mat {
        &self.w
    }
    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn a_bar(&self) -> &Mat {
        &self.a_bar
    }
    pub fn bv_bar(&self) -> &Mat {
        &self.bv_bar
    }
    pub fn bw_bar(&self) -> &Mat {
        &self.bw_bar
    }
    pub fn c_bar(&self) -> &Mat {
        &self.c_bar
    }
    pub fn dv_bar(&self) -> &Mat {
        &self.dv_bar
    }
    pub fn dw_bar(&self) -> &Mat {
        &self.dw_bar
    }
    pub fn settings(&self) -> &NumericSettings {
        &self.settings
    }

    /// `(I − Ā)⁻¹ B̄_v`.
    pub fn steady_gain(&self) -> &Mat {
        &self.steady_gain
    }

    /// `C̄(I − Ā)⁻¹B̄_v + D̄_v`, the DC gain from reference to output.
    pub fn steady_output_gain(&self) -> Mat {
        &self.c_bar.matmul(&self.steady_gain) + &self.dv_bar
    }

    /// Equilibrium state and output for a constant reference.
    pub fn steady_state(&self, r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(r.len(), self.dims.n_v, "reference length");
        let x = self.steady_gain.mul_vec(r);
        let y = self.steady_output_gain().mul_vec(r);
        (x, y)
    }

    /// One noise-free closed-loop step.
    pub fn step_mean(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut next = self.a_bar.mul_vec(x);
        for (n, b) in next.iter_mut().zip(self.bv_bar.mul_vec(v)) {
            *n += b;
        }
        next
    }

    /// `ȳ(t)` for `t = 0..=horizon` from initial state `x0` and a constant reference `v`.
    pub fn output_mean_sequence(&self, x0: &[f64], v: &[f64], horizon: usize) -> Vec<Vec<f64>> {
        assert_eq!(x0.len(), self.dims.n_x(), "state length");
        let dv = self.dv_bar.mul_vec(v);
        let mut x = x0.to_vec();
        let mut out = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let mut y = self.c_bar.mul_vec(&x);
            for (yi, d) in y.iter_mut().zip(&dv) {
                *yi += d;
            }
            out.push(y);
            if t < horizon {
                x = self.step_mean(&x, v);
            }
        }
        out
    }

    /// Iterator over the maps `(C̄Āᵗ, C̄Σ_{k<t}ĀᵏB̄_v + D̄_v)` for `t = 0, 1, …`.
    pub fn mean_maps(&self) -> MeanMaps<'_> {
        MeanMaps {
            model: self,
            state_map: self.c_bar.clone(),
            ref_map: self.dv_bar.clone(),
        }
    }

    /// Iterator over `Σ_y(t)` for `t = 0, 1, …`, starting from `Σ_x(0) = 0`.
    pub fn output_covariances(&self) -> OutputCovariances<'_> {
        let n_x = self.dims.n_x();
        OutputCovariances {
            model: self,
            sigma_x: Mat::zeros(n_x, n_x),
            input_cov: self.bw_bar.congruence(&self.w).symmetrize(),
            direct_cov: self.dw_bar.congruence(&self.w).symmetrize(),
        }
    }

    /// Stationary state covariance `Σ_x∞ = ĀΣ_x∞Āᵀ + B̄_wWB̄_wᵀ`.
    pub fn sigma_x_inf(&self) -> Result<Mat, ModelError> {
        let q = self.bw_bar.congruence(&self.w).symmetrize();
        Ok(solve_discrete_lyapunov_with(
            &self.a_bar.transpose(),
            &q,
            &self.settings,
        )?)
    }

    /// Stationary output covariance `Σ_y∞ = C̄Σ_x∞C̄ᵀ + D̄_wWD̄_wᵀ`.
    pub fn sigma_y_inf(&self) -> Result<Mat, ModelError> {
        let sx = self.sigma_x_inf()?;
        Ok((&self.c_bar.congruence(&sx) + &self.dw_bar.congruence(&self.w)).symmetrize())
    }

    pub fn output_cov_sequence(&self, horizon: usize) -> Result<CovSequence, ModelError> {
        let sigma_y = self.output_covariances().take(horizon + 1).collect();
        let sigma_x_inf = self.sigma_x_inf()?;
        let sigma_y_inf =
            (&self.c_bar.congruence(&sigma_x_inf) + &self.dw_bar.congruence(&self.w)).symmetrize();
        Ok(CovSequence {
            sigma_y,
            sigma_y_inf,
            sigma_x_inf,
        })
    }
}

pub struct MeanMaps<'a> {
    model: &'a ClosedLoopModel,
    state_map: Mat,
    ref_map: Mat,
}

impl Iterator for MeanMaps<'_> {
    type Item = (Mat, Mat);

    fn next(&mut self) -> Option<(Mat, Mat)> {
        let item = (self.state_map.clone(), self.ref_map.clone());
        self.ref_map = &self.ref_map + &self.state_map.matmul(&self.model.bv_bar);
        self.state_map = self.state_map.matmul(&self.model.a_bar);
        Some(item)
    }
}

pub struct OutputCovariances<'a> {
    model: &'a ClosedLoopModel,
    sigma_x: Mat,
    input_cov: Mat,
    direct_cov: Mat,
}

impl Iterator for OutputCovariances<'_> {
    type Item = Mat;

    fn next(&mut self) -> Option<Mat> {
        let m = self.model;
        let sy = (&m.c_bar.congruence(&self.sigma_x) + &self.direct_cov).symmetrize();
        self.sigma_x = (&m.a_bar.congruence(&self.sigma_x) + &self.input_cov).symmetrize();
        Some(sy)
    }
}

/// Zero-order-hold discretization of `ẋ = A_c x + Σ B_k u_k`.
///
/// All input blocks are held together over the sample: the exponential of
/// `dt·[[A_c, B_1, …, B_m], [0, 0, …, 0]]` yields `A_d` in its leading block and
/// `∫₀^dt e^{sA_c} ds · B_k` in the remaining columns.
pub fn discretize_zoh(a_c: &Mat, b_cols: &[&Mat], dt: f64) -> Result<(Mat, Vec<Mat>), ModelError> {
    assert!(dt > 0.0, "sampling period must be positive");
    let n = a_c.rows();
    expect_shape("A_c", a_c, n, n)?;
    for (k, b) in b_cols.iter().enumerate() {
        if b.rows() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "input block {k} has {} rows, expected {n}",
                b.rows()
            )));
        }
    }
    let m: usize = b_cols.iter().map(|b| b.cols()).sum();
    let mut aug = Mat::zeros(n + m, n + m);
    aug.set_block(0, 0, a_c);
    let mut c0 = n;
    for b in b_cols {
        aug.set_block(0, c0, b);
        c0 += b.cols();
    }
    let e = mat_exp(&aug.scale(dt));
    let a_d = e.submatrix(0, 0, n, n);
    let mut out = Vec::with_capacity(b_cols.len());
    let mut c0 = n;
    for b in b_cols {
        out.push(e.submatrix(0, c0, n, b.cols()));
        c0 += b.cols();
    }
    Ok((a_d, out))
}
