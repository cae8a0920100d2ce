//! Controller state and reference governor.
//!
//! At each step the governor picks the controller state `x_u` and the
//! modified reference `v` that minimize a Lyapunov-weighted distance to the
//! commanded equilibrium, subject to `(x_p, x_u, v)` lying in the admissible
//! set. When that is impossible it keeps the previously admissible pair.

use crate::linalg::{cholesky_with, lyapunov_residual, solve_discrete_lyapunov_with, Mat};
use crate::model::{ClosedLoopModel, ModelError};
use crate::oinf::OinfResult;
use crate::settings::NumericSettings;
use crate::solver::{
    solve_qp_ball_with, solve_qp_with, BallConstraint, BallStatus, Halfspace, QpProblem, QpStatus,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GovernorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid governor configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state is not admissible (max violation {violation:e})")]
    InitialStateInadmissible { violation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Reference moves toward the command by at least `δ` in the `R`-norm per optimized step.
    Alg1,
    /// Tries to jump straight to the command first, then falls back to `Alg1`.
    Alg2,
}

/// Which rule produced the step's decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Optimized,
    /// `v = r` accepted directly (`Alg2` only).
    CommandAccepted,
    Fallback,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Optimized => "optimized",
            Branch::CommandAccepted => "command",
            Branch::Fallback => "fallback",
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimized" => Ok(Branch::Optimized),
            "command" => Ok(Branch::CommandAccepted),
            "fallback" => Ok(Branch::Fallback),
            _ => Err(format!("unknown branch tag {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiag {
    pub branch: Branch,
    /// `(x_p, x̄_u, v_prev) ∈ Õ∞`.
    pub candidate_admissible: bool,
    /// Feasibility of the ball-constrained problem, if it was attempted.
    pub ball_feasible: Option<bool>,
    /// Feasibility of the direct-command problem, if it was attempted.
    pub command_feasible: Option<bool>,
    /// Cost at the returned decision.
    pub cost: f64,
    pub ball_radius: f64,
    /// `max(a·z − b)` over the set rows at the returned decision.
    pub violation: f64,
}

/// Quadratic data of the per-step cost as a function of `d = (x_u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTerms {
    pub problem: QpProblem,
    pub constant: f64,
}

impl CostTerms {
    pub fn value(&self, d: &[f64]) -> f64 {
        self.problem.objective(d) + self.constant
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GovernorConfig {
    pub p: Mat,
    pub q: Mat,
    pub r: Mat,
    pub delta: f64,
    pub algorithm: Algorithm,
    pub oinf: OinfResult,
    hessian: Mat,
    /// Set rows split into the `x_p` part and the `(x_u, v)` part.
    rows_xp: Vec<Vec<f64>>,
    rows_d: Vec<Vec<f64>>,
}

impl GovernorConfig {
    pub fn new(
        m: &ClosedLoopModel,
        q: Mat,
        r: Mat,
        delta: f64,
        algorithm: Algorithm,
        oinf: OinfResult,
    ) -> Result<Self, GovernorError> {
        let dims = m.dims();
        let settings = m.settings();
        if q.shape() != (dims.n_x(), dims.n_x()) || r.shape() != (dims.n_v, dims.n_v) {
            return Err(GovernorError::InvalidConfig(format!(
                "Q is {:?}, R is {:?}; expected {}×{} and {}×{}",
                q.shape(),
                r.shape(),
                dims.n_x(),
                dims.n_x(),
                dims.n_v,
                dims.n_v
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(GovernorError::InvalidConfig(format!(
                "delta = {delta} must be positive"
            )));
        }
        for (name, mat) in [("Q", &q), ("R", &r)] {
            if !mat.is_symmetric(1e-12 * (1.0 + mat.max_abs()))
                || cholesky_with(mat, settings).is_err()
            {
                return Err(GovernorError::InvalidConfig(format!(
                    "{name} must be symmetric positive definite"
                )));
            }
        }
        let set = &oinf.set;
        if (set.n_xp, set.n_xu, set.n_v) != (dims.n_xp, dims.n_xu, dims.n_v) {
            return Err(GovernorError::InvalidConfig(
                "admissible set dimensions do not match the model".into(),
            ));
        }
        let p = solve_discrete_lyapunov_with(m.a_bar(), &q, settings).map_err(ModelError::from)?;
        let res = lyapunov_residual(m.a_bar(), &p, &q);
        if res > 1e-9 * (1.0 + p.max_abs()) {
            return Err(GovernorError::InvalidConfig(format!(
                "Lyapunov residual {res:e} too large"
            )));
        }

        let n_d = dims.n_xu + dims.n_v;
        let lever = decision_lever(m);
        let mut hessian = lever.transpose().congruence(&p);
        for i in 0..dims.n_v {
            for j in 0..dims.n_v {
                hessian[(dims.n_xu + i, dims.n_xu + j)] += r[(i, j)];
            }
        }
        let hessian = hessian.scale(2.0).symmetrize();
        debug_assert_eq!(hessian.shape(), (n_d, n_d));

        let (rows_xp, rows_d) = set
            .rows
            .iter()
            .map(|h| (h.a[..dims.n_xp].to_vec(), h.a[dims.n_xp..].to_vec()))
            .unzip();
        Ok(Self {
            p,
            q,
            r,
            delta,
            algorithm,
            oinf,
            hessian,
            rows_xp,
            rows_d,
        })
    }

    /// The set rows with `x_p` substituted, over `d = (x_u, v)`, each pulled in by
    /// the solver feasibility tolerance so that accepted solutions satisfy the
    /// original rows without round-off excess.
    ///
    /// Returns `None` when a row free of the decision is already violated.
    fn fixed_rows(&self, x_p: &[f64], tol: f64, feas_tol: f64) -> Option<Vec<Halfspace>> {
        let mut out = Vec::with_capacity(self.rows_d.len());
        for ((axp, ad), h) in self
            .rows_xp
            .iter()
            .zip(&self.rows_d)
            .zip(&self.oinf.set.rows)
        {
            let b = h.b - crate::linalg::dot(axp, x_p);
            if ad.iter().all(|x| x.abs() <= 1e-14) {
                if b < -tol * (1.0 + h.b.abs()) {
                    return None;
                }
                continue;
            }
            out.push(Halfspace::new(ad.clone(), b - feas_tol * (1.0 + h.b.abs())));
        }
        Some(out)
    }
}

/// `M` with `x̄ − x̄*(v) = [x_p; 0] + M·(x_u, v)`.
fn decision_lever(m: &ClosedLoopModel) -> Mat {
    let dims = m.dims();
    let mut lever = Mat::zeros(dims.n_x(), dims.n_xu + dims.n_v);
    for j in 0..dims.n_xu {
        lever[(dims.n_xp + j, j)] = 1.0;
    }
    let s = m.steady_gain();
    for i in 0..dims.n_x() {
        for j in 0..dims.n_v {
            lever[(i, dims.n_xu + j)] = -s[(i, j)];
        }
    }
    lever
}

/// `J = ‖[x_p; x_u] − x̄*(v)‖²_P + ‖v − r‖²_R` as `½dᵀHd + fᵀd + const` over `d = (x_u, v)`.
pub fn cost_terms(m: &ClosedLoopModel, cfg: &GovernorConfig, x_p: &[f64], r: &[f64]) -> CostTerms {
    let dims = m.dims();
    assert_eq!(x_p.len(), dims.n_xp, "x_p length");
    assert_eq!(r.len(), dims.n_v, "reference length");
    let lever = decision_lever(m);
    let mut e0 = x_p.to_vec();
    e0.resize(dims.n_x(), 0.0);
    let pe = cfg.p.mul_vec(&e0);
    let mut f = lever.tr_mul_vec(&pe);
    let rr = cfg.r.mul_vec(r);
    for j in 0..dims.n_v {
        f[dims.n_xu + j] -= rr[j];
    }
    f.iter_mut().for_each(|x| *x *= 2.0);
    let constant = cfg.p.quad_form(&e0) + cfg.r.quad_form(r);
    CostTerms {
        problem: QpProblem {
            h: cfg.hessian.clone(),
            f,
            rows: Vec::new(),
        },
        constant,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GovernorState {
    pub x_p_prev: Vec<f64>,
    pub x_u_prev: Vec<f64>,
    pub v_prev: Vec<f64>,
    pub initialized: bool,
    /// At the first step the supplied `x_u(0)` is the fallback candidate itself.
    first_step: bool,
}

impl GovernorState {
    /// Starts from `(x_p(0), x_u(0), v(0))`, which must lie in the admissible set.
    ///
    /// `v(0)` also serves as the predecessor reference of the first step.
    pub fn init(
        cfg: &GovernorConfig,
        x_p: &[f64],
        x_u: &[f64],
        v: &[f64],
    ) -> Result<Self, GovernorError> {
        let set = &cfg.oinf.set;
        if x_p.len() != set.n_xp || x_u.len() != set.n_xu || v.len() != set.n_v {
            return Err(GovernorError::InvalidConfig(
                "initial state dimensions".into(),
            ));
        }
        let z: Vec<f64> = x_p.iter().chain(x_u).chain(v).copied().collect();
        if !set.contains(&z) {
            return Err(GovernorError::InitialStateInadmissible {
                violation: set.max_violation(&z),
            });
        }
        Ok(Self {
            x_p_prev: x_p.to_vec(),
            x_u_prev: x_u.to_vec(),
            v_prev: v.to_vec(),
            initialized: true,
            first_step: true,
        })
    }

    /// `x̄_u = A_p x_p(t−1) + A_u x_u(t−1) + D_v v(t−1)`.
    pub fn predicted_controller_state(&self, m: &ClosedLoopModel) -> Vec<f64> {
        if self.first_step {
            return self.x_u_prev.clone();
        }
        let c = m.controller();
        let mut x = c.a_p.mul_vec(&self.x_p_prev);
        for (xi, (a, b)) in x.iter_mut().zip(
            c.a_u
                .mul_vec(&self.x_u_prev)
                .into_iter()
                .zip(c.d_v.mul_vec(&self.v_prev)),
        ) {
            *xi += a + b;
        }
        x
    }

    fn commit(&mut self, x_p: &[f64], x_u: &[f64], v: &[f64]) {
        self.x_p_prev.copy_from_slice(x_p);
        self.x_u_prev.copy_from_slice(x_u);
        self.v_prev.copy_from_slice(v);
        self.first_step = false;
    }
}

fn stack(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    a.iter().chain(b).chain(c).copied().collect()
}

fn finish(
    m: &ClosedLoopModel,
    cfg: &GovernorConfig,
    st: &mut GovernorState,
    x_p: &[f64],
    r: &[f64],
    x_u: Vec<f64>,
    v: Vec<f64>,
    mut diag: StepDiag,
) -> (Vec<f64>, Vec<f64>, StepDiag) {
    let d: Vec<f64> = x_u.iter().chain(&v).copied().collect();
    diag.cost = cost_terms(m, cfg, x_p, r).value(&d);
    diag.violation = cfg.oinf.set.max_violation(&stack(x_p, &x_u, &v));
    st.commit(x_p, &x_u, &v);
    (x_u, v, diag)
}

/// Contracting step: ball-constrained optimization with fallback to the predicted pair.
pub fn step_alg1(
    m: &ClosedLoopModel,
    cfg: &GovernorConfig,
    st: &mut GovernorState,
    x_p: &[f64],
    r: &[f64],
) -> (Vec<f64>, Vec<f64>, StepDiag) {
    assert!(st.initialized, "governor state not initialized");
    let settings = m.settings();
    let n_xu = m.dims().n_xu;
    let x_bar = st.predicted_controller_state(m);
    let v_prev = st.v_prev.clone();
    let candidate = stack(x_p, &x_bar, &v_prev);
    let admissible = cfg.oinf.set.contains(&candidate);
    let ball = BallConstraint {
        center: r.to_vec(),
        radius: 0.0,
        metric: cfg.r.clone(),
    };
    let radius = (ball.distance(&v_prev) - cfg.delta).max(0.0);
    let mut diag = StepDiag {
        branch: Branch::Fallback,
        candidate_admissible: admissible,
        ball_feasible: None,
        command_feasible: None,
        cost: f64::NAN,
        ball_radius: radius,
        violation: f64::NAN,
    };
    if admissible {
        if let Some(rows) = cfg.fixed_rows(x_p, settings.row_tol, settings.feas_tol) {
            let mut prob = cost_terms(m, cfg, x_p, r).problem;
            prob.rows = rows;
            let ball = BallConstraint { radius, ..ball };
            let v_idx: Vec<usize> = (n_xu..n_xu + r.len()).collect();
            let warm: Vec<f64> = x_bar.iter().chain(&v_prev).copied().collect();
            match solve_qp_ball_with(&prob, &ball, &v_idx, Some(&warm), settings) {
                BallStatus::Optimal(s) => {
                    diag.ball_feasible = Some(true);
                    diag.branch = Branch::Optimized;
                    let (xu, v) = s.point.split_at(n_xu);
                    return finish(m, cfg, st, x_p, r, xu.to_vec(), v.to_vec(), diag);
                }
                BallStatus::Infeasible => diag.ball_feasible = Some(false),
                BallStatus::Stalled => {
                    log::warn!("ball QP stalled; keeping the predicted pair");
                    diag.ball_feasible = Some(false);
                }
            }
        } else {
            diag.ball_feasible = Some(false);
        }
    }
    finish(m, cfg, st, x_p, r, x_bar, v_prev, diag)
}

/// Command-first step: accept `v = r` when some controller state makes it admissible.
pub fn step_alg2(
    m: &ClosedLoopModel,
    cfg: &GovernorConfig,
    st: &mut GovernorState,
    x_p: &[f64],
    r: &[f64],
) -> (Vec<f64>, Vec<f64>, StepDiag) {
    assert!(st.initialized, "governor state not initialized");
    let differs = st.v_prev.iter().zip(r).any(|(a, b)| (a - b).abs() > 1e-12);
    if !differs {
        return step_alg1(m, cfg, st, x_p, r);
    }
    let settings = m.settings();
    let n_xu = m.dims().n_xu;
    if let Some(rows) = cfg.fixed_rows(x_p, settings.row_tol, settings.feas_tol) {
        let full = cost_terms(m, cfg, x_p, r).problem;
        let h = full.h.submatrix(0, 0, n_xu, n_xu);
        let h_uv = full.h.submatrix(0, n_xu, n_xu, r.len());
        let mut f = full.f[..n_xu].to_vec();
        for (fi, x) in f.iter_mut().zip(h_uv.mul_vec(r)) {
            *fi += x;
        }
        let rows = rows
            .into_iter()
            .filter_map(|row| {
                let (au, av) = row.a.split_at(n_xu);
                let b = row.b - crate::linalg::dot(av, r);
                if au.iter().all(|x| x.abs() <= 1e-14) {
                    (b < -settings.row_tol * (1.0 + row.b.abs()))
                        .then(|| Halfspace::new(vec![0.0; n_xu], b))
                } else {
                    Some(Halfspace::new(au.to_vec(), b))
                }
            })
            .collect::<Vec<_>>();
        let trivially_empty = rows.iter().any(|row| row.a.iter().all(|&x| x == 0.0));
        if !trivially_empty {
            let prob = QpProblem { h, f, rows };
            let warm = st.predicted_controller_state(m);
            let start = prob
                .rows
                .iter()
                .all(|row| row.contains(&warm, settings.feas_tol));
            let warm_start = start.then_some(crate::solver::QpWarmStart {
                point: &warm,
                working_set: &[],
            });
            if let QpStatus::Optimal(s) = solve_qp_with(&prob, warm_start, settings) {
                let diag = StepDiag {
                    branch: Branch::CommandAccepted,
                    candidate_admissible: cfg.oinf.set.contains(&stack(x_p, &warm, &st.v_prev)),
                    ball_feasible: None,
                    command_feasible: Some(true),
                    cost: f64::NAN,
                    ball_radius: f64::NAN,
                    violation: f64::NAN,
                };
                return finish(m, cfg, st, x_p, r, s.point, r.to_vec(), diag);
            }
        }
    }
    let (xu, v, mut diag) = step_alg1(m, cfg, st, x_p, r);
    diag.command_feasible = Some(false);
    (xu, v, diag)
}

/// Dispatches on the configured algorithm.
pub fn step(
    m: &ClosedLoopModel,
    cfg: &GovernorConfig,
    st: &mut GovernorState,
    x_p: &[f64],
    r: &[f64],
) -> (Vec<f64>, Vec<f64>, StepDiag) {
    match cfg.algorithm {
        Algorithm::Alg1 => step_alg1(m, cfg, st, x_p, r),
        Algorithm::Alg2 => step_alg2(m, cfg, st, x_p, r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityDiagnostics {
    /// `trace(W·B̄_wᵀ P B̄_w)`, the per-step noise injection into `V = ‖·‖²_P`.
    pub mu: f64,
    /// Largest `α ∈ (0, 1]` with `α‖ζ‖²_P ≤ ‖ζ‖²_Q`.
    pub alpha: f64,
}

impl StabilityDiagnostics {
    pub fn floor(&self) -> f64 {
        self.mu / self.alpha
    }

    /// `μ/α + (1 − α)ⁿ·V₀`.
    pub fn bound(&self, n: u32, v0: f64) -> f64 {
        self.floor() + (1.0 - self.alpha).powi(n as i32) * v0
    }
}

pub fn stability_diagnostics(m: &ClosedLoopModel, cfg: &GovernorConfig) -> StabilityDiagnostics {
    let mu = m
        .w()
        .matmul(&m.bw_bar().transpose().congruence(&cfg.p))
        .trace();
    let settings = NumericSettings {
        chol_pivot_rel: 0.0,
        ..m.settings().clone()
    };
    let pd = |a: f64| cholesky_with(&(&cfg.q - &cfg.p.scale(a)), &settings).is_ok();
    let alpha = if pd(1.0) {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if pd(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        lo
    };
    StabilityDiagnostics { mu, alpha }
}
