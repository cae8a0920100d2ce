//! Chance-tightened output admissible sets over `z = (x_p, x_u, v)`.
//!
//! Each constraint `G_iᵀ y ≤ g_i` must hold with probability `β_i`. With
//! Gaussian disturbances this becomes a deterministic inequality on the
//! output mean whose right-hand side shrinks with the output standard
//! deviation at each prediction step `t`. Intersecting those inequalities
//! over `t` gives a finitely determined polyhedron.

use crate::linalg::{dot, norm2, Mat};
use crate::model::{ClosedLoopModel, ModelError};
use crate::prob::{chi2_inv, erf_inv, DomainError, Probability};
use crate::settings::NumericSettings;
use crate::solver::{find_feasible_point, solve_lp_with, Halfspace, LpStatus};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OinfError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid chance specification: {0}")]
    InvalidSpec(String),
    #[error("constraint set is empty")]
    Infeasible,
    #[error(
        "constraint {row} has zero steady-state gain and non-positive tightened slack {slack:e}"
    )]
    AssumptionViolated { row: usize, slack: f64 },
    #[error("set not finitely determined within t_max = {t_max}")]
    NotFinitelyDetermined { t_max: usize },
    #[error("redundancy LP unbounded at stage {t}; the set is not bounded")]
    Unbounded { t: usize },
    #[error("LP solver stalled at stage {t}")]
    SolverStalled { t: usize },
}

/// How the individual chance constraints relate to each other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointMode {
    /// Each row carries its own confidence level.
    Individual,
    /// Joint level `β` split evenly across rows by Boole's inequality.
    RiskAllocation(Probability),
    /// Joint level `β` enforced through the `β`-level confidence ellipsoid of `y`.
    ConfidenceEllipsoid(Probability),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChanceSpec {
    /// `n_y × n_g`; column `i` is the normal of constraint `i`.
    pub g_mat: Mat,
    pub bounds: Vec<f64>,
    pub betas: Vec<Probability>,
    pub mode: JointMode,
}

fn check_level(b: Probability, what: &str) -> Result<(), OinfError> {
    if b.value() > 0.5 {
        Ok(())
    } else {
        Err(OinfError::InvalidSpec(format!(
            "{what} = {} must exceed 0.5",
            b.value()
        )))
    }
}

impl ChanceSpec {
    pub fn individual(
        g_mat: Mat,
        bounds: Vec<f64>,
        betas: Vec<Probability>,
    ) -> Result<Self, OinfError> {
        let spec = Self {
            g_mat,
            bounds,
            betas,
            mode: JointMode::Individual,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn risk_allocation(
        g_mat: Mat,
        bounds: Vec<f64>,
        beta: Probability,
    ) -> Result<Self, OinfError> {
        check_level(beta, "joint level")?;
        let betas = risk_allocate(beta, bounds.len())?;
        let spec = Self {
            g_mat,
            bounds,
            betas,
            mode: JointMode::RiskAllocation(beta),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn confidence_ellipsoid(
        g_mat: Mat,
        bounds: Vec<f64>,
        beta: Probability,
    ) -> Result<Self, OinfError> {
        let betas = vec![beta; bounds.len()];
        let spec = Self {
            g_mat,
            bounds,
            betas,
            mode: JointMode::ConfidenceEllipsoid(beta),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The same rows under a different joint treatment.
    pub fn with_mode(&self, mode: JointMode) -> Result<Self, OinfError> {
        match mode {
            JointMode::Individual => {
                Self::individual(self.g_mat.clone(), self.bounds.clone(), self.betas.clone())
            }
            JointMode::RiskAllocation(b) => {
                Self::risk_allocation(self.g_mat.clone(), self.bounds.clone(), b)
            }
            JointMode::ConfidenceEllipsoid(b) => {
                Self::confidence_ellipsoid(self.g_mat.clone(), self.bounds.clone(), b)
            }
        }
    }

    pub fn n_g(&self) -> usize {
        self.bounds.len()
    }

    pub fn n_y(&self) -> usize {
        self.g_mat.rows()
    }

    pub fn validate(&self) -> Result<(), OinfError> {
        let n_g = self.bounds.len();
        if n_g == 0 {
            return Err(OinfError::InvalidSpec(
                "at least one constraint is required".into(),
            ));
        }
        if self.g_mat.cols() != n_g || self.betas.len() != n_g {
            return Err(OinfError::InvalidSpec(format!(
                "G has {} columns, {} bounds, {} levels",
                self.g_mat.cols(),
                n_g,
                self.betas.len()
            )));
        }
        if !self.g_mat.is_finite() || self.bounds.iter().any(|b| !b.is_finite()) {
            return Err(OinfError::InvalidSpec("non-finite constraint data".into()));
        }
        for (i, &b) in self.betas.iter().enumerate() {
            check_level(b, &format!("beta[{i}]"))?;
        }
        if let JointMode::RiskAllocation(b) | JointMode::ConfidenceEllipsoid(b) = self.mode {
            check_level(b, "joint level")?;
        }
        Ok(())
    }

    /// Column `i` of `G`.
    pub fn normal(&self, i: usize) -> Vec<f64> {
        self.g_mat.col(i)
    }

    /// Per-row multipliers `k_i` with `c_i(t) = g_i − k_i·σ_i(t)`.
    pub fn tightening_factors(&self) -> Result<Vec<f64>, OinfError> {
        match self.mode {
            JointMode::Individual | JointMode::RiskAllocation(_) => self
                .betas
                .iter()
                .map(|b| Ok(std::f64::consts::SQRT_2 * erf_inv(2.0 * b.value() - 1.0)?))
                .collect(),
            JointMode::ConfidenceEllipsoid(b) => {
                let k = chi2_inv(b.value(), self.n_y() as u32)?.sqrt();
                Ok(vec![k; self.n_g()])
            }
        }
    }
}

/// Evenly split joint level: `β_i = (β + n_g − 1)/n_g`.
pub fn risk_allocate(beta: Probability, n_g: usize) -> Result<Vec<Probability>, OinfError> {
    if n_g == 0 {
        return Err(OinfError::InvalidSpec(
            "at least one constraint is required".into(),
        ));
    }
    let bi = (beta.value() + (n_g as f64 - 1.0)) / n_g as f64;
    let p = Probability::new(bi)?;
    Ok(vec![p; n_g])
}

fn row_variance(spec: &ChanceSpec, sigma_y: &Mat, i: usize) -> f64 {
    let gi = spec.normal(i);
    sigma_y.quad_form(&gi)
}

fn tighten(bound: f64, factor: f64, variance: f64, settings: &NumericSettings) -> f64 {
    if variance < settings.zero_variance {
        bound
    } else {
        bound - factor * variance.sqrt()
    }
}

/// Tightened right-hand side `c_i` for output covariance `sigma_y`.
pub fn tightened_rhs(spec: &ChanceSpec, sigma_y: &Mat, i: usize) -> Result<f64, OinfError> {
    let factors = spec.tightening_factors()?;
    Ok(tighten(
        spec.bounds[i],
        factors[i],
        row_variance(spec, sigma_y, i),
        &NumericSettings::default(),
    ))
}

/// `c_i(t)` for `t = 0..=horizon`, indexed `[t][i]`.
pub fn tightening_table(
    m: &ClosedLoopModel,
    spec: &ChanceSpec,
    horizon: usize,
) -> Result<Vec<Vec<f64>>, OinfError> {
    spec.validate()?;
    let factors = spec.tightening_factors()?;
    let settings = m.settings();
    Ok(m.output_covariances()
        .take(horizon + 1)
        .map(|sy| {
            (0..spec.n_g())
                .map(|i| {
                    tighten(
                        spec.bounds[i],
                        factors[i],
                        row_variance(spec, &sy, i),
                        settings,
                    )
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recommendation {
    RiskAllocation,
    Equal,
    ConfidenceEllipsoid,
}

/// Comparison `Γ = k_RA − k_CE` of the two joint tightening factors.
///
/// Negative Γ means the risk-allocation rows are looser (less conservative).
pub fn gamma_compare(
    n_y: usize,
    n_g: usize,
    beta: Probability,
) -> Result<(f64, Recommendation), OinfError> {
    if n_y == 0 || n_g == 0 {
        return Err(OinfError::InvalidSpec(
            "n_y and n_g must be positive".into(),
        ));
    }
    let bi = (beta.value() + n_g as f64 - 1.0) / n_g as f64;
    let ra = std::f64::consts::SQRT_2 * erf_inv(2.0 * bi - 1.0)?;
    let ce = chi2_inv(beta.value(), n_y as u32)?.sqrt();
    let gamma = ra - ce;
    let rec = if gamma.abs() < 1e-12 {
        Recommendation::Equal
    } else if gamma < 0.0 {
        Recommendation::RiskAllocation
    } else {
        Recommendation::ConfidenceEllipsoid
    };
    Ok((gamma, rec))
}

/// Axis-aligned bounds on `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct VBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl VBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bound lengths differ");
        Self { lo, hi }
    }

    pub fn symmetric(half_width: f64, n: usize) -> Self {
        Self::new(vec![-half_width; n], vec![half_width; n])
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// A finite system of halfspaces over `z = (x_p, x_u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub rows: Vec<Halfspace>,
    pub n_xp: usize,
    pub n_xu: usize,
    pub n_v: usize,
}

impl Polyhedron {
    pub fn new(n_xp: usize, n_xu: usize, n_v: usize) -> Self {
        Self {
            rows: Vec::new(),
            n_xp,
            n_xu,
            n_v,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_xp + self.n_xu + self.n_v
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Every row holds within `a·z ≤ b + 1e-9·(1+|b|)`.
    pub fn contains(&self, z: &[f64]) -> bool {
        self.contains_tol(z, NumericSettings::default().row_tol)
    }

    pub fn contains_tol(&self, z: &[f64], tol: f64) -> bool {
        assert_eq!(z.len(), self.dim(), "point dimension");
        self.rows.iter().all(|h| h.contains(z, tol))
    }

    /// `max(a·z − b)` over rows; `−∞` without rows.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        assert_eq!(z.len(), self.dim(), "point dimension");
        crate::solver::max_residual(&self.rows, z)
    }

    /// Adds `z_index = value` as a pair of rows.
    pub fn with_fixed(&self, index: usize, value: f64) -> Self {
        let mut out = self.clone();
        let mut e = vec![0.0; self.dim()];
        e[index] = 1.0;
        out.rows.push(Halfspace::new(e.clone(), value));
        e[index] = -1.0;
        out.rows.push(Halfspace::new(e, -value));
        out
    }

    /// Rows over the trailing coordinates, padded with zeros for the leading ones.
    fn lift(&self, n_xp: usize, n_xu: usize) -> Vec<Halfspace> {
        let pad = n_xp + n_xu;
        self.rows
            .iter()
            .map(|h| {
                let mut a = vec![0.0; pad];
                a.extend_from_slice(&h.a);
                Halfspace::new(a, h.b)
            })
            .collect()
    }
}

/// The reference-admissible polyhedron: `v_box` intersected with each
/// steady-state chance row, every row pulled inward by `eps_rel` times its
/// slack at the box center.
pub fn build_tilde_omega(
    m: &ClosedLoopModel,
    spec: &ChanceSpec,
    v_box: &VBox,
    eps_rel: f64,
) -> Result<Polyhedron, OinfError> {
    spec.validate()?;
    let dims = m.dims();
    if spec.n_y() != dims.n_y {
        return Err(OinfError::InvalidSpec(format!(
            "G has {} rows, model has {} outputs",
            spec.n_y(),
            dims.n_y
        )));
    }
    if v_box.dim() != dims.n_v {
        return Err(OinfError::InvalidSpec(format!(
            "v_box has {} coordinates, expected {}",
            v_box.dim(),
            dims.n_v
        )));
    }
    if !(eps_rel > 0.0 && eps_rel < 0.5) {
        return Err(OinfError::InvalidSpec(format!(
            "eps_rel = {eps_rel} must lie in (0, 0.5)"
        )));
    }
    if v_box.lo.iter().chain(&v_box.hi).any(|x| !x.is_finite()) {
        return Err(OinfError::InvalidSpec("v_box must be bounded".into()));
    }
    if v_box.lo.iter().zip(&v_box.hi).any(|(l, h)| l > h) {
        return Err(OinfError::Infeasible);
    }
    let settings = m.settings();
    let factors = spec.tightening_factors()?;
    let sigma_inf = m.sigma_y_inf()?;
    let gain = m.steady_output_gain();
    let center = v_box.center();
    let half_diag = norm2(
        &v_box
            .lo
            .iter()
            .zip(&v_box.hi)
            .map(|(l, h)| 0.5 * (h - l))
            .collect::<Vec<_>>(),
    );

    let mut omega = Polyhedron::new(0, 0, dims.n_v);
    for j in 0..dims.n_v {
        let mut e = vec![0.0; dims.n_v];
        e[j] = 1.0;
        omega.rows.push(Halfspace::new(e.clone(), v_box.hi[j]));
        e[j] = -1.0;
        omega.rows.push(Halfspace::new(e, -v_box.lo[j]));
    }
    for i in 0..spec.n_g() {
        let gi = spec.normal(i);
        let a = gain.tr_mul_vec(&gi);
        let rhs = tighten(
            spec.bounds[i],
            factors[i],
            row_variance(spec, &sigma_inf, i),
            settings,
        );
        let an = norm2(&a);
        if an <= 1e-14 {
            if rhs <= 0.0 {
                return Err(OinfError::AssumptionViolated { row: i, slack: rhs });
            }
            continue;
        }
        let slack = rhs - dot(&a, &center);
        let margin = if slack != 0.0 {
            eps_rel * slack.abs()
        } else {
            eps_rel * an * half_diag
        };
        omega
            .rows
            .push(Halfspace::new(a, rhs - margin).normalized());
    }
    omega.rows = omega.rows.iter().map(Halfspace::normalized).collect();
    match find_feasible_point(&omega.rows, dims.n_v, settings) {
        Ok(_) => Ok(omega),
        Err(LpStatus::Infeasible) => Err(OinfError::Infeasible),
        Err(_) => Err(OinfError::SolverStalled { t: 0 }),
    }
}

/// Center and radius of the largest Euclidean ball inside the rows.
pub fn chebyshev_center(
    rows: &[Halfspace],
    n: usize,
    settings: &NumericSettings,
) -> Option<(Vec<f64>, f64)> {
    let mut aug: Vec<Halfspace> = rows
        .iter()
        .map(|h| {
            let mut a = h.a.clone();
            a.push(norm2(&h.a));
            Halfspace::new(a, h.b)
        })
        .collect();
    let mut cap = vec![0.0; n + 1];
    cap[n] = 1.0;
    aug.push(Halfspace::new(cap, 1e3));
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    match solve_lp_with(&c, &aug, None, settings) {
        LpStatus::Optimal(s) => {
            let r = s.point[n];
            let mut x = s.point;
            x.truncate(n);
            Some((x, r))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OinfOptions {
    pub v_box: VBox,
    pub eps_rel: f64,
    pub t_max: usize,
}

impl OinfOptions {
    pub fn new(v_box: VBox) -> Self {
        Self {
            v_box,
            eps_rel: 1e-3,
            t_max: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OinfResult {
    pub set: Polyhedron,
    pub t_star: usize,
    pub tilde_omega: Polyhedron,
    /// `c_i(t)` indexed `[t][i]` for every stage that was examined.
    pub tightening_table: Vec<Vec<f64>>,
    pub mode: JointMode,
    pub options: OinfOptions,
    /// A point of `tilde_omega` whose equilibrium lies deep inside the set.
    pub reference_center: Vec<f64>,
}

/// The candidate rows of stage `t`, normalized, with their raw right-hand sides.
struct StageRows {
    rows: Vec<Option<Halfspace>>,
    rhs: Vec<f64>,
}

fn stage_rows(
    spec: &ChanceSpec,
    factors: &[f64],
    state_map: &Mat,
    ref_map: &Mat,
    sigma_y: &Mat,
    t: usize,
    settings: &NumericSettings,
) -> Result<StageRows, OinfError> {
    let mut rows = Vec::with_capacity(spec.n_g());
    let mut rhs = Vec::with_capacity(spec.n_g());
    for i in 0..spec.n_g() {
        let gi = spec.normal(i);
        let mut a = state_map.tr_mul_vec(&gi);
        a.extend(ref_map.tr_mul_vec(&gi));
        let b = tighten(
            spec.bounds[i],
            factors[i],
            row_variance(spec, sigma_y, i),
            settings,
        );
        rhs.push(b);
        if norm2(&a) <= 1e-14 {
            if b < -settings.row_tol * (1.0 + b.abs()) {
                log::debug!("stage {t} row {i} is 0 ≤ {b}: empty set");
                return Err(OinfError::Infeasible);
            }
            rows.push(None);
        } else {
            rows.push(Some(Halfspace::new(a, b).normalized()));
        }
    }
    Ok(StageRows { rows, rhs })
}

/// Whether `row` is implied by `rows` within the membership tolerance.
///
/// `Ok(None)` means the LP was unbounded.
fn is_redundant(
    rows: &[Halfspace],
    row: &Halfspace,
    start: &[f64],
    settings: &NumericSettings,
    t: usize,
) -> Result<Option<bool>, OinfError> {
    match solve_lp_with(&row.a, rows, Some(start), settings) {
        LpStatus::Optimal(s) => Ok(Some(
            s.value <= row.b + settings.row_tol * (1.0 + row.b.abs()),
        )),
        LpStatus::Unbounded => Ok(None),
        LpStatus::Infeasible => Err(OinfError::Infeasible),
        LpStatus::Stalled => Err(OinfError::SolverStalled { t }),
    }
}

fn feasible_point(
    rows: &[Halfspace],
    n: usize,
    hint: &[f64],
    settings: &NumericSettings,
) -> Result<Vec<f64>, OinfError> {
    if rows.iter().all(|h| h.contains(hint, settings.feas_tol)) {
        return Ok(hint.to_vec());
    }
    match find_feasible_point(rows, n, settings) {
        Ok(z) => Ok(z),
        Err(LpStatus::Infeasible) => Err(OinfError::Infeasible),
        Err(_) => Err(OinfError::SolverStalled { t: 0 }),
    }
}

/// Builds the finitely determined inner approximation of the chance-constrained
/// maximal output admissible set.
pub fn build_oinf(
    m: &ClosedLoopModel,
    spec: &ChanceSpec,
    opts: &OinfOptions,
) -> Result<OinfResult, OinfError> {
    let dims = m.dims();
    let settings = m.settings().clone();
    let n_z = dims.n_z();
    let n_x = dims.n_x();
    let tilde_omega = build_tilde_omega(m, spec, &opts.v_box, opts.eps_rel)?;
    let factors = spec.tightening_factors()?;

    let (v_c, _) =
        chebyshev_center(&tilde_omega.rows, dims.n_v, &settings).ok_or(OinfError::Infeasible)?;
    let mut hint = m.steady_state(&v_c).0;
    hint.extend_from_slice(&v_c);

    let mut set = Polyhedron::new(dims.n_xp, dims.n_xu, dims.n_v);
    set.rows = tilde_omega.lift(dims.n_xp, dims.n_xu);
    let mut table = Vec::new();
    let mut maps = m.mean_maps();
    let mut covs = m.output_covariances();

    let (sm, rm) = maps.next().expect("infinite iterator");
    let sy = covs.next().expect("infinite iterator");
    let stage0 = stage_rows(spec, &factors, &sm, &rm, &sy, 0, &settings)?;
    table.push(stage0.rhs);
    set.rows.extend(stage0.rows.into_iter().flatten());
    let mut point = feasible_point(&set.rows, n_z, &hint, &settings)?;

    let mut t = 0usize;
    let t_star = loop {
        let (sm, rm) = maps.next().expect("infinite iterator");
        let sy = covs.next().expect("infinite iterator");
        let stage = stage_rows(spec, &factors, &sm, &rm, &sy, t + 1, &settings)?;
        table.push(stage.rhs);
        let mut added = Vec::new();
        for row in stage.rows.into_iter().flatten() {
            match is_redundant(&set.rows, &row, &point, &settings, t)? {
                Some(true) => {}
                Some(false) => added.push(row),
                None => {
                    if t >= 2 * n_x {
                        return Err(OinfError::Unbounded { t });
                    }
                    added.push(row);
                }
            }
        }
        if added.is_empty() {
            break t;
        }
        t += 1;
        if t >= opts.t_max {
            return Err(OinfError::NotFinitelyDetermined { t_max: opts.t_max });
        }
        set.rows.extend(added);
        point = feasible_point(&set.rows, n_z, &hint, &settings)?;
    };
    log::info!(
        "finitely determined at t* = {t_star} with {} rows before pruning",
        set.rows.len()
    );

    prune_redundant(&mut set, &point, &settings)?;
    Ok(OinfResult {
        set,
        t_star,
        tilde_omega,
        tightening_table: table,
        mode: spec.mode,
        options: opts.clone(),
        reference_center: v_c,
    })
}

/// Removes rows implied by the remaining ones, scanning from the first row.
fn prune_redundant(
    set: &mut Polyhedron,
    point: &[f64],
    settings: &NumericSettings,
) -> Result<(), OinfError> {
    let mut i = 0;
    while i < set.rows.len() {
        let row = set.rows.remove(i);
        match is_redundant(&set.rows, &row, point, settings, usize::MAX)? {
            Some(true) => {}
            _ => {
                set.rows.insert(i, row);
                i += 1;
            }
        }
    }
    Ok(())
}

/// Checks that stages `t* + 1 ..= t* + k` add nothing to the built set.
pub fn verify_finite_determination(
    m: &ClosedLoopModel,
    spec: &ChanceSpec,
    result: &OinfResult,
    k: usize,
) -> Result<bool, OinfError> {
    let settings = m.settings().clone();
    let factors = spec.tightening_factors()?;
    let n_z = m.dims().n_z();
    let hint = {
        let mut h = m.steady_state(&result.reference_center).0;
        h.extend_from_slice(&result.reference_center);
        h
    };
    let point = feasible_point(&result.set.rows, n_z, &hint, &settings)?;
    let maps = m.mean_maps();
    let covs = m.output_covariances();
    for (t, ((sm, rm), sy)) in maps.zip(covs).enumerate().skip(result.t_star + 1).take(k) {
        let stage = stage_rows(spec, &factors, &sm, &rm, &sy, t, &settings)?;
        for row in stage.rows.into_iter().flatten() {
            if is_redundant(&result.set.rows, &row, &point, &settings, t)? != Some(true) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Support samples of a projection onto two or three coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<usize>,
    pub directions: Vec<Vec<f64>>,
    /// `max d·z_coords` over the set for each direction.
    pub support: Vec<f64>,
    /// Optimizer of each direction LP, restricted to `coords`.
    pub points: Vec<Vec<f64>>,
    /// Convex hull of `points` (counter-clockwise in 2D; distinct points in 3D).
    pub hull: Vec<Vec<f64>>,
}

/// `n` unit vectors: evenly spaced on the circle, or a Fibonacci lattice on the sphere.
pub fn support_directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    match dim {
        2 => (0..n)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let y = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - y * y).max(0.0).sqrt();
                    let th = golden * k as f64;
                    vec![r * th.cos(), y, r * th.sin()]
                })
                .collect()
        }
        _ => panic!("projection supports 2 or 3 coordinates"),
    }
}

pub fn project(set: &Polyhedron, coords: &[usize], n_dirs: usize) -> Result<Projection, OinfError> {
    project_with(set, coords, n_dirs, &NumericSettings::default())
}

pub fn project_with(
    set: &Polyhedron,
    coords: &[usize],
    n_dirs: usize,
    settings: &NumericSettings,
) -> Result<Projection, OinfError> {
    if !(coords.len() == 2 || coords.len() == 3) || coords.iter().any(|&c| c >= set.dim()) {
        return Err(OinfError::InvalidSpec(format!(
            "bad projection coordinates {coords:?}"
        )));
    }
    let n = set.dim();
    let start = match find_feasible_point(&set.rows, n, settings) {
        Ok(z) => z,
        Err(LpStatus::Infeasible) => return Err(OinfError::Infeasible),
        Err(_) => return Err(OinfError::SolverStalled { t: 0 }),
    };
    let directions = support_directions(coords.len(), n_dirs);
    let mut support = Vec::with_capacity(n_dirs);
    let mut points = Vec::with_capacity(n_dirs);
    for d in &directions {
        let mut c = vec![0.0; n];
        for (&k, &dk) in coords.iter().zip(d) {
            c[k] = dk;
        }
        match solve_lp_with(&c, &set.rows, Some(&start), settings) {
            LpStatus::Optimal(s) => {
                support.push(s.value);
                points.push(coords.iter().map(|&k| s.point[k]).collect());
            }
            LpStatus::Unbounded => return Err(OinfError::Unbounded { t: 0 }),
            LpStatus::Infeasible => return Err(OinfError::Infeasible),
            LpStatus::Stalled => return Err(OinfError::SolverStalled { t: 0 }),
        }
    }
    let hull = if coords.len() == 2 {
        convex_hull_2d(&points)
    } else {
        dedup_points(&points)
    };
    Ok(Projection {
        coords: coords.to_vec(),
        directions,
        support,
        points,
        hull,
    })
}

fn dedup_points(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !out.iter().any(|q| {
            q.iter()
                .zip(p)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()))
        }) {
            out.push(p.clone());
        }
    }
    out
}

/// Andrew's monotone chain; counter-clockwise, no repeated endpoint.
pub fn convex_hull_2d(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts = dedup_points(points);
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &[f64], a: &[f64], b: &[f64]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<Vec<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let floor = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= floor + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 1e-15
            {
                hull.pop();
            }
            hull.push(p.clone());
        }
        hull.pop();
    }
    hull
}
