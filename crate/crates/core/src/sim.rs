//! Closed-loop simulation with Gaussian disturbances, with or without the governor.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::governor::{
    step, Algorithm, Branch, GovernorConfig, GovernorError, GovernorState, StepDiag,
};
use crate::linalg::{cholesky, psd_factor, Mat};
use crate::model::ClosedLoopModel;
use crate::oinf::ChanceSpec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Governor(#[from] GovernorError),
    #[error("invalid reference profile: {0}")]
    Profile(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Seeded ChaCha8 stream producing standard normals by Box–Muller.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Independent lane `lane` of base seed `seed`.
    pub fn lane(seed: u64, lane: u64) -> Self {
        Self::new(seed.wrapping_add(lane))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 ∈ (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * th.sin());
        r * th.cos()
    }
}

/// `L` with `L Lᵀ = W`: Cholesky, retried with `W + 1e-14·I`, then a PSD factor.
/// A zero `W` gives a zero factor.
pub fn gaussian_factor(w: &Mat) -> Mat {
    let n = w.rows();
    if w.max_abs() == 0.0 {
        return Mat::zeros(n, n);
    }
    if let Ok(l) = cholesky(w) {
        return l;
    }
    if let Ok(l) = cholesky(&(w + &Mat::identity(n).scale(1e-14))) {
        return l;
    }
    psd_factor(w, 1e-12).unwrap_or_else(|_| Mat::zeros(n, n))
}

/// One draw of `N(0, L Lᵀ)`.
pub fn sample_with_factor(l: &Mat, rng: &mut RngStream) -> Vec<f64> {
    let z: Vec<f64> = (0..l.cols()).map(|_| rng.standard_normal()).collect();
    l.mul_vec(&z)
}

pub fn sample_gaussian(w: &Mat, rng: &mut RngStream) -> Vec<f64> {
    sample_with_factor(&gaussian_factor(w), rng)
}

/// Piecewise-constant reference `r(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceProfile {
    segments: Vec<(usize, Vec<f64>)>,
}

impl ReferenceProfile {
    /// Segments as `(start_step, value)`; the first must start at step 0.
    pub fn new(segments: Vec<(usize, Vec<f64>)>) -> Result<Self, SimError> {
        let Some(first) = segments.first() else {
            return Err(SimError::Profile("no segments".into()));
        };
        if first.0 != 0 {
            return Err(SimError::Profile(
                "first segment must start at step 0".into(),
            ));
        }
        let n = first.1.len();
        for w in segments.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(SimError::Profile(format!(
                    "segment starts {} and {} are not increasing",
                    w[0].0, w[1].0
                )));
            }
        }
        if segments
            .iter()
            .any(|(_, v)| v.len() != n || v.iter().any(|x| !x.is_finite()))
        {
            return Err(SimError::Profile(
                "segment values must be finite and equally sized".into(),
            ));
        }
        Ok(Self { segments })
    }

    pub fn constant(value: Vec<f64>) -> Self {
        Self {
            segments: vec![(0, value)],
        }
    }

    pub fn segments(&self) -> &[(usize, Vec<f64>)] {
        &self.segments
    }

    pub fn dim(&self) -> usize {
        self.segments[0].1.len()
    }

    pub fn at(&self, t: usize) -> &[f64] {
        let k = self.segments.partition_point(|(s, _)| *s <= t);
        &self.segments[k - 1].1
    }

    /// The value held from the last segment onward.
    pub fn final_value(&self) -> &[f64] {
        &self.segments.last().expect("nonempty").1
    }

    pub fn final_start(&self) -> usize {
        self.segments.last().expect("nonempty").0
    }
}

/// Everything recorded at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub x_p: Vec<f64>,
    pub x_u: Vec<f64>,
    pub v: Vec<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    /// `None` without the governor.
    pub diag: Option<StepDiag>,
    pub violations: Vec<bool>,
}

impl TraceStep {
    pub fn branch(&self) -> Option<Branch> {
        self.diag.as_ref().map(|d| d.branch)
    }

    pub fn cost(&self) -> f64 {
        self.diag.as_ref().map_or(f64::NAN, |d| d.cost)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub steps: Vec<TraceStep>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Shared simulation data for one model.
pub struct SimSetup<'a> {
    pub model: &'a ClosedLoopModel,
    pub governor: Option<&'a GovernorConfig>,
    pub constraints: &'a ChanceSpec,
    pub profile: &'a ReferenceProfile,
    /// `(x_p(0), x_u(0))`.
    pub x0: (&'a [f64], &'a [f64]),
    pub steps: usize,
}

impl SimSetup<'_> {
    fn check(&self) -> Result<(), SimError> {
        let d = self.model.dims();
        if self.x0.0.len() != d.n_xp || self.x0.1.len() != d.n_xu {
            return Err(SimError::Dimension("initial state".into()));
        }
        if self.profile.dim() != d.n_v {
            return Err(SimError::Dimension(format!(
                "profile has {} channels, expected {}",
                self.profile.dim(),
                d.n_v
            )));
        }
        if self.constraints.n_y() != d.n_y {
            return Err(SimError::Dimension(
                "constraint rows do not match outputs".into(),
            ));
        }
        Ok(())
    }
}

/// Runs one lane, calling `visit(t, step)` after each step.
fn run_lane(
    setup: &SimSetup,
    w_factor: &Mat,
    rng: &mut RngStream,
    mut visit: impl FnMut(usize, TraceStep),
) -> Result<(), SimError> {
    let m = setup.model;
    let plant = m.plant();
    let ctrl = m.controller();
    let spec = setup.constraints;
    let g_t = spec.g_mat.transpose();
    let mut x_p = setup.x0.0.to_vec();
    let mut x_u = setup.x0.1.to_vec();
    let mut gov = match setup.governor {
        Some(cfg) => Some(GovernorState::init(cfg, &x_p, &x_u, setup.profile.at(0))?),
        None => None,
    };
    for t in 0..setup.steps {
        let r = setup.profile.at(t).to_vec();
        let (xu_t, v, diag) = match (setup.governor, gov.as_mut()) {
            (Some(cfg), Some(st)) => {
                let (xu, v, d) = step(m, cfg, st, &x_p, &r);
                (xu, v, Some(d))
            }
            _ => (x_u.clone(), r.clone(), None),
        };
        let mut u = ctrl.k_p.mul_vec(&x_p);
        for (ui, (a, b)) in u.iter_mut().zip(
            ctrl.k_u
                .mul_vec(&xu_t)
                .into_iter()
                .zip(ctrl.b_v.mul_vec(&v)),
        ) {
            *ui += a + b;
        }
        let w = sample_with_factor(w_factor, rng);
        let mut y = plant.c.mul_vec(&x_p);
        for (yi, (a, b)) in y
            .iter_mut()
            .zip(plant.d_u.mul_vec(&u).into_iter().zip(plant.d_w.mul_vec(&w)))
        {
            *yi += a + b;
        }
        let gy = g_t.mul_vec(&y);
        let violations = gy.iter().zip(&spec.bounds).map(|(a, b)| a > b).collect();

        let mut x_next = plant.a.mul_vec(&x_p);
        for (xi, (a, b)) in x_next
            .iter_mut()
            .zip(plant.b_u.mul_vec(&u).into_iter().zip(plant.b_w.mul_vec(&w)))
        {
            *xi += a + b;
        }
        let mut xu_next = ctrl.a_p.mul_vec(&x_p);
        for (xi, (a, b)) in xu_next.iter_mut().zip(
            ctrl.a_u
                .mul_vec(&xu_t)
                .into_iter()
                .zip(ctrl.d_v.mul_vec(&v)),
        ) {
            *xi += a + b;
        }
        let rec = TraceStep {
            x_p: std::mem::replace(&mut x_p, x_next),
            x_u: xu_t,
            v,
            r,
            u,
            y,
            diag,
            violations,
        };
        x_u = xu_next;
        visit(t, rec);
    }
    Ok(())
}

/// Simulates `setup.steps` steps; one disturbance draw per step feeds both state and output.
pub fn run_closed_loop(
    setup: &SimSetup,
    dt: f64,
    rng: &mut RngStream,
) -> Result<SimTrace, SimError> {
    setup.check()?;
    let factor = gaussian_factor(setup.model.w());
    let mut steps = Vec::with_capacity(setup.steps);
    run_lane(setup, &factor, rng, |_, s| steps.push(s))?;
    Ok(SimTrace { dt, steps })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub n_runs: usize,
    pub base_seed: u64,
    /// Steps after convergence skipped before averaging the squared deviation.
    pub burn_in: usize,
    /// Threads for the lanes; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            n_runs: 1000,
            base_seed: 0,
            burn_in: 100,
            threads: None,
        }
    }
}

/// Per-lane results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// First step from which `v(t) = r_s` holds to the end.
    pub t_f: Option<usize>,
    /// Steps violating each constraint.
    pub violation_steps: Vec<u32>,
    /// Mean of `‖x̄(t) − x̄*(r_s)‖²_P` over `t ≥ t_f + burn_in`, if any such step exists.
    pub deviation_mean: Option<f64>,
    pub deviation_samples: usize,
    pub branch_counts: [usize; 3],
    /// Optimized `Alg1` steps breaking `‖v − r‖_R ≤ max(‖v_prev − r‖_R − δ, 0) + 1e-8`.
    pub contraction_failures: usize,
    /// Optimized steps whose decision lies outside the set beyond the membership band.
    pub admissibility_failures: usize,
    /// Fallback steps that did not reuse the predicted pair.
    pub fallback_mismatches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub n_runs: usize,
    pub steps: usize,
    pub base_seed: u64,
    /// `[t][i]` count of runs with `G_iᵀ y(t) > g_i`.
    pub violation_counts: Vec<Vec<u32>>,
    pub runs: Vec<RunSummary>,
}

impl McReport {
    pub fn frequency(&self, t: usize, i: usize) -> f64 {
        self.violation_counts[t][i] as f64 / self.n_runs as f64
    }

    /// `(max frequency, t, i)`.
    pub fn max_frequency(&self) -> (f64, usize, usize) {
        let mut best = (0.0, 0, 0);
        for (t, row) in self.violation_counts.iter().enumerate() {
            for (i, &c) in row.iter().enumerate() {
                let f = c as f64 / self.n_runs as f64;
                if f > best.0 {
                    best = (f, t, i);
                }
            }
        }
        best
    }

    pub fn converged_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.t_f.is_some()).count()
    }

    /// Mean and standard error over runs of the per-run post-convergence deviation.
    pub fn deviation_stats(&self) -> Option<(f64, f64)> {
        let xs: Vec<f64> = self.runs.iter().filter_map(|r| r.deviation_mean).collect();
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some((mean, (var / n).sqrt()))
    }

    /// `t_f` quantiles over converged runs, `q ∈ [0, 1]`.
    pub fn t_f_quantile(&self, q: f64) -> Option<usize> {
        let mut ts: Vec<usize> = self.runs.iter().filter_map(|r| r.t_f).collect();
        if ts.is_empty() {
            return None;
        }
        ts.sort_unstable();
        let k = ((ts.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
        Some(ts[k])
    }
}

fn same(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

fn summarize_lane(
    setup: &SimSetup,
    factor: &Mat,
    seed: u64,
    lane: u64,
    burn_in: usize,
) -> Result<(Vec<bool>, RunSummary), SimError> {
    let m = setup.model;
    let n_g = setup.constraints.n_g();
    let r_s = setup.profile.final_value().to_vec();
    let (x_star, _) = m.steady_state(&r_s);
    let p = setup.governor.map(|c| c.p.clone());
    let metric = setup.governor.map(|c| c.r.clone());
    let delta = setup.governor.map_or(0.0, |c| c.delta);
    let alg1 = setup
        .governor
        .is_some_and(|c| c.algorithm == Algorithm::Alg1);

    let mut rng = RngStream::lane(seed, lane);
    let mut viol = Vec::with_capacity(setup.steps * n_g);
    let mut violation_steps = vec![0u32; n_g];
    let mut deviations = Vec::with_capacity(setup.steps);
    let mut converged_at = Some(0usize);
    let mut branch_counts = [0usize; 3];
    let mut contraction_failures = 0;
    let mut admissibility_failures = 0;
    let mut fallback_mismatches = 0;
    let mut prev: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let rnorm = |v: &[f64], r: &[f64]| {
        let e: Vec<f64> = v.iter().zip(r).map(|(a, b)| a - b).collect();
        metric
            .as_ref()
            .map_or(0.0, |mm| mm.quad_form(&e).max(0.0).sqrt())
    };

    run_lane(setup, factor, &mut rng, |t, s| {
        for (c, &b) in violation_steps.iter_mut().zip(&s.violations) {
            *c += b as u32;
        }
        if !same(&s.v, &r_s) {
            converged_at = None;
        } else if converged_at.is_none() {
            converged_at = Some(t);
        }
        if let Some(p) = &p {
            let e: Vec<f64> = s
                .x_p
                .iter()
                .chain(&s.x_u)
                .zip(&x_star)
                .map(|(a, b)| a - b)
                .collect();
            deviations.push(p.quad_form(&e));
        }
        if let Some(d) = &s.diag {
            let k = match d.branch {
                Branch::Optimized => 0,
                Branch::CommandAccepted => 1,
                Branch::Fallback => 2,
            };
            branch_counts[k] += 1;
            if let Some((xp_prev, xu_prev, v_prev)) = &prev {
                if d.branch == Branch::Optimized && alg1 {
                    let bound = (rnorm(v_prev, &s.r) - delta).max(0.0) + 1e-8;
                    if rnorm(&s.v, &s.r) > bound {
                        contraction_failures += 1;
                    }
                }
                if d.branch == Branch::Fallback {
                    let c = m.controller();
                    let mut xb = c.a_p.mul_vec(xp_prev);
                    for (xi, (a, b)) in xb.iter_mut().zip(
                        c.a_u
                            .mul_vec(xu_prev)
                            .into_iter()
                            .zip(c.d_v.mul_vec(v_prev)),
                    ) {
                        *xi += a + b;
                    }
                    if !same(&xb, &s.x_u) || !same(v_prev, &s.v) {
                        fallback_mismatches += 1;
                    }
                }
            }
            if d.branch != Branch::Fallback && d.violation > 1e-8 {
                admissibility_failures += 1;
            }
        }
        prev = Some((s.x_p.clone(), s.x_u.clone(), s.v.clone()));
        viol.extend_from_slice(&s.violations);
    })?;

    let t_f = converged_at;
    let (deviation_mean, deviation_samples) = match t_f {
        Some(tf) if tf + burn_in < deviations.len() => {
            let tail = &deviations[tf + burn_in..];
            (
                Some(tail.iter().sum::<f64>() / tail.len() as f64),
                tail.len(),
            )
        }
        _ => (None, 0),
    };
    Ok((
        viol,
        RunSummary {
            t_f,
            violation_steps,
            deviation_mean,
            deviation_samples,
            branch_counts,
            contraction_failures,
            admissibility_failures,
            fallback_mismatches,
        },
    ))
}

/// Independent seeded lanes; lane `k` uses seed `base_seed + k`, so results do not
/// depend on scheduling.
pub fn monte_carlo(setup: &SimSetup, opts: &McOptions) -> Result<McReport, SimError> {
    setup.check()?;
    if opts.n_runs == 0 {
        return Err(SimError::Profile("n_runs must be at least 1".into()));
    }
    let factor = gaussian_factor(setup.model.w());
    let run = || -> Result<Vec<(Vec<bool>, RunSummary)>, SimError> {
        (0..opts.n_runs as u64)
            .into_par_iter()
            .map(|k| summarize_lane(setup, &factor, opts.base_seed, k, opts.burn_in))
            .collect()
    };
    let lanes = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SimError::Profile(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let n_g = setup.constraints.n_g();
    let mut counts = vec![vec![0u32; n_g]; setup.steps];
    let mut runs = Vec::with_capacity(lanes.len());
    for (viol, summary) in lanes {
        for (row, bits) in counts.iter_mut().zip(viol.chunks(n_g)) {
            for (c, &b) in row.iter_mut().zip(bits) {
                *c += b as u32;
            }
        }
        runs.push(summary);
    }
    Ok(McReport {
        n_runs: opts.n_runs,
        steps: setup.steps,
        base_seed: opts.base_seed,
        violation_counts: counts,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aircraft::integrator_desk;
    use crate::model::assemble;
    use crate::oinf::build_oinf;

    fn quiet_model() -> (crate::aircraft::ExampleBundle, ClosedLoopModel) {
        let b = integrator_desk();
        let m = assemble(b.plant.clone(), b.controller.clone(), Mat::zeros(1, 1)).unwrap();
        (b, m)
    }

    fn sample_cov(w: &Mat, n: usize, seed: u64) -> Mat {
        let l = gaussian_factor(w);
        let d = w.rows();
        let mut rng = RngStream::new(seed);
        let mut acc = Mat::zeros(d, d);
        let mut mean = vec![0.0; d];
        for _ in 0..n {
            let x = sample_with_factor(&l, &mut rng);
            for i in 0..d {
                mean[i] += x[i];
                for j in 0..d {
                    acc[(i, j)] += x[i] * x[j];
                }
            }
        }
        let nf = n as f64;
        for i in 0..d {
            for j in 0..d {
                acc[(i, j)] = acc[(i, j)] / nf - mean[i] * mean[j] / (nf * nf);
            }
        }
        acc
    }

    #[test]
    fn profile_lookup_and_validation() {
        let p =
            ReferenceProfile::new(vec![(0, vec![0.0]), (5, vec![1.0]), (9, vec![-1.0])]).unwrap();
        assert_eq!(p.at(0), &[0.0]);
        assert_eq!(p.at(4), &[0.0]);
        assert_eq!(p.at(5), &[1.0]);
        assert_eq!(p.at(1000), &[-1.0]);
        assert_eq!(p.final_start(), 9);
        assert!(ReferenceProfile::new(vec![]).is_err());
        assert!(ReferenceProfile::new(vec![(1, vec![0.0])]).is_err());
        assert!(ReferenceProfile::new(vec![(0, vec![0.0]), (0, vec![1.0])]).is_err());
        assert!(ReferenceProfile::new(vec![(0, vec![0.0]), (3, vec![1.0, 2.0])]).is_err());
        assert!(ReferenceProfile::new(vec![(0, vec![f64::NAN])]).is_err());
    }

    #[test]
    fn zero_noise_zero_start_stays_at_rest() {
        let (b, m) = quiet_model();
        let profile = ReferenceProfile::constant(vec![0.0]);
        let setup = SimSetup {
            model: &m,
            governor: None,
            constraints: &b.spec,
            profile: &profile,
            x0: (&[0.0], &[0.0]),
            steps: 50,
        };
        let tr = run_closed_loop(&setup, 1.0, &mut RngStream::new(9)).unwrap();
        assert_eq!(tr.len(), 50);
        for s in &tr.steps {
            assert!(s
                .x_p
                .iter()
                .chain(&s.x_u)
                .chain(&s.u)
                .chain(&s.y)
                .all(|&x| x == 0.0));
            assert!(s.violations.iter().all(|&v| !v));
        }
    }

    #[test]
    fn zero_noise_matches_stacked_recursion() {
        let (b, m) = quiet_model();
        let setup = SimSetup {
            model: &m,
            governor: None,
            constraints: &b.spec,
            profile: &b.profile,
            x0: (&[0.2], &[-0.1]),
            steps: 120,
        };
        let tr = run_closed_loop(&setup, 1.0, &mut RngStream::new(1)).unwrap();
        let mut z = vec![0.2, -0.1];
        for (t, s) in tr.steps.iter().enumerate() {
            let v = b.profile.at(t);
            let y = {
                let mut y = m.c_bar().mul_vec(&z);
                for (yi, d) in y.iter_mut().zip(m.dv_bar().mul_vec(v)) {
                    *yi += d;
                }
                y
            };
            assert!(
                (s.x_p[0] - z[0]).abs() < 1e-9 && (s.x_u[0] - z[1]).abs() < 1e-9,
                "t = {t}"
            );
            for (a, e) in s.y.iter().zip(&y) {
                assert!((a - e).abs() < 1e-9, "t = {t}");
            }
            z = m.step_mean(&z, v);
        }
    }

    #[test]
    fn identity_samples_have_unit_covariance() {
        let c = sample_cov(&Mat::identity(2), 1_000_000, 11);
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((c[(i, j)] - e).abs() < 0.01, "{i},{j}: {}", c[(i, j)]);
            }
        }
    }

    #[test]
    fn diagonal_samples_match_each_axis() {
        let w = Mat::from_diag(&[1e-2, 1e-4]);
        let c = sample_cov(&w, 100_000, 12);
        for i in 0..2 {
            assert!(
                (c[(i, i)] / w[(i, i)] - 1.0).abs() < 0.05,
                "axis {i}: {}",
                c[(i, i)]
            );
        }
    }

    #[test]
    fn singular_covariance_has_factor() {
        let w = Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let l = gaussian_factor(&w);
        let llt = l.matmul(&l.transpose());
        assert!((&llt - &w).max_abs() < 1e-6);
        assert_eq!(gaussian_factor(&Mat::zeros(2, 2)).max_abs(), 0.0);
    }

    #[test]
    fn lanes_are_reproducible_and_distinct() {
        let mut a = RngStream::lane(40, 2);
        let mut b = RngStream::new(42);
        let mut c = RngStream::lane(40, 3);
        let xa: Vec<f64> = (0..10).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..10).map(|_| b.standard_normal()).collect();
        let xc: Vec<f64> = (0..10).map(|_| c.standard_normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn governed_and_open_runs_share_disturbances() {
        let b = integrator_desk();
        let m = b.model().unwrap();
        let res = build_oinf(&m, &b.spec, &b.oinf_options()).unwrap();
        let cfg =
            GovernorConfig::new(&m, b.q.clone(), b.r.clone(), b.delta, b.algorithm, res).unwrap();
        let run = |gov: Option<&GovernorConfig>| {
            let setup = SimSetup {
                model: &m,
                governor: gov,
                constraints: &b.spec,
                profile: &b.profile,
                x0: (&[0.0], &[0.0]),
                steps: 60,
            };
            run_closed_loop(&setup, 1.0, &mut RngStream::new(5)).unwrap()
        };
        let disturbances = |tr: &SimTrace| -> Vec<f64> {
            tr.steps
                .windows(2)
                .map(|s| s[1].x_p[0] - 0.8 * s[0].x_p[0] - s[0].u[0])
                .collect()
        };
        let (on, off) = (run(Some(&cfg)), run(None));
        assert!(on.steps.iter().all(|s| s.diag.is_some()));
        assert!(off.steps.iter().all(|s| s.diag.is_none()));
        for (a, b) in disturbances(&on).iter().zip(disturbances(&off)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(run(Some(&cfg)), on);
    }

    #[test]
    fn monte_carlo_independent_of_thread_count() {
        let b = integrator_desk();
        let m = b.model().unwrap();
        let res = build_oinf(&m, &b.spec, &b.oinf_options()).unwrap();
        let cfg =
            GovernorConfig::new(&m, b.q.clone(), b.r.clone(), b.delta, b.algorithm, res).unwrap();
        let setup = SimSetup {
            model: &m,
            governor: Some(&cfg),
            constraints: &b.spec,
            profile: &b.profile,
            x0: (&[0.0], &[0.0]),
            steps: 150,
        };
        let opts = |threads| McOptions {
            n_runs: 12,
            base_seed: 77,
            burn_in: 10,
            threads: Some(threads),
        };
        let one = monte_carlo(&setup, &opts(1)).unwrap();
        let two = monte_carlo(&setup, &opts(3)).unwrap();
        assert_eq!(one, two);
        for i in 0..b.spec.n_g() {
            let by_time: u32 = one.violation_counts.iter().map(|row| row[i]).sum();
            let by_run: u32 = one.runs.iter().map(|r| r.violation_steps[i]).sum();
            assert_eq!(by_time, by_run);
        }
        assert_eq!(one.converged_runs(), 12);
        assert!(one.runs.iter().all(|r| r.contraction_failures == 0
            && r.fallback_mismatches == 0
            && r.admissibility_failures == 0));
        assert!(one.deviation_stats().is_some());
        let zero = McOptions {
            n_runs: 0,
            ..opts(1)
        };
        assert!(monte_carlo(&setup, &zero).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (b, m) = quiet_model();
        let setup = SimSetup {
            model: &m,
            governor: None,
            constraints: &b.spec,
            profile: &ReferenceProfile::constant(vec![0.0, 0.0]),
            x0: (&[0.0], &[0.0]),
            steps: 5,
        };
        assert!(matches!(
            run_closed_loop(&setup, 1.0, &mut RngStream::new(0)),
            Err(SimError::Dimension(_))
        ));
    }
}
