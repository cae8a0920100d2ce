//! QP with linear rows plus one ellipsoidal ball on a sub-vector.
//!
//! The ball `‖v − c‖_R ≤ ρ` is handled through its scalar multiplier `μ`: for
//! fixed `μ` the Lagrangian is again a linearly constrained QP, and `‖v(μ) − c‖_R`
//! is nonincreasing in `μ`, so a bracketing root search finds the multiplier that puts the
//! solution on the sphere.

use super::qp::{solve_qp_parts, solve_qp_with, QpProblem, QpSolution, QpStatus, QpWarmStart};
use super::{all_contain, Halfspace};
use crate::linalg::Mat;
use crate::settings::NumericSettings;

#[derive(Debug, Clone, PartialEq)]
pub struct BallConstraint {
    pub center: Vec<f64>,
    pub radius: f64,
    pub metric: Mat,
}

impl BallConstraint {
    /// `‖v − center‖_metric`.
    pub fn distance(&self, v: &[f64]) -> f64 {
        let e: Vec<f64> = v.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.metric.quad_form(&e).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallSolution {
    pub point: Vec<f64>,
    /// `½dᵀHd + fᵀd` of the original problem.
    pub value: f64,
    pub multipliers: Vec<f64>,
    /// Multiplier of the squared ball constraint; zero when the ball is inactive and
    /// infinite when the feasible set collapses onto the point closest to the center.
    pub ball_multiplier: f64,
    pub ball_active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BallStatus {
    Optimal(BallSolution),
    Infeasible,
    Stalled,
}

impl BallStatus {
    pub fn optimal(&self) -> Option<&BallSolution> {
        match self {
            BallStatus::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

pub fn solve_qp_ball(p: &QpProblem, ball: &BallConstraint, v_idx: &[usize]) -> BallStatus {
    solve_qp_ball_with(p, ball, v_idx, None, &NumericSettings::default())
}

fn gather(d: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| d[i]).collect()
}

fn from_qp(p: &QpProblem, s: QpSolution, mu: f64) -> BallSolution {
    BallSolution {
        value: p.objective(&s.point),
        point: s.point,
        multipliers: s.multipliers,
        ball_multiplier: mu,
        ball_active: mu > 0.0,
    }
}

/// The problem with `v` fixed to `center`, over the remaining coordinates.
fn pinned(
    p: &QpProblem,
    ball: &BallConstraint,
    v_idx: &[usize],
    warm: Option<&[f64]>,
    settings: &NumericSettings,
) -> BallStatus {
    let n = p.dim();
    let rest: Vec<usize> = (0..n).filter(|i| !v_idx.contains(i)).collect();
    let k = rest.len();
    let mut h = Mat::zeros(k, k);
    let mut f = vec![0.0; k];
    for (a, &i) in rest.iter().enumerate() {
        for (b, &j) in rest.iter().enumerate() {
            h[(a, b)] = p.h[(i, j)];
        }
        f[a] = p.f[i]
            + v_idx
                .iter()
                .zip(&ball.center)
                .map(|(&j, c)| p.h[(i, j)] * c)
                .sum::<f64>();
    }
    let rows: Vec<Halfspace> = p
        .rows
        .iter()
        .map(|r| {
            let shift: f64 = v_idx
                .iter()
                .zip(&ball.center)
                .map(|(&j, c)| r.a[j] * c)
                .sum();
            Halfspace::new(gather(&r.a, &rest), r.b - shift)
        })
        .collect();
    let reduced = QpProblem { h, f, rows };
    let warm_rest = warm.map(|w| gather(w, &rest));
    let status = solve_qp_with(
        &reduced,
        warm_rest.as_deref().map(|point| QpWarmStart {
            point,
            working_set: &[],
        }),
        settings,
    );
    match status {
        QpStatus::Optimal(s) => {
            let mut point = vec![0.0; n];
            for (&i, x) in rest.iter().zip(&s.point) {
                point[i] = *x;
            }
            for (&j, c) in v_idx.iter().zip(&ball.center) {
                point[j] = *c;
            }
            BallStatus::Optimal(BallSolution {
                value: p.objective(&point),
                point,
                multipliers: s.multipliers,
                ball_multiplier: 0.0,
                ball_active: true,
            })
        }
        QpStatus::Infeasible => BallStatus::Infeasible,
        QpStatus::Stalled => BallStatus::Stalled,
    }
}

/// `H` and `f` with the Lagrangian term `μ·‖v − c‖²_R` folded in.
fn shifted(
    h: &Mat,
    f: &[f64],
    ball: &BallConstraint,
    rc: &[f64],
    v_idx: &[usize],
    mu: f64,
) -> (Mat, Vec<f64>) {
    let mut h = h.clone();
    let mut f = f.to_vec();
    for (a, &i) in v_idx.iter().enumerate() {
        for (b, &j) in v_idx.iter().enumerate() {
            h[(i, j)] += 2.0 * mu * ball.metric[(a, b)];
        }
        f[i] -= 2.0 * mu * rc[a];
    }
    (h, f)
}

/// Solves `min ½dᵀHd + fᵀd` subject to the rows and `‖d[v_idx] − center‖_metric ≤ radius`.
///
/// A non-finite radius drops the ball. `warm` must satisfy the rows to be used.
pub fn solve_qp_ball_with(
    p: &QpProblem,
    ball: &BallConstraint,
    v_idx: &[usize],
    warm: Option<&[f64]>,
    settings: &NumericSettings,
) -> BallStatus {
    assert_eq!(ball.center.len(), v_idx.len(), "ball center length");
    assert_eq!(
        ball.metric.shape(),
        (v_idx.len(), v_idx.len()),
        "ball metric shape"
    );
    assert!(ball.radius >= 0.0, "negative ball radius");
    if ball.radius == 0.0 {
        return pinned(p, ball, v_idx, warm, settings);
    }
    let warm_start = warm.map(|point| QpWarmStart {
        point,
        working_set: &[],
    });
    let base = match solve_qp_with(p, warm_start, settings) {
        QpStatus::Optimal(s) => s,
        QpStatus::Infeasible => return BallStatus::Infeasible,
        QpStatus::Stalled => return BallStatus::Stalled,
    };
    let radius = ball.radius;
    let base_dist = ball.distance(&gather(&base.point, v_idx));
    if !radius.is_finite() || base_dist <= radius {
        return BallStatus::Optimal(from_qp(p, base, 0.0));
    }

    // Closest point of the linear rows to the center; decides feasibility.
    let n = p.dim();
    let rc = ball.metric.mul_vec(&ball.center);
    let (cert_h, cert_f) = shifted(&Mat::zeros(n, n), &vec![0.0; n], ball, &rc, v_idx, 1.0);
    let cert = match solve_qp_parts(
        &cert_h,
        &cert_f,
        &p.rows,
        Some(QpWarmStart {
            point: &base.point,
            working_set: &base.working_set,
        }),
        settings,
    ) {
        QpStatus::Optimal(s) => s,
        QpStatus::Infeasible => return BallStatus::Infeasible,
        QpStatus::Stalled => return BallStatus::Stalled,
    };
    let closest = ball.distance(&gather(&cert.point, v_idx));
    if closest > radius + settings.ball_tol {
        return BallStatus::Infeasible;
    }
    let sliver = |cert: QpSolution| {
        let mut sol = from_qp(p, cert, f64::INFINITY);
        sol.multipliers.iter_mut().for_each(|m| *m = 0.0);
        BallStatus::Optimal(sol)
    };
    if closest >= radius - settings.ball_tol {
        // The feasible set is a sliver around the certificate point.
        return sliver(cert);
    }

    let solve_at = |mu: f64, from: &QpSolution| -> Option<(QpSolution, f64)> {
        let (h, f) = shifted(&p.h, &p.f, ball, &rc, v_idx, mu);
        let s = solve_qp_parts(
            &h,
            &f,
            &p.rows,
            Some(QpWarmStart {
                point: &from.point,
                working_set: &from.working_set,
            }),
            settings,
        )
        .into_optimal()?;
        let dist = ball.distance(&gather(&s.point, v_idx));
        Some((s, dist))
    };
    // `1/dist − 1/radius` is nondecreasing in μ and close to linear for a
    // quadratic objective, which makes it a good target for the secant step.
    let psi = |dist: f64| 1.0 / dist.max(1e-300) - 1.0 / radius;

    let scale = (1.0 + p.h.max_abs()) / (1.0 + ball.metric.max_abs());
    let (mut lo, mut psi_lo) = (0.0, psi(base_dist));
    let mut hi = 1e-6 * scale;
    let mut last = base;
    let mut bracket: Option<(f64, f64, QpSolution, f64)> = None;
    for _ in 0..120 {
        let Some((s, dist)) = solve_at(hi, &last) else {
            return BallStatus::Stalled;
        };
        if dist <= radius {
            bracket = Some((hi, psi(dist), s, dist));
            break;
        }
        lo = hi;
        psi_lo = psi(dist);
        last = s;
        hi *= 10.0;
    }
    let Some((mut mu_hi, mut psi_hi, mut sol_hi, mut dist_hi)) = bracket else {
        return sliver(cert);
    };

    // Illinois iteration: the inside end `mu_hi` always holds a feasible solution.
    let mut side = 0i8;
    for _ in 0..200 {
        if radius - dist_hi <= settings.ball_tol || mu_hi - lo <= 1e-15 * mu_hi {
            break;
        }
        let mut mu = mu_hi - psi_hi * (mu_hi - lo) / (psi_hi - psi_lo);
        let width = mu_hi - lo;
        if !mu.is_finite() || mu <= lo + 1e-3 * width || mu >= mu_hi - 1e-3 * width {
            mu = 0.5 * (lo + mu_hi);
        }
        let Some((s, dist)) = solve_at(mu, &sol_hi) else {
            return BallStatus::Stalled;
        };
        let value = psi(dist);
        if dist <= radius {
            (mu_hi, psi_hi, sol_hi, dist_hi) = (mu, value, s, dist);
            if side == 1 {
                psi_lo *= 0.5;
            }
            side = 1;
        } else {
            (lo, psi_lo) = (mu, value);
            if side == -1 {
                psi_hi *= 0.5;
            }
            side = -1;
        }
    }
    debug_assert!(all_contain(&p.rows, &sol_hi.point, 1e-8));
    BallStatus::Optimal(from_qp(p, sol_hi, mu_hi))
}

/// Stationarity residual `‖Hd + f + Σλa + 2μ R (v − c)‖∞` of a ball solution.
pub fn ball_stationarity(
    p: &QpProblem,
    ball: &BallConstraint,
    v_idx: &[usize],
    s: &BallSolution,
) -> f64 {
    let mut g = p.h.mul_vec(&s.point);
    for (gi, fi) in g.iter_mut().zip(&p.f) {
        *gi += fi;
    }
    for (r, &l) in p.rows.iter().zip(&s.multipliers) {
        for (gi, ai) in g.iter_mut().zip(&r.a) {
            *gi += l * ai;
        }
    }
    if s.ball_multiplier.is_finite() && s.ball_multiplier > 0.0 {
        let e: Vec<f64> = gather(&s.point, v_idx)
            .iter()
            .zip(&ball.center)
            .map(|(a, b)| a - b)
            .collect();
        let re = ball.metric.mul_vec(&e);
        for (k, &i) in v_idx.iter().enumerate() {
            g[i] += 2.0 * s.ball_multiplier * re[k];
        }
    }
    g.iter().fold(0.0, |a, x| a.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::super::solve_qp;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn scalar_ball(radius: f64) -> BallConstraint {
        BallConstraint {
            center: vec![0.0],
            radius,
            metric: Mat::scalar(1.0),
        }
    }

    #[test]
    fn projection_onto_interval() {
        // min (v − 2)² s.t. |v| ≤ 1.
        let p = QpProblem {
            h: Mat::scalar(2.0),
            f: vec![-4.0],
            rows: vec![],
        };
        let s = solve_qp_ball(&p, &scalar_ball(1.0), &[0]);
        let s = s.optimal().unwrap();
        assert!((s.point[0] - 1.0).abs() <= 1e-8);
        assert!(s.point[0] <= 1.0);
        assert!(s.ball_active);
    }

    #[test]
    fn zero_radius_pins_v() {
        // d = (x, v); min (x − v)² + x² with v pinned to 0.7.
        let p = QpProblem {
            h: Mat::from_rows(&[[4.0, -2.0], [-2.0, 2.0]]),
            f: vec![0.0, 0.0],
            rows: vec![Halfspace::new(vec![1.0, 0.0], 10.0)],
        };
        let ball = BallConstraint {
            center: vec![0.7],
            radius: 0.0,
            metric: Mat::scalar(1e4),
        };
        let s = solve_qp_ball(&p, &ball, &[1]);
        let s = s.optimal().unwrap();
        assert_eq!(s.point[1], 0.7);
        assert!((s.point[0] - 0.35).abs() < 1e-12);
    }

    #[test]
    fn inactive_ball_matches_plain_qp() {
        let p = QpProblem {
            h: Mat::from_rows(&[[2.0, 0.5], [0.5, 1.0]]),
            f: vec![-1.0, -0.2],
            rows: vec![Halfspace::new(vec![1.0, 1.0], 0.3)],
        };
        let plain = solve_qp(&p).into_optimal().unwrap();
        let s = solve_qp_ball(&p, &scalar_ball(10.0), &[1]);
        let s = s.optimal().unwrap();
        assert_eq!(s.point, plain.point);
        assert!(!s.ball_active);
        let inf = solve_qp_ball(&p, &scalar_ball(f64::INFINITY), &[1]);
        assert_eq!(inf.optimal().unwrap().point, plain.point);
    }

    #[test]
    fn rows_and_ball_disjoint() {
        let p = QpProblem {
            h: Mat::scalar(2.0),
            f: vec![0.0],
            rows: vec![Halfspace::new(vec![-1.0], -2.0)],
        };
        assert_eq!(
            solve_qp_ball(&p, &scalar_ball(1.0), &[0]),
            BallStatus::Infeasible
        );
    }

    fn arb_instance() -> impl Strategy<Value = (QpProblem, BallConstraint, u64)> {
        (
            prop::collection::vec(-1.0..1.0f64, 9),
            prop::collection::vec(-3.0..3.0f64, 3),
            prop::collection::vec((prop::collection::vec(-1.0..1.0f64, 3), 0.2..2.0f64), 4),
            0.05..1.0f64,
            any::<u64>(),
        )
            .prop_map(|(l, f, rows, radius, seed)| {
                let l = Mat::from_vec(3, 3, l);
                let h = &l.matmul(&l.transpose()) + &Mat::identity(3).scale(0.05);
                let p = QpProblem {
                    h,
                    f,
                    rows: rows
                        .into_iter()
                        .map(|(a, b)| Halfspace::new(a, b))
                        .collect(),
                };
                let ball = BallConstraint {
                    center: vec![0.0, 0.0],
                    radius,
                    metric: Mat::from_rows(&[[2.0, 0.3], [0.3, 1.0]]),
                };
                (p, ball, seed)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sampling_never_beats_solution((p, ball, seed) in arb_instance()) {
            // Origin satisfies every row (b > 0) and sits at the ball center.
            let v_idx = [1, 2];
            let s = solve_qp_ball(&p, &ball, &v_idx);
            let s = s.optimal().unwrap();
            prop_assert!(all_contain(&p.rows, &s.point, 1e-9));
            prop_assert!(ball.distance(&gather(&s.point, &v_idx)) <= ball.radius + 1e-8);
            prop_assert!(ball_stationarity(&p, &ball, &v_idx, s) <= 1e-6 * (1.0 + s.ball_multiplier));
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..2000 {
                let d: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
                if all_contain(&p.rows, &d, 0.0) && ball.distance(&gather(&d, &v_idx)) <= ball.radius {
                    prop_assert!(p.objective(&d) >= s.value - 1e-6);
                }
            }
        }
    }
}
