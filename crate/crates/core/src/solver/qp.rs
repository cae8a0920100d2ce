//! Primal active-set method for `min ½dᵀHd + fᵀd s.t. a_i·d ≤ b_i`.

use super::lp::find_feasible_point;
use super::{all_contain, Halfspace, LpStatus};
use crate::linalg::{dot, min_ldl_pivot, Lu, Mat};
use crate::settings::NumericSettings;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: Mat,
    pub f: Vec<f64>,
    pub rows: Vec<Halfspace>,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, d: &[f64]) -> f64 {
        0.5 * self.h.quad_form(d) + dot(&self.f, d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub point: Vec<f64>,
    pub value: f64,
    /// One multiplier per row; `Hd + f + Σ λ_i a_i = 0` at the optimum.
    pub multipliers: Vec<f64>,
    /// Rows in the final working set, in insertion order.
    pub working_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpStatus {
    Optimal(QpSolution),
    Infeasible,
    /// Iteration cap reached or a singular KKT system.
    Stalled,
}

impl QpStatus {
    pub fn optimal(&self) -> Option<&QpSolution> {
        match self {
            QpStatus::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn into_optimal(self) -> Option<QpSolution> {
        match self {
            QpStatus::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

/// A feasible starting point and, optionally, rows known to be active there.
#[derive(Debug, Clone, Copy)]
pub struct QpWarmStart<'a> {
    pub point: &'a [f64],
    pub working_set: &'a [usize],
}

pub fn solve_qp(p: &QpProblem) -> QpStatus {
    solve_qp_with(p, None, &NumericSettings::default())
}

pub fn solve_qp_with(
    p: &QpProblem,
    warm: Option<QpWarmStart>,
    settings: &NumericSettings,
) -> QpStatus {
    solve_qp_parts(&p.h, &p.f, &p.rows, warm, settings)
}

/// [`solve_qp_with`] on borrowed problem data.
pub(crate) fn solve_qp_parts(
    h: &Mat,
    f: &[f64],
    rows: &[Halfspace],
    warm: Option<QpWarmStart>,
    settings: &NumericSettings,
) -> QpStatus {
    let n = f.len();
    assert_eq!(h.shape(), (n, n), "Hessian shape");
    assert!(rows.iter().all(|r| r.a.len() == n), "row length mismatch");
    if n == 0 {
        return if all_contain(rows, &[], settings.feas_tol) {
            QpStatus::Optimal(QpSolution {
                point: Vec::new(),
                value: 0.0,
                multipliers: vec![0.0; rows.len()],
                working_set: Vec::new(),
            })
        } else {
            QpStatus::Infeasible
        };
    }

    let (start, ws) = match warm {
        Some(w) if w.point.len() == n && all_contain(rows, w.point, settings.feas_tol) => {
            (w.point.to_vec(), w.working_set.to_vec())
        }
        _ => match find_feasible_point(rows, n, settings) {
            Ok(z) => (z, Vec::new()),
            Err(LpStatus::Infeasible) => return QpStatus::Infeasible,
            Err(_) => return QpStatus::Stalled,
        },
    };

    let h_reg = if min_ldl_pivot(h) < settings.qp_regularization {
        Some(h + &Mat::identity(n).scale(settings.qp_regularization))
    } else {
        None
    };
    let problem = Parts { h, f, rows };
    active_set(&problem, h_reg.as_ref().unwrap_or(h), start, ws, settings)
}

struct Parts<'a> {
    h: &'a Mat,
    f: &'a [f64],
    rows: &'a [Halfspace],
}

impl Parts<'_> {
    fn objective(&self, d: &[f64]) -> f64 {
        0.5 * self.h.quad_form(d) + dot(self.f, d)
    }
}

/// Solves the equality-constrained step `[H Aᵀ; A 0][s; λ] = [−g; 0]`.
///
/// Each working row is scaled to the magnitude of `H` so the factorization is
/// not thrown off by short rows; the multipliers are mapped back.
fn kkt_step(h: &Mat, rows: &[Halfspace], ws: &[usize], g: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = h.rows();
    let k = ws.len();
    let hscale = h.max_abs().max(1e-300);
    let mut kkt = Mat::zeros(n + k, n + k);
    kkt.set_block(0, 0, h);
    let mut scales = Vec::with_capacity(k);
    for (r, &i) in ws.iter().enumerate() {
        let nrm = dot(&rows[i].a, &rows[i].a).sqrt();
        let s = if nrm > 0.0 { hscale / nrm } else { 1.0 };
        scales.push(s);
        for j in 0..n {
            kkt[(n + r, j)] = s * rows[i].a[j];
            kkt[(j, n + r)] = s * rows[i].a[j];
        }
    }
    let mut rhs = vec![0.0; n + k];
    for j in 0..n {
        rhs[j] = -g[j];
    }
    // Only exact breakdown counts as singular here: a regularized PSD block
    // legitimately carries pivots far below the scale of the other entries.
    let lu_settings = NumericSettings {
        lu_pivot_rel: 1e-16,
        ..NumericSettings::default()
    };
    let sol = Lu::factor_with(&kkt, &lu_settings).ok()?.solve_vec(&rhs);
    let lambda = sol[n..].iter().zip(&scales).map(|(l, s)| l * s).collect();
    Some((sol[..n].to_vec(), lambda))
}

/// Drops working-set rows that are not active at `d` or are linearly dependent.
fn clean_working_set(rows: &[Halfspace], d: &[f64], ws: Vec<usize>, tol: f64) -> Vec<usize> {
    let n = d.len();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for i in ws {
        if i >= rows.len() || kept.contains(&i) || kept.len() == n {
            continue;
        }
        let r = &rows[i];
        if r.residual(d).abs() > tol * (1.0 + r.b.abs()) {
            continue;
        }
        let mut a = r.a.clone();
        for qi in &q {
            let c = dot(qi, &a);
            for (aj, qj) in a.iter_mut().zip(qi) {
                *aj -= c * qj;
            }
        }
        let nrm = dot(&a, &a).sqrt();
        if nrm > 1e-10 * dot(&r.a, &r.a).sqrt() {
            q.push(a.into_iter().map(|x| x / nrm).collect());
            kept.push(i);
        }
    }
    kept
}

fn active_set(
    p: &Parts,
    h: &Mat,
    mut d: Vec<f64>,
    ws: Vec<usize>,
    settings: &NumericSettings,
) -> QpStatus {
    let n = d.len();
    let m = p.rows.len();
    let mut ws = clean_working_set(p.rows, &d, ws, settings.feas_tol);
    let fscale = 1.0 + p.f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let max_iter = 20 * (m + n) + 200;
    for _ in 0..max_iter {
        let mut g = h.mul_vec(&d);
        for (gi, fi) in g.iter_mut().zip(p.f) {
            *gi += fi;
        }
        let Some((step, lambda)) = kkt_step(h, p.rows, &ws, &g) else {
            return QpStatus::Stalled;
        };
        let dscale = 1.0 + d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let step_norm = step.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if step_norm <= 1e-13 * dscale {
            // Most negative multiplier leaves; lowest row index on ties.
            let mut leave: Option<usize> = None;
            for (k, &l) in lambda.iter().enumerate() {
                if l < -settings.dual_tol * fscale {
                    leave = match leave {
                        None => Some(k),
                        Some(b) if l < lambda[b] || (l == lambda[b] && ws[k] < ws[b]) => Some(k),
                        keep => keep,
                    };
                }
            }
            match leave {
                Some(k) => {
                    ws.remove(k);
                    continue;
                }
                None => {
                    let mut multipliers = vec![0.0; m];
                    for (&i, &l) in ws.iter().zip(&lambda) {
                        multipliers[i] = l.max(0.0);
                    }
                    return QpStatus::Optimal(QpSolution {
                        value: p.objective(&d),
                        point: d,
                        multipliers,
                        working_set: ws,
                    });
                }
            }
        }

        // Longest feasible fraction of the step; lowest index among tied blockers.
        let mut alpha = 1.0;
        let mut blocking: Option<usize> = None;
        for (i, r) in p.rows.iter().enumerate() {
            if ws.contains(&i) {
                continue;
            }
            let ap = dot(&r.a, &step);
            if ap <= 1e-12 * step_norm * dot(&r.a, &r.a).sqrt() {
                continue;
            }
            let t = ((r.b - dot(&r.a, &d)) / ap).max(0.0);
            if t < alpha {
                alpha = t;
                blocking = Some(i);
            }
        }
        for (dj, sj) in d.iter_mut().zip(&step) {
            *dj += alpha * sj;
        }
        if let Some(i) = blocking {
            if ws.len() < n {
                ws.push(i);
            } else {
                return QpStatus::Stalled;
            }
        }
    }
    QpStatus::Stalled
}

/// Optimality residuals of a QP solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖Hd + f + Σλᵢaᵢ‖∞`.
    pub stationarity: f64,
    /// `‖f‖∞`, the scale of the stationarity tolerance.
    pub f_scale: f64,
    /// `max(aᵢ·d − bᵢ, 0)`.
    pub primal: f64,
    /// `max |λᵢ(aᵢ·d − bᵢ)|`.
    pub complementarity: f64,
    pub min_multiplier: f64,
}

impl KktResiduals {
    pub fn within_tolerances(&self) -> bool {
        self.stationarity <= 1e-8 * (1.0 + self.f_scale)
            && self.primal <= 1e-9
            && self.complementarity <= 1e-8
            && self.min_multiplier >= -1e-10
    }
}

pub fn kkt_residuals(p: &QpProblem, s: &QpSolution) -> KktResiduals {
    let mut stat = p.h.mul_vec(&s.point);
    for (a, f) in stat.iter_mut().zip(&p.f) {
        *a += f;
    }
    let (mut primal, mut comp, mut min_l) = (0.0f64, 0.0f64, 0.0f64);
    for (r, &l) in p.rows.iter().zip(&s.multipliers) {
        let res = r.residual(&s.point);
        primal = primal.max(res);
        comp = comp.max((l * res).abs());
        min_l = min_l.min(l);
        for (a, ai) in stat.iter_mut().zip(&r.a) {
            *a += l * ai;
        }
    }
    KktResiduals {
        stationarity: stat.iter().fold(0.0, |a, x| a.max(x.abs())),
        f_scale: p.f.iter().fold(0.0, |a, x| a.max(x.abs())),
        primal,
        complementarity: comp,
        min_multiplier: min_l,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_solve;
    use proptest::prelude::*;

    fn kkt_ok(p: &QpProblem, s: &QpSolution) -> Result<(), String> {
        let k = kkt_residuals(p, s);
        if k.within_tolerances() {
            Ok(())
        } else {
            Err(format!("{k:?}"))
        }
    }

    #[test]
    fn scalar_lower_bound() {
        let p = QpProblem {
            h: Mat::scalar(2.0),
            f: vec![0.0],
            rows: vec![Halfspace::new(vec![-1.0], -1.0)],
        };
        let s = solve_qp(&p).into_optimal().unwrap();
        assert!((s.point[0] - 1.0).abs() < 1e-12);
        kkt_ok(&p, &s).unwrap();
    }

    #[test]
    fn unconstrained_newton() {
        let h = Mat::from_rows(&[[4.0, 1.0], [1.0, 3.0]]);
        let f = vec![1.0, -2.0];
        let p = QpProblem {
            h: h.clone(),
            f: f.clone(),
            rows: vec![],
        };
        let s = solve_qp(&p).into_optimal().unwrap();
        let want = lu_solve(&h, &Mat::column(&[-1.0, 2.0])).unwrap();
        assert!((s.point[0] - want[(0, 0)]).abs() < 1e-12);
        assert!((s.point[1] - want[(1, 0)]).abs() < 1e-12);
    }

    #[test]
    fn infeasible_rows() {
        let p = QpProblem {
            h: Mat::scalar(1.0),
            f: vec![0.0],
            rows: vec![
                Halfspace::new(vec![1.0], -1.0),
                Halfspace::new(vec![-1.0], -1.0),
            ],
        };
        assert_eq!(solve_qp(&p), QpStatus::Infeasible);
    }

    #[test]
    fn warm_start_same_answer() {
        let p = QpProblem {
            h: Mat::identity(2).scale(2.0),
            f: vec![-4.0, -4.0],
            rows: vec![
                Halfspace::new(vec![1.0, 1.0], 1.0),
                Halfspace::new(vec![-1.0, 0.0], 0.0),
            ],
        };
        let cold = solve_qp(&p).into_optimal().unwrap();
        let warm = solve_qp_with(
            &p,
            Some(QpWarmStart {
                point: &[0.0, 1.0],
                working_set: &[0, 1],
            }),
            &Default::default(),
        )
        .into_optimal()
        .unwrap();
        assert!((cold.point[0] - 0.5).abs() < 1e-12 && (cold.point[1] - 0.5).abs() < 1e-12);
        assert!((warm.point[0] - 0.5).abs() < 1e-12 && (warm.point[1] - 0.5).abs() < 1e-12);
    }

    /// Enumerates every working set of size ≤ n and keeps the KKT-feasible one.
    fn enumerate_active_sets(p: &QpProblem) -> Option<f64> {
        let n = p.dim();
        let m = p.rows.len();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << m) {
            let ws: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            if ws.len() > n {
                continue;
            }
            let k = ws.len();
            let mut kkt = Mat::zeros(n + k, n + k);
            kkt.set_block(0, 0, &p.h);
            let mut rhs = vec![0.0; n + k];
            for j in 0..n {
                rhs[j] = -p.f[j];
            }
            for (r, &i) in ws.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = p.rows[i].a[j];
                    kkt[(j, n + r)] = p.rows[i].a[j];
                }
                rhs[n + r] = p.rows[i].b;
            }
            let Ok(lu) = Lu::factor(&kkt) else { continue };
            let sol = lu.solve_vec(&rhs);
            let d = &sol[..n];
            if sol[n..].iter().all(|&l| l >= -1e-9) && p.rows.iter().all(|r| r.residual(d) <= 1e-9)
            {
                let v = p.objective(d);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        best
    }

    fn arb_qp() -> impl Strategy<Value = QpProblem> {
        (
            prop::collection::vec(-1.0..1.0f64, 36),
            prop::collection::vec(-2.0..2.0f64, 6),
            prop::collection::vec((prop::collection::vec(-1.0..1.0f64, 6), 0.05..1.5f64), 10),
        )
            .prop_map(|(l, f, rows)| {
                let l = Mat::from_vec(6, 6, l);
                let h = &l.matmul(&l.transpose()) + &Mat::identity(6).scale(0.1);
                QpProblem {
                    h,
                    f,
                    rows: rows
                        .into_iter()
                        .map(|(a, b)| Halfspace::new(a, b))
                        .collect(),
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_active_set_enumeration(p in arb_qp()) {
            let s = solve_qp(&p).into_optimal().unwrap();
            kkt_ok(&p, &s).map_err(TestCaseError::fail)?;
            let oracle = enumerate_active_sets(&p).unwrap();
            prop_assert!((s.value - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()));
        }

        #[test]
        fn deterministic(p in arb_qp()) {
            prop_assert_eq!(solve_qp(&p), solve_qp(&p));
        }
    }
}
