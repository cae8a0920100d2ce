//! Vertex-following simplex for `max c·z s.t. a_i·z ≤ b_i`, `z` free.
//!
//! The method keeps a basis of `n` active rows. Artificial bounds
//! `|z_j| ≤ big` make every problem bounded; an optimum that leans on one of
//! them (positive multiplier) is reported as `Unbounded`.

use super::Halfspace;
use crate::linalg::{dot, norm2, Lu, Mat};
use crate::settings::NumericSettings;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub point: Vec<f64>,
    pub value: f64,
    /// One multiplier per input row, zero for rows outside the final basis.
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
    /// Iteration cap reached or the basis became numerically singular.
    Stalled,
}

impl LpStatus {
    pub fn optimal(&self) -> Option<&LpSolution> {
        match self {
            LpStatus::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

/// Input rows followed by `+z_j ≤ big`, `−z_j ≤ big` for each coordinate.
struct System<'a> {
    rows: &'a [Halfspace],
    n: usize,
    big: f64,
    norms: Vec<f64>,
}

impl<'a> System<'a> {
    fn new(rows: &'a [Halfspace], n: usize, big: f64) -> Self {
        let mut norms: Vec<f64> = rows.iter().map(|h| norm2(&h.a)).collect();
        norms.extend(std::iter::repeat_n(1.0, 2 * n));
        Self {
            rows,
            n,
            big,
            norms,
        }
    }

    fn len(&self) -> usize {
        self.rows.len() + 2 * self.n
    }

    fn is_artificial(&self, i: usize) -> bool {
        i >= self.rows.len()
    }

    fn dot(&self, i: usize, x: &[f64]) -> f64 {
        let m = self.rows.len();
        if i < m {
            dot(&self.rows[i].a, x)
        } else {
            let j = (i - m) / 2;
            if (i - m).is_multiple_of(2) {
                x[j]
            } else {
                -x[j]
            }
        }
    }

    fn b(&self, i: usize) -> f64 {
        if i < self.rows.len() {
            self.rows[i].b
        } else {
            self.big
        }
    }

    fn row(&self, i: usize) -> Vec<f64> {
        let m = self.rows.len();
        if i < m {
            self.rows[i].a.clone()
        } else {
            let mut a = vec![0.0; self.n];
            let j = (i - m) / 2;
            a[j] = if (i - m).is_multiple_of(2) { 1.0 } else { -1.0 };
            a
        }
    }

    /// Ratio test along `d` from `z`, skipping rows in `skip`.
    ///
    /// Returns the entering row with the smallest step; exact and near ties go
    /// to the lowest row index.
    fn ratio_test(&self, z: &[f64], d: &[f64], skip: &[usize]) -> Option<(usize, f64)> {
        let nd = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut steps: Vec<(usize, f64)> = Vec::new();
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            if skip.contains(&i) {
                continue;
            }
            let ad = self.dot(i, d);
            if ad <= 1e-11 * self.norms[i] * nd {
                continue;
            }
            let slack = (self.b(i) - self.dot(i, z)).max(0.0);
            let step = slack / ad;
            if step <= best * (1.0 + 1e-12) + 1e-14 {
                best = best.min(step);
                steps.push((i, step));
            }
        }
        let cut = best * (1.0 + 1e-12) + 1e-14;
        steps
            .into_iter()
            .find(|&(_, s)| s <= cut)
            .map(|(i, _)| (i, best))
    }
}

fn project_out(q: &[Vec<f64>], v: &mut [f64]) {
    for _ in 0..2 {
        for qi in q {
            let c = dot(qi, v);
            for (vj, qj) in v.iter_mut().zip(qi) {
                *vj -= c * qj;
            }
        }
    }
}

/// Walks from a feasible point to a vertex without decreasing `c·z`.
fn purify(sys: &System, c: &[f64], mut z: Vec<f64>) -> Option<(Vec<f64>, Vec<usize>)> {
    let n = sys.n;
    let mut basis: Vec<usize> = Vec::with_capacity(n);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    let cscale = c.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    while basis.len() < n {
        let mut d = c.to_vec();
        project_out(&q, &mut d);
        if norm2(&d) <= 1e-12 * cscale {
            let mut best = (0.0, Vec::new());
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                project_out(&q, &mut e);
                let nrm = norm2(&e);
                if nrm > best.0 + 1e-12 {
                    best = (nrm, e);
                }
            }
            d = best.1;
        }
        let (enter, step) = sys.ratio_test(&z, &d, &basis)?;
        for (zj, dj) in z.iter_mut().zip(&d) {
            *zj += step * dj;
        }
        let mut a = sys.row(enter);
        project_out(&q, &mut a);
        let nrm = norm2(&a);
        if nrm <= 1e-13 {
            return None;
        }
        q.push(a.into_iter().map(|x| x / nrm).collect());
        basis.push(enter);
    }
    Some((z, basis))
}

fn basis_matrix(sys: &System, basis: &[usize]) -> Mat {
    let rows: Vec<Vec<f64>> = basis.iter().map(|&i| sys.row(i)).collect();
    Mat::from_rows(&rows)
}

fn simplex(sys: &System, c: &[f64], z0: Vec<f64>, settings: &NumericSettings) -> LpStatus {
    let n = sys.n;
    let m = sys.rows.len();
    let Some((_, mut basis)) = purify(sys, c, z0) else {
        return LpStatus::Stalled;
    };
    let dual_tol = settings.dual_tol * c.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let max_iter = 50 * sys.len() + 1000;
    let mut degenerate_streak = 0usize;
    let mut bland = false;
    for _ in 0..max_iter {
        let b_mat = basis_matrix(sys, &basis);
        let (Ok(lu), Ok(lut)) = (Lu::factor(&b_mat), Lu::factor(&b_mat.transpose())) else {
            return LpStatus::Stalled;
        };
        let b_s: Vec<f64> = basis.iter().map(|&i| sys.b(i)).collect();
        let z = lu.solve_vec(&b_s);
        let y = lut.solve_vec(c);

        let leave = if bland {
            (0..n)
                .filter(|&k| y[k] < -dual_tol)
                .min_by_key(|&k| basis[k])
        } else {
            let mut best: Option<usize> = None;
            for k in 0..n {
                if y[k] < -dual_tol {
                    match best {
                        None => best = Some(k),
                        Some(b) => {
                            if y[k] < y[b] || (y[k] == y[b] && basis[k] < basis[b]) {
                                best = Some(k);
                            }
                        }
                    }
                }
            }
            best
        };

        let Some(k) = leave else {
            if basis
                .iter()
                .zip(&y)
                .any(|(&i, &yi)| sys.is_artificial(i) && yi > dual_tol)
            {
                return LpStatus::Unbounded;
            }
            let mut multipliers = vec![0.0; m];
            for (&i, &yi) in basis.iter().zip(&y) {
                if i < m {
                    multipliers[i] = yi;
                }
            }
            return LpStatus::Optimal(LpSolution {
                value: dot(c, &z),
                point: z,
                multipliers,
            });
        };

        let mut e = vec![0.0; n];
        e[k] = -1.0;
        let d = lu.solve_vec(&e);
        let Some((enter, step)) = sys.ratio_test(&z, &d, &basis) else {
            return LpStatus::Unbounded;
        };
        if step <= 1e-14 {
            degenerate_streak += 1;
            if degenerate_streak > 2 * n + 2 {
                bland = true;
            }
        } else {
            degenerate_streak = 0;
        }
        basis[k] = enter;
    }
    LpStatus::Stalled
}

fn within(rows: &[Halfspace], z: &[f64], tol: f64) -> bool {
    rows.iter().all(|h| h.contains(z, tol))
}

/// Phase 1: a point satisfying every row to within `feas_tol`, or `None` if the rows are inconsistent.
pub fn find_feasible_point(
    rows: &[Halfspace],
    n: usize,
    settings: &NumericSettings,
) -> Result<Vec<f64>, LpStatus> {
    let origin = vec![0.0; n];
    if within(rows, &origin, settings.feas_tol) {
        return Ok(origin);
    }
    let s0 = rows.iter().map(|h| -h.b).fold(0.0, f64::max) + 1.0;
    let mut aux: Vec<Halfspace> = rows
        .iter()
        .map(|h| {
            let mut a = h.a.clone();
            a.push(-1.0);
            Halfspace { a, b: h.b }
        })
        .collect();
    let mut floor = vec![0.0; n + 1];
    floor[n] = -1.0;
    aux.push(Halfspace { a: floor, b: 1.0 });
    let big = settings.lp_big.max(4.0 * s0);
    let sys = System::new(&aux, n + 1, big);
    let mut c = vec![0.0; n + 1];
    c[n] = -1.0;
    let mut start = vec![0.0; n + 1];
    start[n] = s0;
    match simplex(&sys, &c, start, settings) {
        LpStatus::Optimal(sol) => {
            let s = -sol.value;
            if s <= settings.feas_tol {
                let mut z = sol.point;
                z.truncate(n);
                Ok(z)
            } else {
                Err(LpStatus::Infeasible)
            }
        }
        LpStatus::Unbounded | LpStatus::Stalled => Err(LpStatus::Stalled),
        LpStatus::Infeasible => Err(LpStatus::Infeasible),
    }
}

/// Maximizes `c·z` over the rows with default settings and a cold start.
pub fn solve_lp(c: &[f64], rows: &[Halfspace]) -> LpStatus {
    solve_lp_with(c, rows, None, &NumericSettings::default())
}

/// Maximizes `c·z` over the rows.
///
/// `start`, when it satisfies every row within `feas_tol`, replaces phase 1.
pub fn solve_lp_with(
    c: &[f64],
    rows: &[Halfspace],
    start: Option<&[f64]>,
    settings: &NumericSettings,
) -> LpStatus {
    let n = c.len();
    assert!(rows.iter().all(|h| h.a.len() == n), "row length mismatch");
    if n == 0 {
        return if rows
            .iter()
            .all(|h| h.b >= -settings.feas_tol * (1.0 + h.b.abs()))
        {
            LpStatus::Optimal(LpSolution {
                point: Vec::new(),
                value: 0.0,
                multipliers: vec![0.0; rows.len()],
            })
        } else {
            LpStatus::Infeasible
        };
    }
    let big = settings.lp_big;
    let z0 = match start {
        Some(s)
            if s.len() == n
                && within(rows, s, settings.feas_tol)
                && s.iter().all(|x| x.abs() < big) =>
        {
            s.to_vec()
        }
        _ => match find_feasible_point(rows, n, settings) {
            Ok(z) => z,
            Err(status) => return status,
        },
    };
    let sys = System::new(rows, n, big);
    simplex(&sys, c, z0, settings)
}
