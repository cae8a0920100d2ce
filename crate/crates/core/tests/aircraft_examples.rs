use csrg::aircraft::{gtm_lateral, gtm_longitudinal, SAMPLE_TIME};
use csrg::governor::{Algorithm, Branch, GovernorConfig};
use csrg::linalg::{cholesky, is_schur, lu_solve, lyapunov_residual, solve_discrete_lyapunov, Mat};
use csrg::model::discretize_zoh;
use csrg::oinf::{build_oinf, verify_finite_determination};
use csrg::sim::{run_closed_loop, RngStream, SimSetup};

/// `e^{M}` by a long Taylor series, for matrices of modest norm.
fn taylor_exp(m: &Mat) -> Mat {
    let n = m.rows();
    let mut sum = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..60 {
        term = term.matmul(m).scale(1.0 / k as f64);
        sum = &sum + &term;
    }
    sum
}

/// Spectral radius by powering: `‖Aᵏ‖^{1/k}` for large `k`.
fn spectral_radius(a: &Mat) -> f64 {
    let mut p = a.clone();
    let mut log_scale = 0.0;
    let k = 2048;
    for _ in 1..k {
        p = p.matmul(a);
        let s = p.max_abs();
        log_scale += s.ln();
        p = p.scale(1.0 / s);
    }
    (log_scale / k as f64).exp()
}

#[test]
fn steady_gain_solve_multiplies_back() {
    let m = gtm_longitudinal().model().unwrap();
    let n = m.a_bar().rows();
    let lhs = &Mat::identity(n) - m.a_bar();
    let x = lu_solve(&lhs, m.bv_bar()).unwrap();
    let back = lhs.matmul(&x);
    assert!((&back - m.bv_bar()).max_abs() <= 1e-10 * (1.0 + m.bv_bar().max_abs()));
    assert!((&x - m.steady_gain()).max_abs() <= 1e-10 * (1.0 + x.max_abs()));
}

#[test]
fn lateral_lyapunov_residual() {
    let m = gtm_lateral().model().unwrap();
    let q = Mat::identity(m.a_bar().rows());
    let p = solve_discrete_lyapunov(m.a_bar(), &q).unwrap();
    assert!(lyapunov_residual(m.a_bar(), &p, &q) <= 1e-10 * (1.0 + p.max_abs()));
}

#[test]
fn closed_loops_are_schur_by_powering() {
    for b in [gtm_longitudinal(), gtm_lateral()] {
        let m = b.model().unwrap();
        let rho = spectral_radius(m.a_bar());
        assert!(rho < 1.0, "{}: {rho}", b.name);
        assert!(is_schur(m.a_bar()));
    }
}

#[test]
fn zoh_matches_series() {
    let b = gtm_longitudinal();
    let (a_c, b_u, b_w) = &b.continuous;
    let (a_d, cols) = discretize_zoh(a_c, &[b_u, b_w], SAMPLE_TIME).unwrap();
    // Augmented exponential [[A, B], [0, 0]]·dt.
    let nb = b_u.cols() + b_w.cols();
    let n = a_c.rows();
    let mut aug = Mat::zeros(n + nb, n + nb);
    aug.set_block(0, 0, &a_c.scale(SAMPLE_TIME));
    aug.set_block(0, n, &Mat::hstack(&[b_u, b_w]).scale(SAMPLE_TIME));
    let e = taylor_exp(&aug);
    assert!((&e.submatrix(0, 0, n, n) - &a_d).max_abs() <= 1e-10);
    assert!((&e.submatrix(0, n, n, b_u.cols()) - &cols[0]).max_abs() <= 1e-10);
    assert!((&e.submatrix(0, n + b_u.cols(), n, b_w.cols()) - &cols[1]).max_abs() <= 1e-10);
    assert_eq!(&a_d, &b.plant.a);
}

#[test]
fn lateral_stationary_covariance_factors() {
    let m = gtm_lateral().model().unwrap();
    let s = m.sigma_x_inf().unwrap();
    let l = cholesky(&s).unwrap();
    assert!((&l.matmul(&l.transpose()) - &s).max_abs() <= 1e-10 * (1.0 + s.max_abs()));
}

#[test]
fn lateral_steady_state_is_fixed_point() {
    let m = gtm_lateral().model().unwrap();
    let r = [std::f64::consts::PI / 6.0];
    let (x, _) = m.steady_state(&r);
    let next = m.step_mean(&x, &r);
    let res = next
        .iter()
        .zip(&x)
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    assert!(res <= 1e-9, "{res}");
}

#[test]
fn longitudinal_mean_settles_to_steady_output() {
    let m = gtm_longitudinal().model().unwrap();
    let n = m.a_bar().rows();
    // The slowest closed-loop mode decays by about 0.968 per step.
    let seq = m.output_mean_sequence(&vec![0.0; n], &[0.1], 600);
    let (_, y_star) = m.steady_state(&[0.1]);
    let last = seq.last().unwrap();
    for (a, b) in last.iter().zip(&y_star) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn lateral_output_covariance_converges() {
    let m = gtm_lateral().model().unwrap();
    let s500 = m.output_covariances().nth(500).unwrap();
    let s_inf = m.sigma_y_inf().unwrap();
    assert!((&s500 - &s_inf).max_abs() <= 1e-8);
}

#[test]
fn both_bundles_finitely_determined_with_equilibrium_inside() {
    for b in [gtm_longitudinal(), gtm_lateral()] {
        let m = b.model().unwrap();
        let res = build_oinf(&m, &b.spec, &b.oinf_options()).unwrap();
        assert!(res.t_star < 1000 && !res.set.is_empty(), "{}", b.name);
        assert!(
            verify_finite_determination(&m, &b.spec, &res, 5).unwrap(),
            "{}",
            b.name
        );
        assert!(res.tilde_omega.contains(&[0.0]), "{}", b.name);
        let n = m.dims().n_x();
        let z: Vec<f64> = std::iter::repeat_n(0.0, n + 1).collect();
        assert!(res.set.contains(&z), "{}", b.name);
    }
}

fn governed_trace(algorithm: Algorithm, seed: u64) -> (csrg::sim::SimTrace, GovernorConfig) {
    let b = gtm_longitudinal();
    let m = b.model().unwrap();
    let res = build_oinf(&m, &b.spec, &b.oinf_options()).unwrap();
    let cfg = GovernorConfig::new(&m, b.q.clone(), b.r.clone(), b.delta, algorithm, res).unwrap();
    let xp0 = vec![0.0; b.n_xp()];
    let setup = SimSetup {
        model: &m,
        governor: Some(&cfg),
        constraints: &b.spec,
        profile: &b.profile,
        x0: (&xp0, &[0.0]),
        steps: 600,
    };
    (
        run_closed_loop(&setup, b.dt, &mut RngStream::new(seed)).unwrap(),
        cfg,
    )
}

#[test]
fn alg1_optimized_steps_contract() {
    let (tr, cfg) = governed_trace(Algorithm::Alg1, 3);
    let rnorm = |v: &[f64], r: &[f64]| cfg.r.quad_form(&[v[0] - r[0]]).sqrt();
    let mut optimized = 0;
    for w in tr.steps.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let diag = cur.diag.as_ref().unwrap();
        match diag.branch {
            Branch::Optimized => {
                optimized += 1;
                let bound = (rnorm(&prev.v, &cur.r) - cfg.delta).max(0.0) + 1e-8;
                assert!(rnorm(&cur.v, &cur.r) <= bound);
                assert!(diag.violation <= 1e-8);
            }
            Branch::Fallback => assert_eq!(cur.v, prev.v),
            Branch::CommandAccepted => panic!("Alg1 accepted directly"),
        }
    }
    assert!(optimized > 400);
}

#[test]
fn alg2_jumps_to_command() {
    let (tr, _) = governed_trace(Algorithm::Alg2, 4);
    let jump = tr
        .steps
        .windows(2)
        .find(|w| w[1].branch() == Some(Branch::CommandAccepted))
        .expect("command accepted at some step");
    assert_eq!(jump[1].v, jump[1].r);
    assert!(
        (jump[0].v[0] - jump[1].r[0]).abs() > 1e-3,
        "jump was not abrupt"
    );
}

#[test]
fn nominal_loop_violates_elevator_limit() {
    let b = gtm_longitudinal();
    let m = b.model().unwrap();
    let xp0 = vec![0.0; b.n_xp()];
    let setup = SimSetup {
        model: &m,
        governor: None,
        constraints: &b.spec,
        profile: &b.profile,
        x0: (&xp0, &[0.0]),
        steps: b.steps,
    };
    let tr = run_closed_loop(&setup, b.dt, &mut RngStream::new(0)).unwrap();
    let elevator = b.output_names.iter().position(|n| *n == "delta_e").unwrap();
    assert!(tr
        .steps
        .iter()
        .any(|s| s.y[elevator].abs() > std::f64::consts::PI / 6.0));
}
