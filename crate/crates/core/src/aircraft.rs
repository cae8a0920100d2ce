//! Built-in linearized transport-aircraft examples plus two small desk examples.
//!
//! Longitudinal: states `(ΔU, Δα, Δq, Δθ)`, inputs `(Δδ_e, Δδ_T)`, tracking the
//! flight path angle `Δθ − Δα`. Lateral: states `(Δβ, Δp, Δr, Δφ)`, inputs
//! `(Δδ_a, Δδ_r)`, tracking the roll angle. Both plants are continuous-time and
//! sampled by zero-order hold; both outputs stack the states and the inputs.

use std::f64::consts::PI;

use crate::governor::Algorithm;
use crate::linalg::Mat;
use crate::model::{
    assemble, discretize_zoh, ClosedLoopModel, ControllerModel, ModelError, PlantModel,
};
use crate::oinf::{ChanceSpec, OinfOptions, VBox};
use crate::prob::Probability;
use crate::sim::ReferenceProfile;

pub const SAMPLE_TIME: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleBundle {
    pub name: &'static str,
    /// Continuous-time `(A, B_u, B_w)` before sampling.
    pub continuous: (Mat, Mat, Mat),
    pub plant: PlantModel,
    pub controller: ControllerModel,
    pub dt: f64,
    pub w: Mat,
    pub spec: ChanceSpec,
    pub q: Mat,
    pub r: Mat,
    pub delta: f64,
    pub algorithm: Algorithm,
    pub v_box: VBox,
    pub profile: ReferenceProfile,
    pub steps: usize,
    pub output_names: Vec<&'static str>,
    pub state_names: Vec<&'static str>,
}

impl ExampleBundle {
    pub fn model(&self) -> Result<ClosedLoopModel, ModelError> {
        assemble(self.plant.clone(), self.controller.clone(), self.w.clone())
    }

    pub fn oinf_options(&self) -> OinfOptions {
        OinfOptions::new(self.v_box.clone())
    }

    pub fn n_xp(&self) -> usize {
        self.plant.a.rows()
    }
}

/// `G = [I; −I]` columns and bounds `[hi; −lo]` for a box on `y`.
pub fn box_constraints(lo: &[f64], hi: &[f64]) -> (Mat, Vec<f64>) {
    let n = lo.len();
    let mut g = Mat::zeros(n, 2 * n);
    let mut bounds = Vec::with_capacity(2 * n);
    for i in 0..n {
        g[(i, 2 * i)] = 1.0;
        g[(i, 2 * i + 1)] = -1.0;
        bounds.push(hi[i]);
        bounds.push(-lo[i]);
    }
    (g, bounds)
}

/// `y = [x_p; u]`.
fn state_input_output(n_x: usize, n_u: usize, n_w: usize) -> (Mat, Mat, Mat) {
    let mut c = Mat::zeros(n_x + n_u, n_x);
    let mut d_u = Mat::zeros(n_x + n_u, n_u);
    for i in 0..n_x {
        c[(i, i)] = 1.0;
    }
    for j in 0..n_u {
        d_u[(n_x + j, j)] = 1.0;
    }
    (c, d_u, Mat::zeros(n_x + n_u, n_w))
}

fn sampled_plant(a: &Mat, b_u: &Mat, b_w: &Mat, dt: f64) -> PlantModel {
    let (ad, bs) = discretize_zoh(a, &[b_u, b_w], dt).expect("finite example data");
    let (c, d_u, d_w) = state_input_output(a.rows(), b_u.cols(), b_w.cols());
    PlantModel {
        a: ad,
        b_u: bs[0].clone(),
        b_w: bs[1].clone(),
        c,
        d_u,
        d_w,
    }
}

fn prob(x: f64) -> Probability {
    Probability::new(x).expect("valid literal")
}

pub fn gtm_longitudinal() -> ExampleBundle {
    let a = Mat::from_rows(&[
        [-0.0665, -11.4608, 0.1439, -32.1740],
        [-0.0035, -2.4714, 0.9514, 0.0],
        [-0.0090, -43.9070, -3.4738, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ]);
    let b_u = Mat::from_rows(&[
        [-0.0435, 0.1424],
        [-0.0043, -0.0001],
        [-0.7662, 0.0192],
        [0.0, 0.0],
    ]);
    // The disturbance enters with a minus sign in front of the printed block.
    let b_w = Mat::from_rows(&[
        [-0.0665, -11.4608],
        [-0.0035, -2.4714],
        [-0.0090, -43.9070],
        [0.0, 0.0],
    ])
    .scale(-1.0);
    let plant = sampled_plant(&a, &b_u, &b_w, SAMPLE_TIME);
    let controller = ControllerModel {
        k_p: Mat::from_rows(&[
            [-0.4735, -37.7045, 2.4948, 46.3031],
            [-2.4179, 38.5827, 0.2705, -33.6410],
        ]),
        k_u: Mat::from_rows(&[[2.2715], [-6.1106]]),
        b_v: Mat::zeros(2, 1),
        a_p: Mat::from_rows(&[[0.0, -1.0, 0.0, 1.0]]),
        a_u: Mat::scalar(1.0),
        d_v: Mat::scalar(-1.0),
    };
    let lo = [-20.0, -PI / 32.0, -PI / 12.0, -PI / 6.0, -PI / 6.0, -25.0];
    let hi = [20.0, PI / 24.0, PI / 12.0, PI / 6.0, PI / 6.0, 25.0];
    let (g, bounds) = box_constraints(&lo, &hi);
    let spec = ChanceSpec::individual(g, bounds, vec![prob(0.99); 12]).expect("valid example");
    let profile = ReferenceProfile::new(vec![(0, vec![0.0]), (20, vec![0.1]), (400, vec![0.0])])
        .expect("ordered");
    ExampleBundle {
        name: "gtm-longitudinal",
        continuous: (a, b_u, b_w),
        plant,
        controller,
        dt: SAMPLE_TIME,
        w: Mat::from_diag(&[1e-2, 1e-4]),
        spec,
        q: Mat::identity(5),
        r: Mat::scalar(1e4),
        delta: 1e-6,
        algorithm: Algorithm::Alg1,
        v_box: VBox::symmetric(PI / 4.0, 1),
        profile,
        steps: 1000,
        output_names: vec!["dU", "alpha", "q", "theta", "delta_e", "delta_T"],
        state_names: vec!["dU", "alpha", "q", "theta"],
    }
}

pub fn gtm_lateral() -> ExampleBundle {
    let a = Mat::from_rows(&[
        [-0.5229, 0.0861, -0.9852, 0.2374],
        [-90.5885, -6.2736, 2.0861, 0.0],
        [29.1873, -0.4833, -1.4043, 0.0],
        [0.0, 1.0, 0.0857, 0.0],
    ]);
    let b_u = Mat::from_rows(&[
        [-0.0002, 0.0031],
        [-0.9174, 0.2321],
        [-0.0523, -0.4436],
        [0.0, 0.0],
    ]);
    let b_w = Mat::from_rows(&[[-0.5229], [-90.5885], [29.1873], [0.0]]).scale(-1.0);
    let plant = sampled_plant(&a, &b_u, &b_w, SAMPLE_TIME);
    let controller = ControllerModel {
        k_p: Mat::from_rows(&[
            [-1.4874, 0.3021, 0.8549, 2.1801],
            [-0.4431, 0.2363, 1.2214, 2.1289],
        ]),
        k_u: Mat::from_rows(&[[0.0680], [0.0684]]),
        b_v: Mat::zeros(2, 1),
        a_p: Mat::from_rows(&[[0.0, 0.0, 0.0, 1.0]]),
        a_u: Mat::scalar(1.0),
        d_v: Mat::scalar(-1.0),
    };
    let lo = [
        -PI / 12.0,
        -PI / 12.0,
        -PI / 12.0,
        -PI / 3.0,
        -PI / 6.0,
        -PI / 6.0,
    ];
    let hi = [
        PI / 12.0,
        PI / 12.0,
        PI / 12.0,
        PI / 3.0,
        PI / 6.0,
        PI / 6.0,
    ];
    let (g, bounds) = box_constraints(&lo, &hi);
    let spec = ChanceSpec::risk_allocation(g, bounds, prob(0.98)).expect("valid example");
    let profile = ReferenceProfile::new(vec![(0, vec![0.0]), (20, vec![0.8]), (300, vec![0.0])])
        .expect("ordered");
    ExampleBundle {
        name: "gtm-lateral",
        continuous: (a, b_u, b_w),
        plant,
        controller,
        dt: SAMPLE_TIME,
        w: Mat::scalar(1e-5),
        spec,
        q: Mat::identity(5),
        r: Mat::scalar(1e4),
        delta: 1e-6,
        algorithm: Algorithm::Alg1,
        v_box: VBox::symmetric(PI / 3.0, 1),
        profile,
        steps: 600,
        output_names: vec!["beta", "p", "r", "phi", "delta_a", "delta_r"],
        state_names: vec!["beta", "p", "r", "phi"],
    }
}

/// `x⁺ = 0.5x + v + w`, `y = x ≤ 1` with `β = 0.9`, `W = 0.01`, no controller state.
pub fn scalar_desk() -> ExampleBundle {
    let plant = PlantModel {
        a: Mat::scalar(0.5),
        b_u: Mat::scalar(1.0),
        b_w: Mat::scalar(1.0),
        c: Mat::scalar(1.0),
        d_u: Mat::scalar(0.0),
        d_w: Mat::scalar(0.0),
    };
    let controller = ControllerModel {
        k_p: Mat::scalar(0.0),
        k_u: Mat::zeros(1, 0),
        b_v: Mat::scalar(1.0),
        a_p: Mat::zeros(0, 1),
        a_u: Mat::zeros(0, 0),
        d_v: Mat::zeros(0, 1),
    };
    let spec = ChanceSpec::individual(Mat::scalar(1.0), vec![1.0], vec![prob(0.9)])
        .expect("valid example");
    ExampleBundle {
        name: "scalar",
        continuous: (Mat::scalar(0.5), Mat::scalar(1.0), Mat::scalar(1.0)),
        plant,
        controller,
        dt: 1.0,
        w: Mat::scalar(0.01),
        spec,
        q: Mat::identity(1),
        r: Mat::scalar(1.0),
        delta: 1e-6,
        algorithm: Algorithm::Alg1,
        v_box: VBox::symmetric(1.0, 1),
        profile: ReferenceProfile::new(vec![(0, vec![0.0]), (10, vec![0.4])]).expect("ordered"),
        steps: 100,
        output_names: vec!["x"],
        state_names: vec!["x"],
    }
}

/// First-order plant under integral control; the smallest loop with a controller state.
pub fn integrator_desk() -> ExampleBundle {
    let plant = PlantModel {
        a: Mat::scalar(0.8),
        b_u: Mat::scalar(1.0),
        b_w: Mat::scalar(1.0),
        c: Mat::from_rows(&[[1.0], [0.0]]),
        d_u: Mat::from_rows(&[[0.0], [1.0]]),
        d_w: Mat::zeros(2, 1),
    };
    let controller = ControllerModel {
        k_p: Mat::scalar(-0.3),
        k_u: Mat::scalar(0.1),
        b_v: Mat::scalar(0.0),
        a_p: Mat::scalar(-1.0),
        a_u: Mat::scalar(1.0),
        d_v: Mat::scalar(1.0),
    };
    let (g_mat, bounds) = box_constraints(&[-1.0, -0.5], &[1.0, 0.5]);
    let spec = ChanceSpec::individual(g_mat, bounds, vec![prob(0.95); 4]).expect("valid example");
    ExampleBundle {
        name: "integrator",
        continuous: (Mat::scalar(0.8), Mat::scalar(1.0), Mat::scalar(1.0)),
        plant,
        controller,
        dt: 1.0,
        w: Mat::scalar(1e-4),
        spec,
        q: Mat::identity(2),
        r: Mat::scalar(1.0),
        delta: 1e-4,
        algorithm: Algorithm::Alg1,
        v_box: VBox::symmetric(1.0, 1),
        profile: ReferenceProfile::new(vec![(0, vec![0.0]), (10, vec![0.8])]).expect("ordered"),
        steps: 200,
        output_names: vec!["x", "u"],
        state_names: vec!["x"],
    }
}

/// Built-in bundles by name.
pub fn builtin(name: &str) -> Option<ExampleBundle> {
    match name {
        "gtm-longitudinal" | "longitudinal" => Some(gtm_longitudinal()),
        "gtm-lateral" | "lateral" => Some(gtm_lateral()),
        "scalar" => Some(scalar_desk()),
        "integrator" => Some(integrator_desk()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["gtm-longitudinal", "gtm-lateral", "scalar", "integrator"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::is_schur;
    use crate::oinf::{gamma_compare, Recommendation};

    #[test]
    fn printed_entries() {
        let lon = gtm_longitudinal();
        assert_eq!(lon.continuous.0[(0, 1)], -11.4608);
        let i = 8;
        assert_eq!(lon.spec.bounds[i], PI / 6.0);
        assert_eq!(lon.spec.bounds[i + 1], PI / 6.0);
        assert_eq!(lon.spec.g_mat[(4, i + 1)], -1.0);
        assert_eq!(lon.w, Mat::from_diag(&[1e-2, 1e-4]));
        let lat = gtm_lateral();
        assert_eq!(lat.w, Mat::scalar(1e-5));
        assert!(lat
            .spec
            .betas
            .iter()
            .all(|b| (b.value() - 0.9983).abs() < 1e-4));
    }

    #[test]
    fn closed_loops_are_schur() {
        for b in [
            gtm_longitudinal(),
            gtm_lateral(),
            scalar_desk(),
            integrator_desk(),
        ] {
            let m = b.model().unwrap();
            assert!(is_schur(m.a_bar()), "{}", b.name);
        }
    }

    #[test]
    fn lateral_mode_matches_recommendation() {
        let (g, r) = gamma_compare(6, 12, prob(0.98)).unwrap();
        assert!(g < 0.0);
        assert_eq!(r, Recommendation::RiskAllocation);
        assert!(matches!(
            gtm_lateral().spec.mode,
            crate::oinf::JointMode::RiskAllocation(_)
        ));
    }

    #[test]
    fn input_rows_follow_control_law() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for b in [gtm_longitudinal(), gtm_lateral()] {
            let m = b.model().unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                let v = [rng.random_range(-1.0..1.0)];
                let mut y = m.c_bar().mul_vec(&x);
                for (yi, d) in y.iter_mut().zip(m.dv_bar().mul_vec(&v)) {
                    *yi += d;
                }
                let c = &b.controller;
                let mut u = c.k_p.mul_vec(&x[..4]);
                for (ui, (a, bv)) in u
                    .iter_mut()
                    .zip(c.k_u.mul_vec(&x[4..]).into_iter().zip(c.b_v.mul_vec(&v)))
                {
                    *ui += a + bv;
                }
                for j in 0..4 {
                    assert!((y[j] - x[j]).abs() < 1e-14);
                }
                for j in 0..2 {
                    assert!((y[4 + j] - u[j]).abs() < 1e-12);
                }
            }
        }
    }
}
