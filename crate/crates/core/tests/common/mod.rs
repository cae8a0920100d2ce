//! Shared oracles for the integration and acceptance tests.
#![allow(dead_code)]

use csrg::linalg::{dot, norm2};
use csrg::model::ClosedLoopModel;
use csrg::oinf::{tightening_table, ChanceSpec, OinfResult, Polyhedron};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every tightened mean row of stages `0..=horizon`, evaluated directly.
pub struct BruteForce {
    rows: Vec<(Vec<f64>, f64)>,
    omega: Polyhedron,
    n_state: usize,
}

impl BruteForce {
    pub fn new(
        m: &ClosedLoopModel,
        spec: &ChanceSpec,
        result: &OinfResult,
        horizon: usize,
    ) -> Self {
        let table = tightening_table(m, spec, horizon).unwrap();
        let mut rows = Vec::new();
        for ((state_map, ref_map), rhs) in m.mean_maps().zip(&table) {
            for (i, &c) in rhs.iter().enumerate() {
                let g = spec.normal(i);
                let mut a = state_map.tr_mul_vec(&g);
                a.extend(ref_map.tr_mul_vec(&g));
                let n = norm2(&a);
                if n > 1e-14 {
                    rows.push((a.iter().map(|x| x / n).collect(), c / n));
                } else {
                    assert!(c >= 0.0, "empty row violated");
                }
            }
        }
        Self {
            rows,
            omega: result.tilde_omega.clone(),
            n_state: m.dims().n_x(),
        }
    }

    /// Largest normalized violation; membership is `≤ 0`.
    pub fn violation(&self, z: &[f64]) -> f64 {
        let stages = self
            .rows
            .iter()
            .map(|(a, b)| dot(a, z) - b)
            .fold(f64::NEG_INFINITY, f64::max);
        stages.max(self.omega.max_violation(&z[self.n_state..]))
    }
}

pub struct OracleReport {
    pub inside: usize,
    pub boundary: usize,
    pub disagreements: usize,
    pub worst_disagreement: f64,
}

/// Samples points inside and just outside `result.set` from `bounds` and compares
/// membership with the oracle; disagreements within `band` of the oracle boundary
/// are not counted.
pub fn compare_membership(
    result: &OinfResult,
    oracle: &BruteForce,
    bounds: &[(f64, f64)],
    n_each: usize,
    band: f64,
    seed: u64,
) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = &result.set;
    let (mut inside, mut boundary, mut disagreements) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    let mut tries = 0usize;
    while inside < n_each || boundary < n_each {
        tries += 1;
        assert!(tries < 50_000_000, "sampling box too loose");
        let z: Vec<f64> = bounds
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect();
        let mv = set.max_violation(&z);
        let kind = if set.contains(&z) {
            &mut inside
        } else if mv > 0.0 && mv <= 0.1 {
            &mut boundary
        } else {
            continue;
        };
        if *kind >= n_each {
            continue;
        }
        *kind += 1;
        let ov = oracle.violation(&z);
        if set.contains(&z) != (ov <= 0.0) && ov.abs() > band {
            disagreements += 1;
            worst = worst.max(ov.abs());
        }
    }
    OracleReport {
        inside,
        boundary,
        disagreements,
        worst_disagreement: worst,
    }
}
