//! Monte Carlo paths against the grid oracle.

use std::collections::BTreeMap;

use fvqsd_core::oracle::{build_operator, principal_eigenpair, survival_probability};
use fvqsd_core::potential::{builtin_potential, PotentialSpec};
use fvqsd_core::sde::{shared_noise_survival, simulate_killed_path, ParticleStreams, Purpose, RngStream, StreamId};
use fvqsd_core::stats::mean_estimate;

fn builtin(name: &str, eps: f64) -> PotentialSpec {
    builtin_potential(name, &BTreeMap::new(), eps).unwrap()
}

fn point_mass(g: &fvqsd_core::oracle::GridOperator, x: f64) -> Vec<f64> {
    let mut mu = vec![0.0; g.n()];
    mu[g.nearest_node(&[x]).unwrap()] = 1.0 / g.cell_volume();
    mu
}

fn survival_frequency(p: &PotentialSpec, x0: f64, dt: f64, horizon: f64, paths: u64, seed: u64) -> f64 {
    let alive = (0..paths)
        .filter(|&r| {
            let mut s = ParticleStreams::new(seed, r, 0, 0);
            simulate_killed_path(p, &[x0], dt, horizon, &mut s, None).unwrap().survived()
        })
        .count();
    alive as f64 / paths as f64
}

#[test]
fn deep_quadratic_well_keeps_its_paths() {
    let p = builtin("quadratic_1d", 0.05);
    let freq = survival_frequency(&p, 0.0, 1e-3, 10.0, 10_000, 3);
    assert!(freq >= 0.99, "{freq}");
    let g = build_operator(&p, 512).unwrap();
    let exact = survival_probability(&g, &point_mass(&g, 0.0), 10.0).unwrap();
    assert!(exact >= 0.99, "{exact}");
}

#[test]
fn survival_frequency_matches_oracle_at_unit_time() {
    let p = builtin("quadratic_1d", 0.5);
    let paths = 20_000;
    let freq = survival_frequency(&p, 0.0, 1e-3, 1.0, paths, 5);
    let g = build_operator(&p, 2048).unwrap();
    let exact = survival_probability(&g, &point_mass(&g, 0.0), 1.0).unwrap();
    let se = (exact * (1.0 - exact) / paths as f64).sqrt();
    assert!((freq - exact).abs() <= 3.0 * se, "MC {freq} vs oracle {exact} (se {se})");
}

#[test]
fn mean_exit_time_from_the_qsd_is_inverse_lambda() {
    // Started from the QSD the exit time is exactly exponential with rate λ0.
    let p = builtin("tilted_double_well_1d", 0.25);
    let g = build_operator(&p, 2048).unwrap();
    let e = principal_eigenpair(&g).unwrap();
    let paths = 10_000;
    let times: Vec<f64> = (0..paths)
        .map(|r| {
            let mut init = RngStream::new(9, StreamId::new(r, 0, 0, Purpose::RebirthIndex));
            let x0 = g.sample(&e.qsd_density, init.next_uniform(), &[init.next_uniform()]);
            let mut s = ParticleStreams::new(9, r, 0, 0);
            simulate_killed_path(&p, &x0, 1e-3, 400.0, &mut s, None).unwrap().exit_time.expect("path outlived the horizon")
        })
        .collect();
    let m = mean_estimate(&times).estimate;
    let target = 1.0 / e.lambda0;
    assert!(((m - target) / target).abs() <= 0.10, "mean exit {m} vs 1/λ0 {target}");
}

#[test]
fn one_point_shared_noise_is_a_single_path() {
    let p = builtin("tilted_double_well_1d", 0.5);
    let est = shared_noise_survival(&p, &[vec![0.0]], 1e-3, 2.0, 17, 4000).unwrap();
    let alone = 1.0 - survival_frequency(&p, 0.0, 1e-3, 2.0, 4000, 17);
    assert_eq!(est.estimate, alone);
}

#[test]
fn shared_noise_exit_probability_falls_with_temperature() {
    let p_hot = builtin("tilted_double_well_1d", 0.5);
    let p_cold = builtin("tilted_double_well_1d", 0.25);
    let (lo, hi) = p_hot.domain().bounding_box();
    let (a, b) = (0.9 * lo[0] + 0.1 * hi[0], 0.1 * lo[0] + 0.9 * hi[0]);
    let grid: Vec<Vec<f64>> = (0..64).map(|i| vec![a + (b - a) * i as f64 / 63.0]).collect();
    let hot = shared_noise_survival(&p_hot, &grid, 1e-3, 5.0, 21, 200).unwrap();
    let cold = shared_noise_survival(&p_cold, &grid, 1e-3, 5.0, 21, 200).unwrap();
    assert!(cold.estimate < hot.estimate, "{} vs {}", cold.estimate, hot.estimate);
}
