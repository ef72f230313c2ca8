use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::fv::{fv_step, FvConfig, FvStreams, SystemState};
use crate::potential::{builtin_potential, PotentialSpec};

fn builtin(name: &str, eps: f64) -> PotentialSpec {
    builtin_potential(name, &BTreeMap::new(), eps).unwrap()
}

fn line(xs: &[f64]) -> SystemState {
    SystemState::new(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
}

fn dw_setup() -> (PotentialSpec, LyapunovSpec, DistanceParams) {
    let p = builtin("double_well_1d", 0.5);
    let lv = build_lyapunov(&p, None, None, 1024).unwrap();
    let dp = DistanceParams::new(0.1, 0.01, lv.v0, 1.0).unwrap();
    (p, lv, dp)
}

#[test]
fn distance_literal_cases() {
    let (p, lv, dp) = dw_setup();
    let x = line(&[-1.0, 0.5, 1.0, 1.2]);
    assert_eq!(distance_d(&p, &x, &x, &lv, &dp), 0.0);
    let y = line(&[-1.0, 0.3, 1.0, 1.2]);
    let expected = 1.0 + 0.01 * (lv.value(&p, &[0.5]) + lv.value(&p, &[0.3]));
    assert_eq!(distance_d(&p, &x, &y, &lv, &dp), expected);

    // Every particle in B for both systems: A = 4 > αN = 0.4.
    let hx = line(&[-1.99, 1.99, 1.985, -1.985]);
    let hy = line(&[-1.99, 1.99, 1.985, -1.98]);
    let sum = 1.0 + 0.01 * (lv.value(&p, &[-1.985]) + lv.value(&p, &[-1.98]));
    assert!((distance_d(&p, &hx, &hy, &lv, &dp) - (sum + 2.0 * (1.0 + 37.0) * 4.0)).abs() < 1e-9);
}

proptest! {
    #[test]
    fn distance_is_symmetric_and_dominates_mismatch_count(
        xs in proptest::collection::vec(-1.99f64..1.99, 5),
        ys in proptest::collection::vec(-1.99f64..1.99, 5),
        same in proptest::collection::vec(any::<bool>(), 5),
    ) {
        let (p, lv, dp) = dw_setup();
        let ys: Vec<f64> = ys.iter().zip(&xs).zip(&same).map(|((&y, &x), &s)| if s { x } else { y }).collect();
        let (sx, sy) = (line(&xs), line(&ys));
        let d = distance_d(&p, &sx, &sy, &lv, &dp);
        prop_assert_eq!(d, distance_d(&p, &sy, &sx, &lv, &dp));
        let mismatches = xs.iter().zip(&ys).filter(|(a, b)| a != b).count();
        prop_assert!(d >= mismatches as f64);
        prop_assert_eq!(d == 0.0, mismatches == 0);
    }
}

#[test]
fn distance_params_and_conditions() {
    let (_, lv, dp) = dw_setup();
    assert!(DistanceParams::new(0.25, 0.1, 37.0, 1.0).is_err());
    assert!(DistanceParams::new(0.1, 0.0, 37.0, 1.0).is_err());
    let c = dp.conditions(&lv);
    // min((1 + 0.105)/(1 + 0.1575), 0.105) + 0.1·(1 + 0.74)
    assert!((c.cond1_value - (0.105 + 0.174)).abs() < 1e-12);
    assert!((c.cond2_value - 1.74 / 38.0).abs() < 1e-12);
    assert!(c.cond1_pass && c.cond2_pass && c.cond1_informative);
    let bad = DistanceParams::new(0.1, 0.6, 37.0, 1.0).unwrap().conditions(&lv);
    assert!(!bad.cond2_pass);
}

#[test]
fn coupled_systems_stay_coupled_through_rebirths() {
    let p = builtin("quadratic_1d", 1.0);
    let cfg = FvConfig::new(6, 1e-3, 5, 0).unwrap();
    let s = line(&[-0.8, -0.3, 0.0, 0.2, 0.5, 0.9]);
    let mut cs = CoupledState::new(&cfg, s.clone(), s).unwrap();
    let mut rebirths = 0;
    for _ in 0..3000 {
        let r = coupled_fv_step(&mut cs, &p, &cfg).unwrap();
        assert!(cs.fully_coupled());
        assert_eq!(cs.sys_x, cs.sys_y);
        assert!(r.decoupled.is_empty() && r.merged.is_empty());
        assert_eq!(r.x_events, r.y_events);
        rebirths += r.x_events.len();
    }
    assert!(rebirths > 10);
}

#[test]
fn first_system_is_the_standalone_run() {
    let p = builtin("quadratic_1d", 0.5);
    let cfg = FvConfig::new(8, 1e-3, 8, 2).unwrap();
    let x0 = line(&[-0.8, -0.5, -0.3, 0.0, 0.2, 0.4, 0.6, 0.9]);
    let y0 = line(&[0.8, 0.5, 0.3, 0.0, -0.2, -0.4, -0.6, -0.9]);
    let mut cs = CoupledState::new(&cfg, x0.clone(), y0).unwrap();
    let mut solo = x0;
    let mut streams = FvStreams::new(&cfg, &solo);
    let mut decouplings = 0;
    for _ in 0..5000 {
        let r = coupled_fv_step(&mut cs, &p, &cfg).unwrap();
        let ev = fv_step(&p, &mut solo, &cfg, &mut streams).unwrap();
        assert_eq!(r.x_events, ev);
        assert_eq!(cs.sys_x, solo);
        decouplings += r.decoupled.len();
    }
    assert!(decouplings > 0);
}

#[test]
fn exit_of_a_coupled_pair_onto_a_decoupled_partner_decouples_it() {
    let p = builtin("quadratic_1d", 0.5);
    let trials = 10_000;
    let (mut exits, mut decouplings) = (0, 0);
    for r in 0..trials {
        let cfg = FvConfig::new(2, 1e-3, 3, r).unwrap();
        let mut cs = CoupledState::new(&cfg, line(&[0.97, 0.0]), line(&[0.97, 0.5])).unwrap();
        let rep = coupled_fv_step(&mut cs, &p, &cfg).unwrap();
        let x_exit = rep.x_events.iter().any(|e| e.particle == 0);
        let y_exit = rep.y_events.iter().any(|e| e.particle == 0);
        assert_eq!(x_exit, y_exit);
        exits += x_exit as usize;
        decouplings += rep.decoupled.contains(&0) as usize;
        if x_exit {
            assert_eq!(cs.sys_x.position(0), cs.sys_x.position(1));
            assert_eq!(cs.sys_y.position(0), cs.sys_y.position(1));
        }
    }
    assert!(exits > 100, "{exits}");
    assert_eq!(decouplings, exits);
}

#[test]
fn contraction_from_equal_states_is_identically_zero() {
    let (p, lv, dp) = dw_setup();
    let cfg = FvConfig::new(5, 1e-2, 1, 0).unwrap();
    let s = line(&[-1.0, -0.5, 0.0, 0.5, 1.0]);
    let r = contraction_experiment(&p, &lv, &dp, &cfg, &s, &s, 1.0, 30, 10).unwrap();
    assert!(r.mean_d.iter().all(|&d| d == 0.0));
    assert!(r.coupling_times.iter().all(|&t| t == Some(0.0)));
    assert_eq!(r.quantiles.median, Some(0.0));
    assert_eq!(r.times.len(), 11);
    assert!(matches!(contraction_experiment(&p, &lv, &dp, &cfg, &s, &s, 1.0, 29, 10), Err(Error::Config(_))));
}

#[test]
fn contraction_series_are_absorbed_at_zero() {
    let (p, lv, dp) = dw_setup();
    let cfg = FvConfig::new(4, 1e-2, 4, 0).unwrap();
    let x = line(&[-1.0; 4]);
    let y = line(&[1.0; 4]);
    let r = contraction_experiment(&p, &lv, &dp, &cfg, &x, &y, 30.0, 40, 50).unwrap();
    for (series, t) in r.d_series.iter().zip(&r.coupling_times) {
        if let Some(t) = t {
            let first = r.times.iter().position(|s| s >= t).unwrap();
            assert!(series[first..].iter().all(|&d| d == 0.0));
        }
    }
    assert!(r.mean_d.last().unwrap() < &r.mean_d[0]);
    assert!(r.quantiles.median.is_some());
    let mut buf = Vec::new();
    write_contraction_csv(&mut buf, &r).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("time,mean_d,lo95,hi95,frac_fully_coupled\n0,"));
}

#[test]
fn reflection_coupling_merges_free_diffusions() {
    let p = builtin("quadratic_1d", 0.5);
    let reps = 1000;
    let merged = (0..reps)
        .filter(|&r| free_reflection_merge_time(&p, &[-0.5], &[0.5], 1e-3, 5.0, 12, r).unwrap().is_some())
        .count();
    assert!(merged as f64 / reps as f64 > 0.9, "{merged}");
}

#[test]
fn quantiles_treat_uncoupled_runs_as_infinite() {
    let q = CouplingQuantiles::from_times(&[Some(1.0), Some(3.0), None, Some(2.0)]);
    assert_eq!(q.median, Some(2.0));
    assert_eq!(q.q75, Some(3.0));
    assert_eq!(q.q90, None);
    assert_eq!(q.fraction_coupled, 0.75);
}
