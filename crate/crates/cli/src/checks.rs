//! Fixed-setting checks that are not experiments of their own: the analytic
//! oracle test, coupling marginals, the Dynkin residual, and the numerical
//! self-test of a configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use fvqsd_core::coupling::{build_lyapunov, coupled_fv_step, CoupledState};
use fvqsd_core::fv::{fv_step, run_until, DynkinRecorder, FvConfig, FvStreams, Observer, SystemState};
use fvqsd_core::oracle::{build_operator, principal_eigenpair};
use fvqsd_core::potential::{builtin_potential, flat_interval};
use fvqsd_core::sde::{simulate_killed_path, ParticleStreams};
use fvqsd_core::stats::mean_estimate;
use fvqsd_core::Result;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::experiments::{potential_at, Verdict};

/// `U ≡ 0`, ε = 1 on (0, π): `λ₀ = 1` and the QSD density is `sin(x)/2`.
pub fn oracle_analytic() -> Result<Vec<Verdict>> {
    let g = build_operator(&flat_interval(0.0, PI, 1.0)?, 2048)?;
    let e = principal_eigenpair(&g)?;
    let lambda_err = (e.lambda0 - 1.0).abs();
    let density_err = (0..g.n()).map(|i| (e.qsd_density[i] - g.node(i)[0].sin() / 2.0).abs()).fold(0.0, f64::max);
    Ok(vec![
        Verdict::new("A2/lambda0", lambda_err, 1e-4, lambda_err <= 1e-4, format!("lambda0 = {}", e.lambda0)),
        Verdict::new("A2/density", density_err, 1e-4, density_err <= 1e-4, "max-norm error against sin(x)/2"),
    ])
}

fn spread(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![lo + (hi - lo) * (i as f64 + 0.5) / n as f64]).collect()
}

/// Steps a coupled pair and a standalone system side by side and counts the
/// steps where X differs from the standalone run in any bit.
pub fn coupling_marginal(steps: usize) -> Result<Vec<Verdict>> {
    let p = builtin_potential("tilted_double_well_1d", &BTreeMap::new(), 0.5)?;
    let n = 50;
    let (lo, hi) = p.domain().bounding_box();
    let (a, b) = (lo[0] + 0.05, hi[0] - 0.05);
    let cfg = FvConfig::new(n, 1e-3, 7, 0)?;
    let x0 = SystemState::new(&spread(a, b, n))?;
    let y0 = SystemState::new(&spread(a, 0.5 * (a + b), n))?;
    let mut cs = CoupledState::new(&cfg, x0.clone(), y0)?;
    let mut solo = x0;
    let mut streams = FvStreams::new(&cfg, &solo);
    let mut mismatched = 0usize;
    let mut rebirths = 0usize;
    for _ in 0..steps {
        let report = coupled_fv_step(&mut cs, &p, &cfg)?;
        let events = fv_step(&p, &mut solo, &cfg, &mut streams)?;
        rebirths += events.len();
        let same = cs.sys_x.positions().iter().zip(solo.positions()).all(|(x, y)| x.to_bits() == y.to_bits())
            && cs.sys_x.labels() == solo.labels()
            && cs.sys_x.rebirth_counts() == solo.rebirth_counts()
            && report.x_events.len() == events.len();
        if !same {
            mismatched += 1;
        }
    }
    Ok(vec![Verdict::new(
        "A9",
        mismatched as f64,
        0.0,
        mismatched == 0,
        format!("{steps} steps, N = {n}, {rebirths} rebirths in X"),
    )])
}

/// Mean Dynkin residual at t = 1 over independent replicas.
pub fn dynkin_residual(replicas: usize) -> Result<Vec<Verdict>> {
    let p = builtin_potential("tilted_double_well_1d", &BTreeMap::new(), 0.5)?;
    let lv = build_lyapunov(&p, None, None, 1024)?;
    let n = 50;
    let (lo, hi) = p.domain().bounding_box();
    let (c, w) = (0.5 * (lo[0] + hi[0]), 0.475 * (hi[0] - lo[0]));
    let x0 = spread(c - w, c + w, n);
    let runs: Vec<(f64, usize)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = FvConfig::new(n, 1e-3, 31, r)?;
            let mut s = SystemState::new(&x0)?;
            let mut streams = FvStreams::new(&cfg, &s);
            let mut rec = DynkinRecorder::new(&p, &s, lv.clone());
            run_until(&p, &mut s, &cfg, &mut streams, 1.0, &mut [&mut rec as &mut dyn Observer])?;
            Ok((rec.residual(), rec.resurrections()))
        })
        .collect::<Result<_>>()?;
    let residuals: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let jumps: usize = runs.iter().map(|r| r.1).sum();
    let m = mean_estimate(&residuals);
    let bound = 3.0 * m.stderr;
    Ok(vec![Verdict::new(
        "A11",
        m.estimate.abs(),
        bound,
        m.estimate.abs() <= bound,
        format!("{replicas} replicas, N = {n}, {jumps} resurrections"),
    )])
}

/// Discretization checks for a configuration: the oracle eigenvalue under
/// mesh doubling, and single-path survival under halving of dt.
pub fn self_test(cfg: &ExperimentConfig) -> Result<Vec<Verdict>> {
    let eps = cfg.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let p = potential_at(cfg, eps)?;
    let res = cfg.oracle_resolution;
    let coarse = principal_eigenpair(&build_operator(&p, res)?)?.lambda0;
    let fine = principal_eigenpair(&build_operator(&p, 2 * res)?)?.lambda0;
    let mesh = (coarse - fine).abs() / fine;

    let (lo, hi) = p.domain().bounding_box();
    let starts = spread(lo[0] + 0.05 * (hi[0] - lo[0]), hi[0] - 0.05 * (hi[0] - lo[0]), 64);
    let starts: Vec<Vec<f64>> = if p.dim() == 1 {
        starts
    } else {
        // Along the first axis through the centre of the box.
        let centre: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        starts
            .into_iter()
            .map(|x| {
                let mut c = centre.clone();
                c[0] = 0.5 * (x[0] + centre[0]);
                c
            })
            .collect()
    };
    let paths = 4000;
    let survival = |dt: f64, epoch: u64| -> Result<(f64, f64)> {
        let alive: Vec<f64> = (0..paths)
            .into_par_iter()
            .map(|r| {
                let mut streams = ParticleStreams::new(cfg.seed, r as u64, 0, epoch);
                let x0 = &starts[r % starts.len()];
                Ok(if simulate_killed_path(&p, x0, dt, 1.0, &mut streams, None)?.survived() { 1.0 } else { 0.0 })
            })
            .collect::<Result<_>>()?;
        let e = mean_estimate(&alive);
        Ok((e.estimate, e.stderr))
    };
    let (s1, e1) = survival(cfg.dt, 0)?;
    let (s2, e2) = survival(0.5 * cfg.dt, 1)?;
    let diff = (s1 - s2).abs();
    let bound = 3.0 * (e1 * e1 + e2 * e2).sqrt();
    Ok(vec![
        Verdict::new(
            "self_test/mesh_doubling",
            mesh,
            5e-3,
            mesh <= 5e-3,
            format!("lambda0 {coarse} at {res}, {fine} at {}", 2 * res),
        ),
        Verdict::new(
            "self_test/dt_halving",
            diff,
            bound,
            diff <= bound,
            format!("survival to t = 1: {s1:.4} at dt = {}, {s2:.4} at dt = {}", cfg.dt, 0.5 * cfg.dt),
        ),
    ])
}
