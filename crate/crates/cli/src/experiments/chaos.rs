use fvqsd_core::fv::{run_until, FvConfig, FvStreams, SystemState};
use fvqsd_core::oracle::{build_operator, BackwardEvaluator};
use fvqsd_core::stats::{empirical_measure, loglog_slope, mean_estimate};
use fvqsd_core::Result;
use rayon::prelude::*;
use serde_json::json;

use super::{potential_at, replica_base, start_point, Csv, Outcome, Verdict};
use crate::config::ExperimentConfig;
use crate::fields;

/// The observable `f = 1{x₀ < 0}`.
fn left_indicator(x: &[f64]) -> f64 {
    if x[0] < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `|π^N_t(f) − E_{π^N_0}(f(X_t) | τ > t)|` over replicas, for each N and t.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = potential_at(cfg, cfg.epsilon)?;
    let g = build_operator(&p, cfg.oracle_resolution)?;
    let x0 = start_point(&p, &cfg.x_start)?;
    // π^N(X_0) is the same point mass for every N.
    let mu0 = g.histogram_density(&x0);
    let oracle: Vec<f64> = cfg
        .times
        .iter()
        .map(|&t| Ok(BackwardEvaluator::new(&g, left_indicator, t)?.conditioned_expectation(&mu0)))
        .collect::<Result<_>>()?;

    let mut errors_csv = Csv::new("n_particles,time,replica,empirical,oracle,error");
    let mut summary_csv = Csv::new("n_particles,time,mean_error,stderr,replicas");
    // mean_err[k][j]: N index k, time index j.
    let mut mean_err = Vec::new();
    for (k, &n) in cfg.n_particles.iter().enumerate() {
        let runs: Vec<Vec<f64>> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let fv = FvConfig::new(n, cfg.dt, cfg.seed, replica_base(k) + r as u64)?;
                let mut s = SystemState::new(&vec![x0.clone(); n])?;
                let mut streams = FvStreams::new(&fv, &s);
                cfg.times
                    .iter()
                    .map(|&t| {
                        run_until(&p, &mut s, &fv, &mut streams, t, &mut [])?;
                        Ok(empirical_measure(&s).integrate(left_indicator))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mut per_t = Vec::new();
        for (j, &t) in cfg.times.iter().enumerate() {
            let errs: Vec<f64> = runs.iter().map(|v| (v[j] - oracle[j]).abs()).collect();
            for (r, v) in runs.iter().enumerate() {
                errors_csv.row(fields![n, t, r, v[j], oracle[j], errs[r]]);
            }
            let e = mean_estimate(&errs);
            summary_csv.row(fields![n, t, e.estimate, e.stderr, e.replicas]);
            per_t.push(e.estimate);
        }
        mean_err.push(per_t);
    }

    let ns: Vec<f64> = cfg.n_particles.iter().map(|&n| n as f64).collect();
    let first: Vec<f64> = mean_err.iter().map(|v| v[0]).collect();
    let fit = loglog_slope(&ns, &first)?;
    let slope_thr = cfg.threshold("slope");
    let mut slope_csv = Csv::new("time,slope,stderr,lo95,hi95,points");
    slope_csv.row(fields![cfg.times[0], fit.slope, fit.stderr, fit.lo95, fit.hi95, fit.points]);
    let mut oracle_csv = Csv::new("time,oracle_conditioned_expectation");
    for (t, o) in cfg.times.iter().zip(&oracle) {
        oracle_csv.row(fields![t, o]);
    }

    let mut verdicts = vec![Verdict::new(
        "A4",
        fit.slope,
        slope_thr,
        fit.slope <= slope_thr && fit.hi95 < 0.0,
        format!("t = {}, 95% band [{:.4}, {:.4}]", cfg.times[0], fit.lo95, fit.hi95),
    )];
    let mut growth = None;
    if cfg.times.len() > 1 {
        let last = mean_err.last().expect("non-empty sweep");
        let ratio = last[cfg.times.len() - 1] / last[0];
        let thr = cfg.threshold("growth");
        let n_max = cfg.n_particles[cfg.n_particles.len() - 1];
        verdicts.push(Verdict::new(
            "A5",
            ratio,
            thr,
            ratio <= thr,
            format!("N = {n_max}: error at t = {} over error at t = {}", cfg.times[cfg.times.len() - 1], cfg.times[0]),
        ));
        growth = Some(ratio);
    }
    Ok(Outcome {
        artifacts: vec![
            errors_csv.done("chaos_errors.csv"),
            summary_csv.done("chaos_summary.csv"),
            slope_csv.done("slope.csv"),
            oracle_csv.done("oracle.csv"),
        ],
        verdicts,
        summary: json!({
            "oracle": oracle,
            "mean_errors": mean_err,
            "slope": fit,
            "growth_ratio": growth,
        }),
    })
}
