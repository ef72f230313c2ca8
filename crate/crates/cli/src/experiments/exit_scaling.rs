use fvqsd_core::oracle::{build_operator, principal_eigenpair};
use fvqsd_core::sde::{simulate_killed_path, ParticleStreams};
use fvqsd_core::stats::{linear_fit, mean_estimate, SlopeFit};
use fvqsd_core::Result;
use rayon::prelude::*;
use serde_json::json;

use super::{potential_at, start_point, Csv, Outcome, Verdict};
use crate::config::ExperimentConfig;
use crate::fields;

/// Mean single-particle exit time and oracle `1/λ₀` across ε, each fitted as
/// `ln T = a + slope/ε`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut table = Csv::new("epsilon,mean_exit_time,stderr,paths,censored,lambda0,inverse_lambda0");
    let mut inv_eps = Vec::new();
    let mut ln_mc = Vec::new();
    let mut ln_oracle = Vec::new();
    let mut barrier = f64::NAN;
    for (k, &eps) in cfg.epsilons.iter().enumerate() {
        let p = potential_at(cfg, eps)?;
        let x0 = start_point(&p, &cfg.x_start)?;
        barrier = p.boundary_level() - p.u(&x0);
        let lambda0 = principal_eigenpair(&build_operator(&p, cfg.oracle_resolution)?)?.lambda0;
        let results: Vec<Option<f64>> = (0..cfg.paths)
            .into_par_iter()
            .map(|r| {
                let mut streams = ParticleStreams::new(cfg.seed, r as u64, k as u64, 0);
                Ok(simulate_killed_path(&p, &x0, cfg.dt, cfg.horizon, &mut streams, None)?.exit_time)
            })
            .collect::<Result<_>>()?;
        let censored = results.iter().filter(|t| t.is_none()).count();
        // Censored paths enter at the horizon, biasing the mean low.
        let times: Vec<f64> = results.iter().map(|t| t.unwrap_or(cfg.horizon)).collect();
        let e = mean_estimate(&times);
        table.row(fields![eps, e.estimate, e.stderr, cfg.paths, censored, lambda0, 1.0 / lambda0]);
        inv_eps.push(1.0 / eps);
        ln_mc.push(e.estimate.ln());
        ln_oracle.push(-lambda0.ln());
    }
    let mc = linear_fit(&inv_eps, &ln_mc)?;
    let oracle = linear_fit(&inv_eps, &ln_oracle)?;
    let mut fits = Csv::new("source,slope,intercept,stderr,lo95,hi95,barrier");
    for (name, f) in [("monte_carlo", &mc), ("oracle", &oracle)] {
        fits.row(fields![name, f.slope, f.intercept, f.stderr, f.lo95, f.hi95, barrier]);
    }

    let tol = cfg.threshold("slope_tolerance");
    let agree_thr = cfg.threshold("agreement");
    let rel = |f: &SlopeFit| (f.slope / barrier - 1.0).abs();
    let agreement = (mc.slope - oracle.slope).abs() / oracle.slope.abs();
    let verdicts = vec![
        Verdict::new("A7/monte_carlo_slope", rel(&mc), tol, rel(&mc) <= tol, format!("slope {:.4}, barrier {barrier}", mc.slope)),
        Verdict::new(
            "A7/oracle_slope",
            rel(&oracle),
            tol,
            rel(&oracle) <= tol,
            format!("slope {:.4}, barrier {barrier}", oracle.slope),
        ),
        Verdict::new("A7/agreement", agreement, agree_thr, agreement <= agree_thr, "relative slope difference"),
    ];
    Ok(Outcome {
        artifacts: vec![table.done("exit_times.csv"), fits.done("slopes.csv")],
        verdicts,
        summary: json!({ "barrier": barrier, "monte_carlo_fit": mc, "oracle_fit": oracle }),
    })
}
