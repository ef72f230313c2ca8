use fvqsd_core::potential::{critical_height, PotentialSpec};
use fvqsd_core::sde::shared_noise_survival;
use fvqsd_core::stats::mean_estimate;
use fvqsd_core::{Error, Result};
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{potential_at, Csv, Outcome, Verdict};
use crate::config::ExperimentConfig;
use crate::fields;

/// Shared-noise exit probability `p̄` at a cold and a hot ε with common random
/// numbers, compared through the paired replication differences. Initial
/// points fill `{U ≤ a}`, the complement of the collar `B₁ = {U > a}`, with
/// `a` placed at `grid_level` inside `(c*, U_0)`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (cold_eps, hot_eps) = (cfg.epsilons[0], cfg.epsilons[1]);
    let cold_p = potential_at(cfg, cold_eps)?;
    let hot_p = potential_at(cfg, hot_eps)?;
    let res = if cold_p.dim() == 1 { 2048 } else { 128 };
    let ch = critical_height(&cold_p, res)?;
    let a = ch.a_window.0 + cfg.grid_level * (ch.a_window.1 - ch.a_window.0);
    let grid = sublevel_grid(&cold_p, cfg.grid_points, a)?;
    let horizon = |eps: f64| if cfg.arrhenius_horizon { (a / eps).exp() } else { cfg.horizon };
    let (cold_h, hot_h) = (horizon(cold_eps), horizon(hot_eps));
    let cold = shared_noise_survival(&cold_p, &grid, cfg.dt, cold_h, cfg.seed, cfg.replicas)?;
    let hot = shared_noise_survival(&hot_p, &grid, cfg.dt, hot_h, cfg.seed, cfg.replicas)?;

    let diffs: Vec<f64> = hot
        .indicators
        .iter()
        .zip(&cold.indicators)
        .map(|(&h, &c)| f64::from(u8::from(h)) - f64::from(u8::from(c)))
        .collect();
    let d = mean_estimate(&diffs);
    let conf = cfg.threshold("confidence");
    let z = Normal::standard().inverse_cdf(conf);
    let lower = d.estimate - z * d.stderr;

    let mut reps = Csv::new("replica,cold_exit,hot_exit");
    for (r, (c, h)) in cold.indicators.iter().zip(&hot.indicators).enumerate() {
        reps.row(fields![r, u8::from(*c), u8::from(*h)]);
    }
    let mut est = Csv::new("epsilon,horizon,estimate,stderr,replicas,grid_points,level");
    for (eps, h, e) in [(cold_eps, cold_h, &cold), (hot_eps, hot_h, &hot)] {
        est.row(fields![eps, h, e.estimate, e.stderr, e.replicas, e.grid_points, a]);
    }
    let mut grid_csv = Csv::new(&(0..cold_p.dim()).map(|k| format!("x{k}")).collect::<Vec<_>>().join(","));
    for x in &grid {
        grid_csv.row(&x.iter().map(|v| v.to_string()).collect::<Vec<_>>());
    }

    let pass = cold.estimate < hot.estimate && lower > 0.0;
    Ok(Outcome {
        artifacts: vec![est.done("survival_estimates.csv"), reps.done("paired_indicators.csv"), grid_csv.done("grid.csv")],
        verdicts: vec![Verdict::new(
            "A8",
            lower,
            0.0,
            pass,
            format!(
                "p(eps={cold_eps}) = {:.4}, p(eps={hot_eps}) = {:.4}, one-sided {conf} lower bound on the difference",
                cold.estimate, hot.estimate
            ),
        )],
        summary: json!({
            "level": a,
            "c_star": ch.c_star,
            "grid_points": grid.len(),
            "cold": { "epsilon": cold_eps, "horizon": cold_h, "estimate": cold.estimate, "stderr": cold.stderr },
            "hot": { "epsilon": hot_eps, "horizon": hot_h, "estimate": hot.estimate, "stderr": hot.stderr },
            "difference": d,
            "lower_bound": lower,
        }),
    })
}

/// Cell centres of a `points`-per-axis tensor grid over the bounding box,
/// kept where `x ∈ D` and `U(x) ≤ level`.
pub(crate) fn sublevel_grid(p: &PotentialSpec, points: usize, level: f64) -> Result<Vec<Vec<f64>>> {
    let (lo, hi) = p.domain().bounding_box();
    let d = p.dim();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let x: Vec<f64> = (0..d).map(|k| lo[k] + (hi[k] - lo[k]) * (idx[k] as f64 + 0.5) / points as f64).collect();
        if p.domain().inside(&x) && p.u(&x) <= level {
            out.push(x);
        }
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no grid point has U ≤ {level}")));
    }
    Ok(out)
}
