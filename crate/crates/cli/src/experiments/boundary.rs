use fvqsd_core::coupling::build_lyapunov;
use fvqsd_core::fv::{run_until, write_counts_csv, CountRecorder, FvConfig, FvStreams, Observer, SystemState};
use fvqsd_core::{Error, Result};
use serde_json::json;

use super::{potential_at, start_point, Artifact, Csv, Outcome, Verdict};
use crate::config::{ExperimentConfig, StartPoint};
use crate::fields;

struct CountRun {
    n: usize,
    rows: Vec<(f64, usize, u64)>,
    exceed: usize,
}

/// Frequency of `{A > αN}` over stationary snapshots, at N and at 2N with the
/// same seed and replica id.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = potential_at(cfg, cfg.epsilon)?;
    let lv = build_lyapunov(&p, None, None, 1024)?;
    let x0 = start_point(&p, &StartPoint::GlobalMin)?;
    let cadence = (cfg.snapshot_interval / cfg.dt).round() as usize;
    if cadence == 0 || ((cadence as f64) * cfg.dt - cfg.snapshot_interval).abs() > 1e-9 * cfg.snapshot_interval.max(1.0) {
        return Err(Error::Config(format!(
            "snapshot_interval = {} is not a positive multiple of dt = {}",
            cfg.snapshot_interval, cfg.dt
        )));
    }
    let n = cfg.n_particles[0];
    let run_one = |n: usize| -> Result<CountRun> {
        let fv = FvConfig::new(n, cfg.dt, cfg.seed, 0)?;
        let mut s = SystemState::new(&vec![x0.clone(); n])?;
        let mut streams = FvStreams::new(&fv, &s);
        run_until(&p, &mut s, &fv, &mut streams, cfg.burn_in, &mut [])?;
        let mut rec = CountRecorder::new(cadence, lv.clone());
        let t_end = cfg.burn_in + cfg.snapshots as f64 * cfg.snapshot_interval;
        run_until(&p, &mut s, &fv, &mut streams, t_end, &mut [&mut rec as &mut dyn Observer])?;
        let limit = cfg.alpha * n as f64;
        let exceed = rec.rows.iter().filter(|r| r.1 as f64 > limit).count();
        Ok(CountRun { n, rows: rec.rows, exceed })
    };
    let (single, double) = rayon::join(|| run_one(n), || run_one(2 * n));
    let runs = [single?, double?];
    let freq: Vec<f64> = runs.iter().map(|r| r.exceed as f64 / r.rows.len() as f64).collect();

    let mut artifacts = Vec::new();
    let mut summary_csv = Csv::new("n_particles,snapshots,exceedances,frequency,mean_A,max_A");
    for (r, f) in runs.iter().zip(&freq) {
        let mut bytes = Vec::new();
        write_counts_csv(&mut bytes, &r.rows)?;
        artifacts.push(Artifact { name: format!("counts_N{}.csv", r.n), bytes });
        let mean_a = r.rows.iter().map(|x| x.1 as f64).sum::<f64>() / r.rows.len() as f64;
        let max_a = r.rows.iter().map(|x| x.1).max().unwrap_or(0);
        summary_csv.row(fields![r.n, r.rows.len(), r.exceed, f, mean_a, max_a]);
    }
    artifacts.push(summary_csv.done("boundary_summary.csv"));

    let thr = cfg.threshold("frequency");
    // Both frequencies at zero counts as non-increasing.
    let decreases = freq[1] < freq[0] || (freq[0] == 0.0 && freq[1] == 0.0);
    let verdicts = vec![
        Verdict::new("A6/frequency", freq[0], thr, freq[0] < thr, format!("N = {n}, alpha = {}", cfg.alpha)),
        Verdict::new(
            "A6/doubling",
            freq[1],
            freq[0],
            decreases,
            format!("frequency at N = {} against N = {n}", 2 * n),
        ),
    ];
    Ok(Outcome {
        artifacts,
        verdicts,
        summary: json!({
            "frequency": freq,
            "collar_threshold": lv.collar_threshold(),
            "c1": lv.c1,
            "start": x0,
        }),
    })
}
