use fvqsd_core::coupling::{build_lyapunov, LyapunovSpec};
use fvqsd_core::fv::{run_until, FvConfig, FvStreams, Observer, RebirthEvent, SystemState};
use fvqsd_core::potential::PotentialSpec;
use fvqsd_core::sde::{Purpose, RngStream, StreamId};
use fvqsd_core::stats::mean_estimate;
use fvqsd_core::{Error, Result};
use rayon::prelude::*;
use serde_json::json;

use super::{potential_at, Csv, Outcome, Verdict};
use crate::config::ExperimentConfig;
use crate::fields;

/// Particle id of the stream that places the initial configuration; FV labels
/// never reach it.
const PLACEMENT_STREAM: u64 = u64::MAX;

struct MeanV {
    lyapunov: LyapunovSpec,
    cadence: usize,
    rows: Vec<(f64, f64)>,
}

impl Observer for MeanV {
    fn cadence(&self) -> usize {
        self.cadence
    }
    fn observe(&mut self, p: &PotentialSpec, s: &SystemState, _: &[RebirthEvent]) {
        self.rows.push((s.time(), mean_v(p, s, &self.lyapunov)));
    }
}

fn mean_v(p: &PotentialSpec, s: &SystemState, lv: &LyapunovSpec) -> f64 {
    (0..s.n()).map(|i| lv.value(p, s.position(i))).sum::<f64>() / s.n() as f64
}

/// Uniform draws from `{V > 3C₁}` by rejection from the bounding box.
fn collar_start(p: &PotentialSpec, lv: &LyapunovSpec, n: usize, seed: u64, replica: u64) -> Result<SystemState> {
    let (lo, hi) = p.domain().bounding_box();
    let mut rng = RngStream::new(seed, StreamId::new(replica, PLACEMENT_STREAM, 0, Purpose::Diffusion));
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 1000 * n + 100_000 {
            return Err(Error::Domain("could not place particles in the collar".into()));
        }
        let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.next_uniform()).collect();
        if p.domain().inside(&x) && lv.in_collar(p, &x) {
            out.push(x);
        }
    }
    SystemState::new(&out)
}

/// Mean `V` over particles started in the collar, recorded every `cadence`
/// steps up to the block time.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = potential_at(cfg, cfg.epsilon)?;
    let lv = build_lyapunov(&p, None, None, 1024)?;
    let n = cfg.n_particles[0];
    let paths: Vec<Vec<(f64, f64)>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut s = collar_start(&p, &lv, n, cfg.seed, r as u64)?;
            let fv = FvConfig::new(n, cfg.dt, cfg.seed, r as u64)?;
            let mut streams = FvStreams::new(&fv, &s);
            let mut obs = MeanV { lyapunov: lv.clone(), cadence: cfg.cadence, rows: vec![(0.0, mean_v(&p, &s, &lv))] };
            run_until(&p, &mut s, &fv, &mut streams, cfg.block_time, &mut [&mut obs as &mut dyn Observer])?;
            Ok(obs.rows)
        })
        .collect::<Result<_>>()?;

    let points = paths[0].len();
    let mut curve = Csv::new("time,mean_v,stderr,replicas");
    let mut means = Vec::with_capacity(points);
    for j in 0..points {
        let e = mean_estimate(&paths.iter().map(|rows| rows[j].1).collect::<Vec<_>>());
        curve.row(fields![paths[0][j].0, e.estimate, e.stderr, e.replicas]);
        means.push((paths[0][j].0, e.estimate));
    }
    // Largest standardized increase between consecutive records, using the
    // paired per-replica differences. The bound `E V(X_t) ≤ γV(x) + C₁(1 − γ)`
    // only forces a decrease while the mean is above `C₁`; below it the mean
    // relaxes upwards to its stationary value.
    let mut max_z = f64::NEG_INFINITY;
    let mut worst_time = 0.0;
    let mut compared = 0usize;
    for j in (1..points).filter(|&j| means[j - 1].1 > lv.c1) {
        compared += 1;
        let d = mean_estimate(&paths.iter().map(|rows| rows[j].1 - rows[j - 1].1).collect::<Vec<_>>());
        let z = if d.stderr > 0.0 {
            d.estimate / d.stderr
        } else if d.estimate > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        if z > max_z {
            max_z = z;
            worst_time = paths[0][j].0;
        }
    }
    let level = cfg.threshold("level_factor") * lv.c1;
    let hit = means.iter().find(|(_, m)| *m < level).map(|&(t, _)| t);
    let sigmas = cfg.threshold("sigmas");
    let mut replica_csv = Csv::new("replica,time,mean_v");
    for (r, rows) in paths.iter().enumerate() {
        for (t, m) in rows {
            replica_csv.row(fields![r, t, m]);
        }
    }
    let verdicts = vec![
        Verdict::new("A10/monotone", max_z, sigmas, max_z <= sigmas, format!("largest standardized increase at t = {worst_time} over {compared} steps with mean V > C1")),
        Verdict::new(
            "A10/level",
            hit.unwrap_or(f64::INFINITY),
            cfg.block_time,
            hit.is_some_and(|t| t <= cfg.block_time),
            format!("first time mean V < {level:.4}"),
        ),
    ];
    Ok(Outcome {
        artifacts: vec![curve.done("mean_v.csv"), replica_csv.done("mean_v_replicas.csv")],
        verdicts,
        summary: json!({
            "c1": lv.c1,
            "collar_threshold": lv.collar_threshold(),
            "initial_mean_v": means[0].1,
            "final_mean_v": means[points - 1].1,
            "level_time": hit,
            "max_increase_z": max_z,
            "monotone_steps_compared": compared,
        }),
    })
}
