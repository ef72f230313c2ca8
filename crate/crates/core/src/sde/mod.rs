mod rng;

use std::io::Write;

use serde::Serialize;

pub use rng::{Purpose, RngStream, StreamId};

use crate::error::{Error, Result};
use crate::potential::PotentialSpec;

/// Diffusion and bridge streams of one particle for one rebirth epoch.
#[derive(Clone, Debug)]
pub struct ParticleStreams {
    pub diffusion: RngStream,
    pub bridge: RngStream,
}

impl ParticleStreams {
    pub fn new(seed: u64, replica: u64, particle: u64, epoch: u64) -> Self {
        ParticleStreams {
            diffusion: RngStream::new(seed, StreamId::new(replica, particle, epoch, Purpose::Diffusion)),
            bridge: RngStream::new(seed, StreamId::new(replica, particle, epoch, Purpose::Bridge)),
        }
    }
}

/// One Euler–Maruyama step of `dX = −∇U dt + √(2ε) dB`. The result may lie
/// outside `D`.
pub fn em_step(p: &PotentialSpec, x: &[f64], dt: f64, noise: &[f64]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    em_step_into(p, x, dt, noise, &mut grad, &mut out)?;
    Ok(out)
}

/// Allocation-free [`em_step`]; `grad` is scratch.
#[inline]
pub fn em_step_into(
    p: &PotentialSpec,
    x: &[f64],
    dt: f64,
    noise: &[f64],
    grad: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    p.grad_u(x, grad);
    let sigma = (2.0 * p.epsilon() * dt).sqrt();
    for k in 0..x.len() {
        out[k] = x[k] - grad[k] * dt + sigma * noise[k];
        if !out[k].is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite Euler–Maruyama update from x={:?} with noise {:?}",
                x, noise
            )));
        }
    }
    Ok(())
}

/// Brownian-bridge probability that the continuous path crossed `∂D` during a
/// step from `x_start` to `x_end`, using the half-space of the nearest face.
pub fn exit_probability_bridge(p: &PotentialSpec, x_start: &[f64], x_end: &[f64], dt: f64) -> f64 {
    let dom = p.domain();
    if !dom.inside(x_start) || !dom.inside(x_end) {
        return 1.0;
    }
    let (ds, de) = dom.face_distances(x_start, x_end);
    (-(ds * de) / (p.epsilon() * dt)).exp().clamp(0.0, 1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct KilledPathResult {
    /// `None` when the path survived to the horizon.
    pub exit_time: Option<f64>,
    /// `Some` iff the path survived.
    pub final_position: Option<Vec<f64>>,
    pub path_summary: Option<Vec<(f64, Vec<f64>)>>,
    pub steps: usize,
}

impl KilledPathResult {
    pub fn survived(&self) -> bool {
        self.exit_time.is_none()
    }
}

/// Number of steps covering `[0, horizon]` and the length of the last one.
pub(crate) fn step_schedule(dt: f64, horizon: f64) -> (usize, f64) {
    if horizon <= 0.0 {
        return (0, dt);
    }
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let last = horizon - (steps - 1) as f64 * dt;
    (steps, last)
}

/// Simulates the killed diffusion from `x0` until exit or `horizon`. Each step
/// consumes `d` normals from the diffusion stream and one uniform from the
/// bridge stream; the last step is shortened to end exactly at `horizon`.
/// Exit times are reported at the end of the killing step. With
/// `record_every = Some(k)` every k-th position (and the last) is kept.
pub fn simulate_killed_path(
    p: &PotentialSpec,
    x0: &[f64],
    dt: f64,
    horizon: f64,
    streams: &mut ParticleStreams,
    record_every: Option<usize>,
) -> Result<KilledPathResult> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be non-negative, got {horizon}")));
    }
    if x0.len() != p.dim() || !p.domain().inside(x0) {
        return Err(Error::Domain(format!("initial point {x0:?} is not inside the domain")));
    }
    if record_every == Some(0) {
        return Err(Error::Config("record_every must be positive".into()));
    }
    let d = p.dim();
    let (steps, last) = step_schedule(dt, horizon);
    let mut x = x0.to_vec();
    let mut y = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut summary = record_every.map(|_| vec![(0.0, x.clone())]);
    for k in 1..=steps {
        let h = if k == steps { last } else { dt };
        let t = if k == steps { horizon } else { k as f64 * dt };
        streams.diffusion.fill_normal(&mut noise);
        em_step_into(p, &x, h, &noise, &mut grad, &mut y)?;
        let u = streams.bridge.next_uniform();
        if u < exit_probability_bridge(p, &x, &y, h) {
            if let Some(s) = summary.as_mut() {
                s.push((t, y.clone()));
            }
            return Ok(KilledPathResult { exit_time: Some(t), final_position: None, path_summary: summary, steps: k });
        }
        std::mem::swap(&mut x, &mut y);
        if let (Some(s), Some(every)) = (summary.as_mut(), record_every) {
            if k % every == 0 || k == steps {
                s.push((t, x.clone()));
            }
        }
    }
    Ok(KilledPathResult { exit_time: None, final_position: Some(x), path_summary: summary, steps })
}

/// Writes `(time, x0, x1, ...)` rows.
pub fn write_path_csv<W: Write>(mut w: W, summary: &[(f64, Vec<f64>)]) -> Result<()> {
    let d = summary.first().map_or(0, |(_, x)| x.len());
    let cols: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    writeln!(w, "time,{}", cols.join(","))?;
    for (t, x) in summary {
        let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{t},{}", xs.join(","))?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SharedNoiseEstimate {
    /// Fraction of replications in which some grid path exited.
    pub estimate: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub grid_points: usize,
    pub indicators: Vec<bool>,
}

/// Estimates `P(∃x in grid: τ(X^x) < horizon)` where, within a replication,
/// every initial condition is driven by the same noise and bridge uniforms.
/// Replication `r` uses the streams of particle 0 of replica `r`, so a single
/// grid point reproduces [`simulate_killed_path`] exactly.
pub fn shared_noise_survival(
    p: &PotentialSpec,
    grid: &[Vec<f64>],
    dt: f64,
    horizon: f64,
    seed: u64,
    replicas: usize,
) -> Result<SharedNoiseEstimate> {
    if grid.is_empty() {
        return Err(Error::Config("shared-noise grid is empty".into()));
    }
    if replicas == 0 {
        return Err(Error::Config("replicas must be positive".into()));
    }
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::Config(format!("need dt > 0 and horizon ≥ 0, got dt={dt}, horizon={horizon}")));
    }
    if let Some(x) = grid.iter().find(|x| x.len() != p.dim() || !p.domain().inside(x)) {
        return Err(Error::Domain(format!("grid point {x:?} is not inside the domain")));
    }
    let d = p.dim();
    let (steps, last) = step_schedule(dt, horizon);
    let mut indicators = Vec::with_capacity(replicas);
    let mut xs: Vec<f64> = grid.iter().flatten().copied().collect();
    let mut y = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let mut grad = vec![0.0; d];
    for r in 0..replicas {
        xs.clear();
        xs.extend(grid.iter().flatten());
        let mut streams = ParticleStreams::new(seed, r as u64, 0, 0);
        let mut exited = false;
        'steps: for k in 1..=steps {
            let h = if k == steps { last } else { dt };
            streams.diffusion.fill_normal(&mut noise);
            let u = streams.bridge.next_uniform();
            for x in xs.chunks_exact_mut(d) {
                em_step_into(p, x, h, &noise, &mut grad, &mut y)?;
                if u < exit_probability_bridge(p, x, &y, h) {
                    exited = true;
                    break 'steps;
                }
                x.copy_from_slice(&y);
            }
        }
        indicators.push(exited);
    }
    let m = replicas as f64;
    let estimate = indicators.iter().filter(|&&b| b).count() as f64 / m;
    let stderr = if replicas > 1 { (estimate * (1.0 - estimate) / (m - 1.0)).sqrt() } else { 0.0 };
    Ok(SharedNoiseEstimate { estimate, stderr, replicas, grid_points: grid.len(), indicators })
}
