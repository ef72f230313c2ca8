use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{distance_d, DistanceParams, LyapunovSpec};
use crate::error::{Error, Result};
use crate::fv::{finish_step, propose, resolve, FvConfig, FvStreams, Proposal, RebirthEvent, SystemState};
use crate::potential::PotentialSpec;
use crate::sde::{em_step_into, exit_probability_bridge, ParticleStreams, Purpose, RngStream, StreamId};

/// Two FV systems on a common particle axis. `sys_x` evolves exactly as a
/// standalone run with the same streams; `sys_y` reuses its randomness:
///
/// * coupled pairs (`X^i = Y^i`) get identical noise and bridge uniforms and,
///   on exit, the same rebirth-index stream `(label, epoch of X, RebirthIndex)`;
/// * decoupled pairs get the noise of X reflected across the hyperplane
///   normal to `X^i − Y^i`, the bridge uniform of X, and rebirth draws from
///   `(label, epoch of Y, PairedRebirthIndex)`;
/// * after resolution, pairs closer than `√(2ε dt)` are merged (`Y^i := X^i`).
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub sys_x: SystemState,
    pub sys_y: SystemState,
    coupled_mask: Vec<bool>,
    x_streams: FvStreams,
    y_proposal: Proposal,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CoupledStepReport {
    pub x_events: Vec<RebirthEvent>,
    pub y_events: Vec<RebirthEvent>,
    /// Pairs equal before the step and different after resolution.
    pub decoupled: Vec<usize>,
    pub merged: Vec<usize>,
}

impl CoupledState {
    pub fn new(cfg: &FvConfig, sys_x: SystemState, sys_y: SystemState) -> Result<Self> {
        if sys_x.n() != sys_y.n() || sys_x.dim() != sys_y.dim() {
            return Err(Error::Config("coupled systems must have the same size and dimension".into()));
        }
        if sys_x.labels() != sys_y.labels() {
            return Err(Error::Config("coupled systems must share particle labels".into()));
        }
        let x_streams = FvStreams::new(cfg, &sys_x);
        let y_proposal = Proposal::new(sys_x.n(), sys_x.dim());
        let mut cs = CoupledState { sys_x, sys_y, coupled_mask: Vec::new(), x_streams, y_proposal };
        cs.refresh_mask();
        Ok(cs)
    }

    fn refresh_mask(&mut self) {
        self.coupled_mask = (0..self.sys_x.n()).map(|i| self.sys_x.position(i) == self.sys_y.position(i)).collect();
    }

    pub fn coupled_mask(&self) -> &[bool] {
        &self.coupled_mask
    }

    pub fn fully_coupled(&self) -> bool {
        self.coupled_mask.iter().all(|&c| c)
    }
}

/// One coupled step; see [`CoupledState`].
pub fn coupled_fv_step(cs: &mut CoupledState, p: &PotentialSpec, cfg: &FvConfig) -> Result<CoupledStepReport> {
    let d = cs.sys_x.dim();
    let n = cs.sys_x.n();
    let dt = cfg.dt;
    propose(p, &cs.sys_x, dt, &mut cs.x_streams)?;

    let xp = &cs.x_streams.proposal;
    let yp = &mut cs.y_proposal;
    for i in 0..n {
        let xi = cs.sys_x.position(i);
        let yi = cs.sys_y.position(i);
        let nx = &xp.noise[i * d..(i + 1) * d];
        let ny = &mut yp.noise[i * d..(i + 1) * d];
        ny.copy_from_slice(nx);
        if !cs.coupled_mask[i] {
            let diff: Vec<f64> = xi.iter().zip(yi).map(|(a, b)| a - b).collect();
            let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            let proj: f64 = diff.iter().zip(nx).map(|(e, z)| e * z).sum::<f64>() / norm;
            for k in 0..d {
                ny[k] -= 2.0 * proj * diff[k] / norm;
            }
        }
        let y_out = &mut yp.y[i * d..(i + 1) * d];
        em_step_into(p, yi, dt, ny, &mut yp.grad, y_out)?;
        yp.uniforms[i] = xp.uniforms[i];
        yp.exited[i] = yp.uniforms[i] < exit_probability_bridge(p, yi, y_out, dt);
    }

    // Y first: its coupled draws address X's pre-step epochs.
    let x_counts = cs.sys_x.rebirth_counts();
    let mask = &cs.coupled_mask;
    let mut open: Vec<(usize, RngStream)> = Vec::new();
    let (seed, replica) = (cfg.seed, cfg.replica_id);
    let y_events = resolve(&mut cs.sys_y, yp, dt, |i, label, epoch_y| {
        let idx = match open.iter().position(|(j, _)| *j == i) {
            Some(k) => k,
            None => {
                let id = if mask[i] {
                    StreamId::new(replica, label, x_counts[i], Purpose::RebirthIndex)
                } else {
                    StreamId::new(replica, label, epoch_y, Purpose::PairedRebirthIndex)
                };
                open.push((i, RngStream::new(seed, id)));
                open.len() - 1
            }
        };
        open[idx].1.next_index(n - 1)
    })?;
    let x_events = finish_step(&mut cs.sys_x, cfg, &mut cs.x_streams)?;

    let threshold = (2.0 * p.epsilon() * dt).sqrt();
    let mut report = CoupledStepReport { x_events, y_events, ..Default::default() };
    for i in 0..n {
        let (xi, yi) = (cs.sys_x.position(i), cs.sys_y.position(i));
        if xi == yi {
            continue;
        }
        if cs.coupled_mask[i] {
            report.decoupled.push(i);
        }
        let dist = xi.iter().zip(yi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist < threshold {
            let target = xi.to_vec();
            cs.sys_y.position_mut(i).copy_from_slice(&target);
            report.merged.push(i);
        }
    }
    cs.refresh_mask();
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingQuantiles {
    pub replicas: usize,
    pub fraction_coupled: f64,
    /// `None` where the quantile lies beyond the horizon.
    pub q10: Option<f64>,
    pub q25: Option<f64>,
    pub median: Option<f64>,
    pub q75: Option<f64>,
    pub q90: Option<f64>,
}

impl CouplingQuantiles {
    pub fn from_times(times: &[Option<f64>]) -> Self {
        let mut sorted: Vec<f64> = times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let q = |p: f64| {
            if m == 0 {
                return None;
            }
            let k = ((p * m as f64).ceil() as usize).clamp(1, m) - 1;
            Some(sorted[k]).filter(|v| v.is_finite())
        };
        CouplingQuantiles {
            replicas: m,
            fraction_coupled: times.iter().filter(|t| t.is_some()).count() as f64 / m.max(1) as f64,
            q10: q(0.10),
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            q90: q(0.9),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionResult {
    pub times: Vec<f64>,
    pub mean_d: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
    pub frac_fully_coupled: Vec<f64>,
    /// First time with `d = 0`, per replica.
    pub coupling_times: Vec<Option<f64>>,
    pub quantiles: CouplingQuantiles,
    #[serde(skip)]
    pub d_series: Vec<Vec<f64>>,
}

/// Runs `replicas` coupled pairs from `(x0, y0)` up to `t_end`, recording
/// `d(X_t, Y_t)` at t = 0 and every `record_every` steps. Replica `r` uses
/// replica id `cfg.replica_id + r`; replicas run on the current rayon pool
/// and are aggregated by index. A replica that couples fully stops
/// stepping, since `d` stays 0.
#[allow(clippy::too_many_arguments)]
pub fn contraction_experiment(
    p: &PotentialSpec,
    lv: &LyapunovSpec,
    dp: &DistanceParams,
    cfg: &FvConfig,
    x0: &SystemState,
    y0: &SystemState,
    t_end: f64,
    replicas: usize,
    record_every: usize,
) -> Result<ContractionResult> {
    if replicas < 30 {
        return Err(Error::Config(format!("contraction experiments need at least 30 replicas, got {replicas}")));
    }
    if record_every == 0 || !(t_end > 0.0) {
        return Err(Error::Config("record_every and t_end must be positive".into()));
    }
    x0.check_inside(p)?;
    y0.check_inside(p)?;
    let steps = crate::fv::steps_to(x0, cfg.dt, t_end);
    let record_steps: Vec<usize> = (0..=steps).filter(|k| k % record_every == 0 || *k == steps).collect();
    let runs: Vec<(Vec<f64>, Option<f64>)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let cfg = FvConfig { replica_id: cfg.replica_id + r as u64, ..cfg.clone() };
            let mut cs = CoupledState::new(&cfg, x0.clone(), y0.clone())?;
            let mut series = Vec::with_capacity(record_steps.len());
            let mut coupled_at = if cs.fully_coupled() { Some(x0.time()) } else { None };
            let mut next = record_steps.iter().peekable();
            for k in 0..=steps {
                if k > 0 && coupled_at.is_none() {
                    coupled_fv_step(&mut cs, p, &cfg)?;
                    if cs.fully_coupled() {
                        coupled_at = Some(cs.sys_x.time());
                    }
                }
                if next.peek() == Some(&&k) {
                    next.next();
                    let d = if coupled_at.is_some() { 0.0 } else { distance_d(p, &cs.sys_x, &cs.sys_y, lv, dp) };
                    series.push(d);
                }
            }
            Ok((series, coupled_at))
        })
        .collect::<Result<_>>()?;

    let m = replicas as f64;
    let mut out = ContractionResult {
        times: record_steps.iter().map(|&k| x0.time() + k as f64 * cfg.dt).collect(),
        mean_d: Vec::new(),
        lo95: Vec::new(),
        hi95: Vec::new(),
        frac_fully_coupled: Vec::new(),
        coupling_times: runs.iter().map(|r| r.1).collect(),
        quantiles: CouplingQuantiles::from_times(&runs.iter().map(|r| r.1).collect::<Vec<_>>()),
        d_series: runs.iter().map(|r| r.0.clone()).collect(),
    };
    for j in 0..record_steps.len() {
        let vals: Vec<f64> = runs.iter().map(|r| r.0[j]).collect();
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let half = 1.96 * (var / m).sqrt();
        out.mean_d.push(mean);
        out.lo95.push(mean - half);
        out.hi95.push(mean + half);
        out.frac_fully_coupled.push(vals.iter().filter(|&&v| v == 0.0).count() as f64 / m);
    }
    Ok(out)
}

pub fn write_contraction_csv<W: Write>(mut w: W, r: &ContractionResult) -> Result<()> {
    writeln!(w, "time,mean_d,lo95,hi95,frac_fully_coupled")?;
    for j in 0..r.times.len() {
        writeln!(w, "{},{},{},{},{}", r.times[j], r.mean_d[j], r.lo95[j], r.hi95[j], r.frac_fully_coupled[j])?;
    }
    Ok(())
}

/// Reflection coupling of two free (unkilled) diffusions with merge below
/// `√(2ε dt)`; returns the merge time if it happens by `horizon`.
pub fn free_reflection_merge_time(
    p: &PotentialSpec,
    x0: &[f64],
    y0: &[f64],
    dt: f64,
    horizon: f64,
    seed: u64,
    replica: u64,
) -> Result<Option<f64>> {
    let d = x0.len();
    let mut streams = ParticleStreams::new(seed, replica, 0, 0);
    let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
    let (mut nx, mut ny, mut g) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut xn, mut yn) = (vec![0.0; d], vec![0.0; d]);
    let threshold = (2.0 * p.epsilon() * dt).sqrt();
    let steps = (horizon / dt - 1e-9).ceil() as usize;
    for k in 1..=steps {
        streams.diffusion.fill_normal(&mut nx);
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let proj: f64 = diff.iter().zip(&nx).map(|(e, z)| e * z).sum::<f64>() / norm;
        for j in 0..d {
            ny[j] = nx[j] - 2.0 * proj * diff[j] / norm;
        }
        em_step_into(p, &x, dt, &nx, &mut g, &mut xn)?;
        em_step_into(p, &y, dt, &ny, &mut g, &mut yn)?;
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut y, &mut yn);
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist < threshold {
            return Ok(Some(k as f64 * dt));
        }
    }
    Ok(None)
}
