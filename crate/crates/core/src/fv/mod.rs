use std::io::Write;

use serde::Serialize;

use crate::coupling::LyapunovSpec;
use crate::error::{Error, Result};
use crate::potential::PotentialSpec;
use crate::sde::{em_step_into, exit_probability_bridge, ParticleStreams, Purpose, RngStream, StreamId};

mod observers;

pub use observers::{write_counts_csv, write_snapshots_csv, CountRecorder, DynkinRecorder, Observer, Snapshot, SnapshotRecorder};

/// N particles in `D`. `labels` is the particle axis of every stream id: the
/// particle stored at index `i` draws from streams keyed by `labels[i]`, and
/// all orderings (exit resolution, partner choice) use labels, so permuting
/// positions together with labels permutes the trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    dim: usize,
    positions: Vec<f64>,
    rebirth_counts: Vec<u64>,
    labels: Vec<u64>,
    time: f64,
    total_rebirths: u64,
    steps: u64,
    by_label: Vec<usize>,
    rank: Vec<usize>,
}

impl SystemState {
    pub fn new(positions: &[Vec<f64>]) -> Result<Self> {
        let dim = positions.first().map_or(0, |x| x.len());
        if positions.iter().any(|x| x.len() != dim) {
            return Err(Error::Config("positions of different dimensions".into()));
        }
        Self::from_flat(dim, positions.iter().flatten().copied().collect())
    }

    pub fn from_flat(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.len() % dim != 0 {
            return Err(Error::Config("flat position buffer does not match the dimension".into()));
        }
        let n = positions.len() / dim;
        if n < 2 {
            return Err(Error::Config(format!("need at least 2 particles, got {n}")));
        }
        let mut s = SystemState {
            dim,
            positions,
            rebirth_counts: vec![0; n],
            labels: (0..n as u64).collect(),
            time: 0.0,
            total_rebirths: 0,
            steps: 0,
            by_label: Vec::new(),
            rank: Vec::new(),
        };
        s.index_labels();
        Ok(s)
    }

    /// Replaces the labels; they must be distinct.
    pub fn with_labels(mut self, labels: Vec<u64>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::Config("one label per particle required".into()));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("particle labels must be distinct".into()));
        }
        self.labels = labels;
        self.index_labels();
        Ok(self)
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    fn index_labels(&mut self) {
        let n = self.n();
        self.by_label = (0..n).collect();
        self.by_label.sort_by_key(|&i| self.labels[i]);
        self.rank = vec![0; n];
        for (r, &i) in self.by_label.iter().enumerate() {
            self.rank[i] = r;
        }
    }

    /// `new[k] = old[sigma[k]]` for every per-particle field.
    pub fn permuted(&self, sigma: &[usize]) -> Self {
        let d = self.dim;
        let mut s = self.clone();
        for (k, &j) in sigma.iter().enumerate() {
            s.positions[k * d..(k + 1) * d].copy_from_slice(&self.positions[j * d..(j + 1) * d]);
            s.rebirth_counts[k] = self.rebirth_counts[j];
            s.labels[k] = self.labels[j];
        }
        s.index_labels();
        s
    }

    /// Checks that every particle lies in `D`.
    pub fn check_inside(&self, p: &PotentialSpec) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::Config("state and potential dimensions differ".into()));
        }
        for i in 0..self.n() {
            if !p.domain().inside(self.position(i)) {
                return Err(Error::Domain(format!("particle {i} at {:?} is outside the domain", self.position(i))));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.rebirth_counts.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn position_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn rebirth_counts(&self) -> &[u64] {
        &self.rebirth_counts
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn total_rebirths(&self) -> u64 {
        self.total_rebirths
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FvConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub seed: u64,
    pub replica_id: u64,
}

impl FvConfig {
    pub fn new(n_particles: usize, dt: f64, seed: u64, replica_id: u64) -> Result<Self> {
        if n_particles < 2 {
            return Err(Error::Config(format!("n_particles must be at least 2, got {n_particles}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        Ok(FvConfig { n_particles, dt, seed, replica_id })
    }
}

/// A resurrection during one step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RebirthEvent {
    pub particle: usize,
    /// Survivor whose post-step position was copied.
    pub target: usize,
    /// Start-of-step position of the dying particle.
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    /// Rebirth count before this event.
    pub epoch: u64,
}

/// Per-particle streams of the current epoch plus step scratch.
#[derive(Clone, Debug)]
pub struct FvStreams {
    seed: u64,
    replica: u64,
    particles: Vec<ParticleStreams>,
    pub(crate) proposal: Proposal,
}

impl FvStreams {
    /// Streams for `s` positioned at counter 0 of each particle's current
    /// epoch.
    pub fn new(cfg: &FvConfig, s: &SystemState) -> Self {
        let particles = (0..s.n())
            .map(|i| ParticleStreams::new(cfg.seed, cfg.replica_id, s.labels[i], s.rebirth_counts[i]))
            .collect();
        FvStreams { seed: cfg.seed, replica: cfg.replica_id, particles, proposal: Proposal::new(s.n(), s.dim) }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Proposal {
    pub y: Vec<f64>,
    pub noise: Vec<f64>,
    pub uniforms: Vec<f64>,
    pub exited: Vec<bool>,
    pub grad: Vec<f64>,
    partner: Vec<usize>,
    target: Vec<usize>,
    chain: Vec<usize>,
}

impl Proposal {
    pub fn new(n: usize, d: usize) -> Self {
        Proposal {
            y: vec![0.0; n * d],
            noise: vec![0.0; n * d],
            uniforms: vec![0.0; n],
            exited: vec![false; n],
            grad: vec![0.0; d],
            partner: vec![usize::MAX; n],
            target: vec![usize::MAX; n],
            chain: Vec::new(),
        }
    }
}

/// Diffusion sub-step: fills `noise`, `uniforms`, `y` and `exited`.
pub(crate) fn propose(p: &PotentialSpec, s: &SystemState, dt: f64, streams: &mut FvStreams) -> Result<()> {
    let d = s.dim;
    let pr = &mut streams.proposal;
    for i in 0..s.n() {
        let ps = &mut streams.particles[i];
        let noise = &mut pr.noise[i * d..(i + 1) * d];
        ps.diffusion.fill_normal(noise);
        let x = &s.positions[i * d..(i + 1) * d];
        let y = &mut pr.y[i * d..(i + 1) * d];
        em_step_into(p, x, dt, noise, &mut pr.grad, y)?;
        let u = ps.bridge.next_uniform();
        pr.uniforms[i] = u;
        pr.exited[i] = u < exit_probability_bridge(p, x, y, dt);
    }
    Ok(())
}

/// Resolves exits: every exited particle (in label order) draws a partner
/// rank among the other N−1 labels with `draw(i)`, chains through exited
/// partners to a survivor, and lands on that survivor's post-step position.
/// A cycle of exited particles is broken by a fresh draw for its
/// lowest-label member. `draw(i, label, epoch)` returns a rank in
/// `0..N−1`. Then commits `y`, counts and time.
pub(crate) fn resolve(
    s: &mut SystemState,
    pr: &mut Proposal,
    dt: f64,
    mut draw: impl FnMut(usize, u64, u64) -> usize,
) -> Result<Vec<RebirthEvent>> {
    let n = s.n();
    let d = s.dim;
    let n_exited = pr.exited.iter().filter(|&&e| e).count();
    if n_exited == n {
        return Err(Error::MassExtinction { time: s.time + dt, n_particles: n });
    }
    let pick = |s: &SystemState, i: usize, r: usize| {
        let k = s.rank[i];
        s.by_label[if r < k { r } else { r + 1 }]
    };
    let mut events = Vec::new();
    if n_exited > 0 {
        for r in 0..n {
            let i = s.by_label[r];
            if pr.exited[i] {
                pr.target[i] = usize::MAX;
                let rank = draw(i, s.labels[i], s.rebirth_counts[i]);
                pr.partner[i] = pick(s, i, rank);
            }
        }
        for r in 0..n {
            let i = s.by_label[r];
            if !pr.exited[i] || pr.target[i] != usize::MAX {
                continue;
            }
            loop {
                pr.chain.clear();
                pr.chain.push(i);
                let mut j = pr.partner[i];
                let mut cycle_start = None;
                while pr.exited[j] && pr.target[j] == usize::MAX {
                    if let Some(pos) = pr.chain.iter().position(|&c| c == j) {
                        cycle_start = Some(pos);
                        break;
                    }
                    pr.chain.push(j);
                    j = pr.partner[j];
                }
                match cycle_start {
                    Some(pos) => {
                        let m = *pr.chain[pos..].iter().min_by_key(|&&c| s.labels[c]).unwrap();
                        let rank = draw(m, s.labels[m], s.rebirth_counts[m]);
                        pr.partner[m] = pick(s, m, rank);
                    }
                    None => {
                        let terminus = if pr.exited[j] { pr.target[j] } else { j };
                        for &c in &pr.chain {
                            pr.target[c] = terminus;
                        }
                        break;
                    }
                }
            }
        }
    }
    for i in 0..n {
        if pr.exited[i] {
            let t = pr.target[i];
            let to = pr.y[t * d..(t + 1) * d].to_vec();
            events.push(RebirthEvent {
                particle: i,
                target: t,
                from: s.position(i).to_vec(),
                to: to.clone(),
                epoch: s.rebirth_counts[i],
            });
            s.position_mut(i).copy_from_slice(&to);
            s.rebirth_counts[i] += 1;
            s.total_rebirths += 1;
        } else {
            let y = &pr.y[i * d..(i + 1) * d];
            s.positions[i * d..(i + 1) * d].copy_from_slice(y);
        }
    }
    s.time += dt;
    s.steps += 1;
    Ok(events)
}

/// Moves every particle that was reborn in this step onto the streams of its
/// new epoch.
pub(crate) fn advance_epochs(s: &SystemState, streams: &mut FvStreams, events: &[RebirthEvent]) {
    for e in events {
        let i = e.particle;
        streams.particles[i] = ParticleStreams::new(streams.seed, streams.replica, s.labels[i], s.rebirth_counts[i]);
    }
}

/// One Fleming–Viot step. Exited particles resurrect on the post-step
/// position of a uniformly chosen other particle, drawn from the stream
/// `(label, epoch, RebirthIndex)`.
pub fn fv_step(p: &PotentialSpec, s: &mut SystemState, cfg: &FvConfig, streams: &mut FvStreams) -> Result<Vec<RebirthEvent>> {
    propose(p, s, cfg.dt, streams)?;
    finish_step(s, cfg, streams)
}

/// Resolution half of [`fv_step`], after [`propose`].
pub(crate) fn finish_step(s: &mut SystemState, cfg: &FvConfig, streams: &mut FvStreams) -> Result<Vec<RebirthEvent>> {
    let (seed, replica) = (cfg.seed, cfg.replica_id);
    let mut open: Vec<(usize, RngStream)> = Vec::new();
    let n_others = s.n() - 1;
    let mut pr = std::mem::replace(&mut streams.proposal, Proposal::new(0, 0));
    let out = resolve(s, &mut pr, cfg.dt, |i, label, epoch| {
        let idx = match open.iter().position(|(j, _)| *j == i) {
            Some(k) => k,
            None => {
                let id = StreamId::new(replica, label, epoch, Purpose::RebirthIndex);
                open.push((i, RngStream::new(seed, id)));
                open.len() - 1
            }
        };
        open[idx].1.next_index(n_others)
    });
    streams.proposal = pr;
    let events = out?;
    advance_epochs(s, streams, &events);
    Ok(events)
}

/// Number of steps `run_until` takes to reach `t_end`.
pub fn steps_to(s: &SystemState, dt: f64, t_end: f64) -> usize {
    let span = t_end - s.time;
    if span <= 0.0 {
        0
    } else {
        (span / dt - 1e-9).ceil() as usize
    }
}

/// Applies ⌈(t_end − t)/dt⌉ steps. After step `k` (1-based) each observer
/// with cadence `c` is called when `k % c == 0` or on the last step; it sees
/// the rebirth events of that step only.
pub fn run_until(
    p: &PotentialSpec,
    s: &mut SystemState,
    cfg: &FvConfig,
    streams: &mut FvStreams,
    t_end: f64,
    observers: &mut [&mut dyn Observer],
) -> Result<()> {
    if t_end < s.time {
        return Err(Error::Config(format!("t_end = {t_end} precedes the current time {}", s.time)));
    }
    if s.n() != cfg.n_particles {
        return Err(Error::Config(format!("state has {} particles, config {}", s.n(), cfg.n_particles)));
    }
    let steps = steps_to(s, cfg.dt, t_end);
    for k in 1..=steps {
        let events = fv_step(p, s, cfg, streams)?;
        for o in observers.iter_mut() {
            let c = o.cadence().max(1);
            if k % c == 0 || k == steps {
                o.observe(p, s, &events);
            }
        }
    }
    Ok(())
}

/// `A(x) = #{i : V(x_i) > 3C_1}`.
pub fn boundary_count(p: &PotentialSpec, s: &SystemState, lv: &LyapunovSpec) -> usize {
    (0..s.n()).filter(|&i| lv.in_collar(p, s.position(i))).count()
}

/// Writes the `(time, particle_index, x0.., rebirth_count)` snapshot of one
/// state, header included.
pub fn write_state_csv<W: Write>(w: W, s: &SystemState) -> Result<()> {
    let snap = Snapshot { time: s.time, positions: s.positions.clone(), rebirth_counts: s.rebirth_counts.clone() };
    write_snapshots_csv(w, s.dim, std::slice::from_ref(&snap))
}
