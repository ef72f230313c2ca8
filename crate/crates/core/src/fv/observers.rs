use std::io::Write;

use serde::Serialize;

use super::{boundary_count, RebirthEvent, SystemState};
use crate::coupling::LyapunovSpec;
use crate::error::Result;
use crate::potential::PotentialSpec;

/// Called by `run_until` after every `cadence()`-th step and after the last.
pub trait Observer {
    fn cadence(&self) -> usize {
        1
    }
    fn observe(&mut self, p: &PotentialSpec, s: &SystemState, events: &[RebirthEvent]);
}

#[derive(Clone, Debug, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub positions: Vec<f64>,
    pub rebirth_counts: Vec<u64>,
}

#[derive(Clone, Debug, Default)]
pub struct SnapshotRecorder {
    pub cadence: usize,
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotRecorder {
    pub fn new(cadence: usize) -> Self {
        SnapshotRecorder { cadence, snapshots: Vec::new() }
    }
}

impl Observer for SnapshotRecorder {
    fn cadence(&self) -> usize {
        self.cadence
    }
    fn observe(&mut self, _: &PotentialSpec, s: &SystemState, _: &[RebirthEvent]) {
        self.snapshots.push(Snapshot {
            time: s.time(),
            positions: s.positions().to_vec(),
            rebirth_counts: s.rebirth_counts().to_vec(),
        });
    }
}

/// Records `(time, A, total_rebirths)`.
#[derive(Clone, Debug)]
pub struct CountRecorder {
    pub cadence: usize,
    pub lyapunov: LyapunovSpec,
    pub rows: Vec<(f64, usize, u64)>,
}

impl CountRecorder {
    pub fn new(cadence: usize, lyapunov: LyapunovSpec) -> Self {
        CountRecorder { cadence, lyapunov, rows: Vec::new() }
    }
}

impl Observer for CountRecorder {
    fn cadence(&self) -> usize {
        self.cadence
    }
    fn observe(&mut self, p: &PotentialSpec, s: &SystemState, _: &[RebirthEvent]) {
        self.rows.push((s.time(), boundary_count(p, s, &self.lyapunov), s.total_rebirths()));
    }
}

pub fn write_snapshots_csv<W: Write>(mut w: W, dim: usize, snapshots: &[Snapshot]) -> Result<()> {
    let cols: Vec<String> = (0..dim).map(|k| format!("x{k}")).collect();
    writeln!(w, "time,particle_index,{},rebirth_count", cols.join(","))?;
    for snap in snapshots {
        for (i, x) in snap.positions.chunks_exact(dim).enumerate() {
            write!(w, "{},{}", snap.time, i)?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", snap.rebirth_counts[i])?;
        }
    }
    Ok(())
}

pub fn write_counts_csv<W: Write>(mut w: W, rows: &[(f64, usize, u64)]) -> Result<()> {
    writeln!(w, "time,A,total_rebirths")?;
    for (t, a, r) in rows {
        writeln!(w, "{t},{a},{r}")?;
    }
    Ok(())
}

/// Running Dynkin residual
/// `M(t) = V̄(t) − V̄(0) − ∫ Σ_i LV(X^i_s) ds − Σ_jumps ΔV`, with `V̄ = Σ_i V(X^i)`.
/// The integral uses the left-point rule, so the recorder must observe every
/// step. A resurrection contributes `ΔV = V(to) − V_0`, the dying particle
/// having reached the boundary level.
#[derive(Clone, Debug)]
pub struct DynkinRecorder {
    lyapunov: LyapunovSpec,
    v_bar0: f64,
    v_bar: f64,
    generator_sum: f64,
    last_time: f64,
    integral: f64,
    jumps: f64,
    resurrections: usize,
}

impl DynkinRecorder {
    pub fn new(p: &PotentialSpec, s0: &SystemState, lyapunov: LyapunovSpec) -> Self {
        let (v_bar, generator_sum) = Self::sums(p, s0, &lyapunov);
        DynkinRecorder {
            lyapunov,
            v_bar0: v_bar,
            v_bar,
            generator_sum,
            last_time: s0.time(),
            integral: 0.0,
            jumps: 0.0,
            resurrections: 0,
        }
    }

    fn sums(p: &PotentialSpec, s: &SystemState, lv: &LyapunovSpec) -> (f64, f64) {
        (0..s.n()).fold((0.0, 0.0), |(v, g), i| (v + lv.value(p, s.position(i)), g + lv.generator(p, s.position(i))))
    }

    pub fn residual(&self) -> f64 {
        self.v_bar - self.v_bar0 - self.integral - self.jumps
    }

    pub fn resurrections(&self) -> usize {
        self.resurrections
    }
}

impl Observer for DynkinRecorder {
    fn observe(&mut self, p: &PotentialSpec, s: &SystemState, events: &[RebirthEvent]) {
        self.integral += (s.time() - self.last_time) * self.generator_sum;
        for e in events {
            self.jumps += self.lyapunov.value(p, &e.to) - self.lyapunov.v0;
        }
        self.resurrections += events.len();
        (self.v_bar, self.generator_sum) = Self::sums(p, s, &self.lyapunov);
        self.last_time = s.time();
    }
}
