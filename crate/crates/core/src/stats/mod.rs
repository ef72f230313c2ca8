use std::io::Write;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::fv::{Observer, RebirthEvent, SystemState};
use crate::oracle::GridOperator;
use crate::potential::PotentialSpec;

#[cfg(test)]
mod tests;

/// `π^N = (1/N) Σ δ_{x_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    atoms: Vec<f64>,
}

pub fn empirical_measure(s: &SystemState) -> EmpiricalMeasure {
    EmpiricalMeasure { dim: s.dim(), atoms: s.positions().to_vec() }
}

impl EmpiricalMeasure {
    pub fn from_atoms(dim: usize, atoms: Vec<f64>) -> Result<Self> {
        if dim == 0 || atoms.is_empty() || atoms.len() % dim != 0 {
            return Err(Error::Config(format!("{} coordinates do not form atoms of dimension {dim}", atoms.len())));
        }
        Ok(Self { dim, atoms })
    }

    pub fn len(&self) -> usize {
        self.atoms.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// `∫ f dπ^N`. Values are summed in sorted order so the result does not
    /// depend on how the atoms are labelled.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut v: Vec<f64> = self.atoms.chunks_exact(self.dim).map(f).collect();
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() * self.weight()
    }
}

/// Fixed rectangular bins over a box.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramGrid {
    lo: Vec<f64>,
    width: Vec<f64>,
    bins: Vec<usize>,
}

impl HistogramGrid {
    pub fn new(lo: &[f64], hi: &[f64], bins: &[usize]) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != bins.len() {
            return Err(Error::Config("histogram bounds and bin counts must share one dimension".into()));
        }
        if bins.contains(&0) || lo.iter().zip(hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
            return Err(Error::Config("histogram needs a non-empty box and at least one bin per axis".into()));
        }
        let width = lo.iter().zip(hi).zip(bins).map(|((l, h), &b)| (h - l) / b as f64).collect();
        Ok(Self { lo: lo.to_vec(), width, bins: bins.to_vec() })
    }

    /// The oracle's cells merged `coarsen` at a time per axis.
    pub fn from_oracle(g: &GridOperator, coarsen: usize) -> Result<Self> {
        let res = g.resolution();
        if coarsen == 0 || res % coarsen != 0 {
            return Err(Error::Config(format!("coarsening {coarsen} does not divide the oracle resolution {res}")));
        }
        let d = g.dim();
        let bins = vec![res / coarsen; d];
        let width = g.spacing().iter().map(|h| h * coarsen as f64).collect();
        Ok(Self { lo: g.origin().to_vec(), width, bins })
    }

    pub fn dim(&self) -> usize {
        self.bins.len()
    }

    pub fn len(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin_width(&self) -> &[f64] {
        &self.width
    }

    /// Bin containing `x`; the upper faces belong to the last bin.
    pub fn bin_of(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        let mut stride = 1;
        for k in 0..self.dim() {
            let t = (x[k] - self.lo[k]) / self.width[k];
            if !(t >= 0.0 && t <= self.bins[k] as f64) {
                return None;
            }
            flat += (t as usize).min(self.bins[k] - 1) * stride;
            stride *= self.bins[k];
        }
        Some(flat)
    }

    pub fn centre(&self, bin: usize) -> Vec<f64> {
        let mut rem = bin;
        (0..self.dim())
            .map(|k| {
                let i = rem % self.bins[k];
                rem /= self.bins[k];
                self.lo[k] + (i as f64 + 0.5) * self.width[k]
            })
            .collect()
    }
}

/// Bin masses on a [`HistogramGrid`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramMeasure {
    pub grid: HistogramGrid,
    pub masses: Vec<f64>,
}

impl HistogramMeasure {
    pub fn from_masses(grid: HistogramGrid, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.len() {
            return Err(Error::Config(format!("{} masses for {} bins", masses.len(), grid.len())));
        }
        if masses.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::Domain("histogram masses must be non-negative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("histogram masses sum to {total}")));
        }
        Ok(Self { grid, masses })
    }

    /// Atoms falling outside the grid are an error.
    pub fn from_empirical(grid: &HistogramGrid, m: &EmpiricalMeasure) -> Result<Self> {
        if m.dim() != grid.dim() {
            return Err(Error::Config("measure and grid dimensions differ".into()));
        }
        let mut counts = vec![0usize; grid.len()];
        for i in 0..m.len() {
            let b = grid
                .bin_of(m.atom(i))
                .ok_or_else(|| Error::Domain(format!("atom {:?} lies outside the histogram grid", m.atom(i))))?;
            counts[b] += 1;
        }
        Ok(Self { grid: grid.clone(), masses: normalise_counts(&counts, m.len()) })
    }

    /// Integrates the piecewise-(bi)linear interpolant of a nodal oracle density,
    /// zero on `∂D`, over each bin. The grid must come from [`HistogramGrid::from_oracle`].
    pub fn from_density(grid: &HistogramGrid, g: &GridOperator, rho: &[f64]) -> Result<Self> {
        let d = g.dim();
        let res = g.resolution();
        if grid.dim() != d || rho.len() != g.n() || res % grid.bins[0] != 0 {
            return Err(Error::Config("density, oracle and histogram grid do not match".into()));
        }
        let coarsen = res / grid.bins[0];
        let share = g.cell_volume() / (1usize << d) as f64;
        let mut masses = vec![0.0; grid.len()];
        let mut cell = vec![0usize; d];
        for (i, &r) in rho.iter().enumerate() {
            let idx = g.lattice_index(i);
            // Each node feeds the 2^d cells sharing it as a corner.
            for corner in 0..(1usize << d) {
                for k in 0..d {
                    cell[k] = idx[k] - ((corner >> k) & 1);
                }
                let mut flat = 0;
                let mut stride = 1;
                for k in 0..d {
                    flat += (cell[k] / coarsen) * stride;
                    stride *= grid.bins[k];
                }
                masses[flat] += r * share;
            }
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("oracle density has no mass".into()));
        }
        masses.iter_mut().for_each(|m| *m /= total);
        Ok(Self { grid: grid.clone(), masses })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.dim();
        let cols: Vec<String> = (0..d).map(|k| format!("centre{k}")).collect();
        let widths: Vec<String> = (0..d).map(|k| format!("width{k}")).collect();
        writeln!(w, "{},{},mass", cols.join(","), widths.join(","))?;
        for (b, m) in self.masses.iter().enumerate() {
            let c: Vec<String> = self.grid.centre(b).iter().map(|v| v.to_string()).collect();
            let wd: Vec<String> = self.grid.width.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{},{m}", c.join(","), wd.join(","))?;
        }
        Ok(())
    }
}

fn normalise_counts(counts: &[usize], total: usize) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// `Σ_k |a_k − b_k|`, in `[0, 2]`.
pub fn tv_distance(a: &HistogramMeasure, b: &HistogramMeasure) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Config("total variation needs histograms on identical bin edges".into()));
    }
    Ok(a.masses.iter().zip(&b.masses).map(|(x, y)| (x - y).abs()).sum())
}

/// Exact `W_1` between two empirical measures on the line.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("Wasserstein distance of an empty sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (wa, wb) = (1.0 / a.len() as f64, 1.0 / b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut x = a[0].min(b[0]);
    let mut acc = 0.0;
    // Integrate |F_a − F_b| between consecutive breakpoints.
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        acc += (fa - fb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] == next {
            fa += wa;
            i += 1;
        }
        while j < b.len() && b[j] == next {
            fb += wb;
            j += 1;
        }
    }
    Ok(acc)
}

/// `W_1` between 1D histograms, with each bin's mass placed at its centre.
pub fn wasserstein1_hist(a: &HistogramMeasure, b: &HistogramMeasure) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Config("Wasserstein distance needs histograms on identical bin edges".into()));
    }
    if a.grid.dim() != 1 {
        return Err(Error::Unsupported("Wasserstein distance is one-dimensional only".into()));
    }
    let mut gap = 0.0;
    let mut acc = 0.0;
    for (x, y) in a.masses.iter().zip(&b.masses) {
        gap += x - y;
        acc += gap.abs();
    }
    Ok(acc * a.grid.width[0])
}

/// `|∫ f dπ^N − oracle_expect|`.
pub fn chaos_error(s: &SystemState, f: impl Fn(&[f64]) -> f64, oracle_expect: f64) -> f64 {
    (empirical_measure(s).integrate(f) - oracle_expect).abs()
}

/// Mean with its standard error over independent replicas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub replicas: usize,
}

pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { estimate: f64::NAN, stderr: f64::NAN, replicas: 0 };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    Estimate { estimate: mean, stderr, replicas: n }
}

/// One row of estimator output with the metadata needed to reproduce it.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateRow {
    pub label: String,
    pub estimate: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub convention: String,
    pub bin_width: f64,
}

pub fn write_estimates_csv<W: Write>(mut w: W, rows: &[EstimateRow]) -> Result<()> {
    writeln!(w, "label,estimate,stderr,replicas,convention,bin_width")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.label, r.estimate, r.stderr, r.replicas, r.convention, r.bin_width)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// Student-t 95% band on the slope.
    pub lo95: f64,
    pub hi95: f64,
    pub points: usize,
}

/// Least-squares fit of `log y = intercept + slope · log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("log-log fit needs strictly positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Ordinary least squares `y = intercept + slope · x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Config(format!("slope fit needs at least 3 paired points, got {} and {}", xs.len(), ys.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Domain("slope fit needs finite values".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("slope fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = n - 2.0;
    let stderr = (sse / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Numerical(e.to_string()))?.inverse_cdf(0.975);
    Ok(SlopeFit { slope, intercept, stderr, lo95: slope - t * stderr, hi95: slope + t * stderr, points: xs.len() })
}

/// Accumulates the histogram of the particle cloud at every observed time
/// `≥ from_time` and reports the time average.
#[derive(Clone, Debug)]
pub struct HistogramAverager {
    grid: HistogramGrid,
    from_time: f64,
    cadence: usize,
    sums: Vec<f64>,
    snapshots: usize,
    outside: usize,
}

impl HistogramAverager {
    pub fn new(grid: HistogramGrid, from_time: f64, cadence: usize) -> Self {
        let sums = vec![0.0; grid.len()];
        Self { grid, from_time, cadence, sums, snapshots: 0, outside: 0 }
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn average(&self) -> Result<HistogramMeasure> {
        if self.snapshots == 0 {
            return Err(Error::Config("no snapshot fell inside the averaging window".into()));
        }
        if self.outside > 0 {
            return Err(Error::Domain(format!("{} particle positions fell outside the histogram grid", self.outside)));
        }
        let masses = self.sums.iter().map(|s| s / self.snapshots as f64).collect();
        HistogramMeasure::from_masses(self.grid.clone(), masses).or_else(|_| {
            // Rounding in the running sums; renormalise.
            let total: f64 = self.sums.iter().sum();
            Ok(HistogramMeasure { grid: self.grid.clone(), masses: self.sums.iter().map(|s| s / total).collect() })
        })
    }
}

impl Observer for HistogramAverager {
    fn cadence(&self) -> usize {
        self.cadence
    }

    fn observe(&mut self, _: &PotentialSpec, s: &SystemState, _: &[RebirthEvent]) {
        // Allow for the rounding of accumulated step times.
        if s.time() < self.from_time - 1e-9 {
            return;
        }
        let w = 1.0 / s.n() as f64;
        for i in 0..s.n() {
            match self.grid.bin_of(s.position(i)) {
                Some(b) => self.sums[b] += w,
                None => self.outside += 1,
            }
        }
        self.snapshots += 1;
    }
}
