mod band;

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::{InteriorLattice, PotentialSpec};
use band::BandLu;

/// Finite-difference discretization of `L f = εΔf − ∇U·∇f` on the interior
/// nodes of a regular lattice over `D`, with `f = 0` on and beyond `∂D`.
/// Rows are stored in CSR form with sorted columns.
#[derive(Clone, Debug)]
pub struct GridOperator {
    dim: usize,
    cells: usize,
    lo: Vec<f64>,
    spacing: Vec<f64>,
    nodes: Vec<Vec<f64>>,
    index: Vec<Vec<usize>>,
    compact: Vec<Option<usize>>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    bandwidth: usize,
    epsilon: f64,
    upwinded: usize,
    /// Total coefficient of stencil neighbours outside `D`, i.e. `−(A 1)_i`.
    leak: Vec<f64>,
}

/// Builds the operator with `resolution` cells per axis of the bounding box.
/// Central differences throughout, except that the drift is upwinded on any
/// axis where the cell Péclet number `|∂_k U| h / (2ε)` exceeds 1.
pub fn build_operator(p: &PotentialSpec, resolution: usize) -> Result<GridOperator> {
    let dim = p.dim();
    if dim > 2 {
        return Err(Error::Unsupported(format!("the spectral oracle supports d ≤ 2, got d = {dim}")));
    }
    if resolution < 64 {
        return Err(Error::Config(format!("oracle resolution must be at least 64, got {resolution}")));
    }
    let lattice = InteriorLattice::new(p.domain(), resolution)?;
    let n = lattice.nodes.len();
    if n == 0 {
        return Err(Error::Degenerate("no interior oracle node".into()));
    }
    let per_axis = resolution + 1;
    let eps = p.epsilon();
    let nodes: Vec<Vec<f64>> = (0..n).map(|i| lattice.point(i)).collect();
    let mut row_ptr = vec![0];
    let mut cols = Vec::with_capacity(n * (2 * dim + 1));
    let mut vals = Vec::with_capacity(n * (2 * dim + 1));
    let mut grad = vec![0.0; dim];
    let mut upwinded = 0;
    let mut bandwidth = 0;
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * dim + 1);
    let mut leak = vec![0.0; n];
    for i in 0..n {
        p.grad_u(&nodes[i], &mut grad);
        let idx = &lattice.nodes[i];
        let mut diag = 0.0;
        row.clear();
        let mut any_upwind = false;
        let mut stride = 1;
        for k in 0..dim {
            let h = lattice.spacing[k];
            let b = -grad[k];
            let diff = eps / (h * h);
            let (mut lo_c, mut hi_c) = (diff, diff);
            diag -= 2.0 * diff;
            if b.abs() * h / (2.0 * eps) > 1.0 {
                any_upwind = true;
                if b > 0.0 {
                    hi_c += b / h;
                } else {
                    lo_c -= b / h;
                }
                diag -= b.abs() / h;
            } else {
                hi_c += b / (2.0 * h);
                lo_c -= b / (2.0 * h);
            }
            let flat: usize = idx.iter().enumerate().map(|(a, &j)| j * per_axis.pow(a as u32)).sum();
            for (off, c) in [(-1isize, lo_c), (1, hi_c)] {
                let j = idx[k] as isize + off;
                let col = if j < 0 || j >= per_axis as isize {
                    None
                } else {
                    lattice.compact[(flat as isize + off * stride as isize) as usize]
                };
                match col {
                    Some(col) => {
                        row.push((col, c));
                        bandwidth = bandwidth.max(col.abs_diff(i));
                    }
                    None => leak[i] += c,
                }
            }
            stride *= per_axis;
        }
        row.push((i, diag));
        row.sort_by_key(|e| e.0);
        for &(c, v) in &row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
        upwinded += any_upwind as usize;
    }
    Ok(GridOperator {
        dim,
        cells: resolution,
        lo: lattice.lo.clone(),
        spacing: lattice.spacing.clone(),
        nodes,
        index: lattice.nodes.clone(),
        compact: lattice.compact.clone(),
        row_ptr,
        cols,
        vals,
        bandwidth,
        epsilon: eps,
        upwinded,
        leak,
    })
}

impl GridOperator {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Lower corner of the lattice (the bounding box of `D`).
    pub fn origin(&self) -> &[f64] {
        &self.lo
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    /// Number of nodes where the drift was upwinded on some axis.
    pub fn upwinded_nodes(&self) -> usize {
        self.upwinded
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// `(column, value)` pairs of row `i` of the generator matrix.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// `A f` (the generator acting on functions).
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.row(i).map(|(j, v)| v * f[j]).sum()).collect()
    }

    /// `Aᵀ g` (the adjoint acting on densities).
    pub fn apply_adjoint(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for i in 0..self.n() {
            for (j, v) in self.row(i) {
                out[j] += v * g[i];
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// `‖A‖_∞ = ‖Aᵀ‖_1`; `‖Aᵀ‖_∞` is the maximum column sum of |A|.
    pub fn adjoint_inf_norm(&self) -> f64 {
        let mut col = vec![0.0; self.n()];
        for i in 0..self.n() {
            for (j, v) in self.row(i) {
                col[j] += v.abs();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// Whether some stencil neighbour of node `i` lies outside `D`.
    pub fn touches_boundary(&self, i: usize) -> bool {
        self.row(i).count() < 2 * self.dim + 1
    }

    /// Killing coefficients `−(A 1)_i`, accumulated exactly rather than by
    /// cancelling row sums.
    pub fn leak(&self) -> &[f64] {
        &self.leak
    }

    /// Factorization of `diag·I + scale·A` (or of its transpose).
    fn band(&self, diag: f64, scale: f64, transpose: bool) -> Result<BandLu> {
        let mut m = BandLu::zeros(self.n(), self.bandwidth.max(1));
        for i in 0..self.n() {
            m.add(i, i, diag);
            for (j, v) in self.row(i) {
                if transpose {
                    m.add(j, i, scale * v);
                } else {
                    m.add(i, j, scale * v);
                }
            }
        }
        m.factor().ok_or_else(|| Error::Numerical("zero pivot in banded factorization".into()))
    }

    /// Nearest lattice node, if it is an interior node.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let per_axis = self.cells + 1;
        let mut flat = 0;
        let mut stride = 1;
        for k in 0..self.dim {
            let j = ((x[k] - self.lo[k]) / self.spacing[k]).round();
            if j < 0.0 || j > self.cells as f64 {
                return None;
            }
            flat += j as usize * stride;
            stride *= per_axis;
        }
        self.compact[flat]
    }

    /// Density (per unit volume) of the empirical measure of `atoms` binned
    /// to nearest nodes. Atoms whose nearest node is not interior go to the
    /// closest interior node.
    pub fn histogram_density(&self, atoms: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let m = atoms.len() / d;
        let mut rho = vec![0.0; self.n()];
        let w = 1.0 / (m as f64 * self.cell_volume());
        for x in atoms.chunks_exact(d) {
            let i = self.nearest_node(x).unwrap_or_else(|| self.closest_node(x));
            rho[i] += w;
        }
        rho
    }

    fn closest_node(&self, x: &[f64]) -> usize {
        let dist = |i: usize| self.nodes[i].iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        (0..self.n()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap()
    }

    /// Draws a point from a node density: a node by inverse CDF with `u`,
    /// then a uniform offset within its cell from `jitter ∈ [0,1)^d`,
    /// kept strictly inside the lattice interior.
    pub fn sample(&self, density: &[f64], u: f64, jitter: &[f64]) -> Vec<f64> {
        let total: f64 = density.iter().sum();
        let mut acc = 0.0;
        let mut pick = self.n() - 1;
        for (i, &r) in density.iter().enumerate() {
            acc += r;
            if u * total < acc {
                pick = i;
                break;
            }
        }
        self.nodes[pick]
            .iter()
            .enumerate()
            .map(|(k, &c)| c + (jitter[k] - 0.5) * self.spacing[k] * 0.999)
            .collect()
    }

    /// Multi-index of node `i` on the lattice.
    pub fn lattice_index(&self, i: usize) -> &[usize] {
        &self.index[i]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenSolution {
    pub lambda0: f64,
    /// Density per unit volume on the interior nodes; `Σ ρ · vol = 1`.
    #[serde(skip)]
    pub qsd_density: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub resolution: usize,
}

impl EigenSolution {
    /// `∫ f dν` by the node rule.
    pub fn expectation(&self, g: &GridOperator, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.qsd_density.iter().enumerate().map(|(i, r)| r * f(g.node(i))).sum::<f64>() * g.cell_volume()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, g: &GridOperator) -> Result<()> {
        let cols: Vec<String> = (0..g.dim()).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},density", cols.join(","))?;
        for (i, r) in self.qsd_density.iter().enumerate() {
            for v in g.node(i) {
                write!(w, "{v},")?;
            }
            writeln!(w, "{r}")?;
        }
        Ok(())
    }

    pub fn header_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

const MAX_ITERATIONS: usize = 100_000;

/// Principal eigenpair of the killed generator by inverse iteration on the
/// adjoint with shift 0: `(−Aᵀ) v = λ_0 v`, `v > 0`. The residual is
/// `‖Aᵀv + λ_0 v‖_∞ / (‖Aᵀ‖_∞ ‖v‖_∞)`.
pub fn principal_eigenpair(g: &GridOperator) -> Result<EigenSolution> {
    let lu = g.band(0.0, -1.0, true)?;
    let n = g.n();
    let norm = g.adjoint_inf_norm();
    let mut v = vec![1.0 / n as f64; n];
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let mut w = v.clone();
        lu.solve_in_place(&mut w);
        let s: f64 = w.iter().sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Numerical(format!("inverse iteration lost positivity at iteration {it}")));
        }
        for x in &mut w {
            *x /= s;
        }
        let av = g.apply_adjoint(&w);
        // 1ᵀAᵀv = −Σ leak_i v_i, free of the cancellation in Σ(Aᵀv).
        let next = g.leak.iter().zip(&w).map(|(l, x)| l * x).sum::<f64>() / w.iter().sum::<f64>();
        let vmax = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        residual = av.iter().zip(&w).map(|(a, x)| (a + next * x).abs()).fold(0.0, f64::max) / (norm * vmax);
        let change = (next - lambda).abs();
        v = w;
        lambda = next;
        if change <= 1e-12 * lambda.abs() && residual < 1e-8 {
            let vol = g.cell_volume();
            let mass: f64 = v.iter().map(|x| x.max(0.0)).sum::<f64>() * vol;
            let qsd_density = v.iter().map(|x| x.max(0.0) / mass).collect();
            return Ok(EigenSolution { lambda0: lambda, qsd_density, residual, iterations: it, resolution: g.resolution() });
        }
    }
    Err(Error::Numerical(format!(
        "inverse iteration did not converge in {MAX_ITERATIONS} iterations (λ ≈ {lambda}, residual {residual:e})"
    )))
}

/// Result of evolving a density forward by `μ ↦ μ e^{tL}`.
#[derive(Clone, Debug, Serialize)]
pub struct Evolution {
    #[serde(skip)]
    pub unnormalized: Vec<f64>,
    pub survival: f64,
    #[serde(skip)]
    pub conditioned: Vec<f64>,
    /// Largest negative value removed by the positivity clamp.
    pub clamp_magnitude: f64,
    pub steps: usize,
    pub dt: f64,
}

const RANNACHER_HALF_STEPS: usize = 4;

fn schedule(t: f64) -> (usize, f64) {
    let dt = (1e-3f64).min(t / 100.0);
    let steps = (t / dt - 1e-9).ceil() as usize;
    (steps, t / steps as f64)
}

fn check_density(g: &GridOperator, mu0: &[f64]) -> Result<()> {
    if mu0.len() != g.n() {
        return Err(Error::Config(format!("density has {} values, grid {}", mu0.len(), g.n())));
    }
    if mu0.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Config("density must be finite and non-negative".into()));
    }
    let mass = mu0.iter().sum::<f64>() * g.cell_volume();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("density has mass {mass}, expected 1")));
    }
    Ok(())
}

/// Crank–Nicolson in time with `dt = t/⌈t/min(10⁻³, t/100)⌉`, started by
/// four backward-Euler half steps to damp the stiff modes of rough data.
/// Both schemes share the matrix `I − (dt/2)M`.
fn time_march(g: &GridOperator, v: &mut [f64], t: f64, transpose: bool, clamp: bool) -> Result<(usize, f64, f64)> {
    let (steps, dt) = schedule(t);
    let lu = g.band(1.0, -0.5 * dt, transpose)?;
    let mut clamp_magnitude = 0.0f64;
    let mut fix = |v: &mut [f64]| {
        if clamp {
            for x in v.iter_mut() {
                if *x < 0.0 {
                    clamp_magnitude = clamp_magnitude.max(-*x);
                    *x = 0.0;
                }
            }
        }
    };
    for _ in 0..RANNACHER_HALF_STEPS.min(2 * steps) {
        lu.solve_in_place(v);
        fix(v);
    }
    let cn_steps = steps.saturating_sub(RANNACHER_HALF_STEPS / 2);
    for _ in 0..cn_steps {
        let mv = if transpose { g.apply_adjoint(v) } else { g.apply(v) };
        for (x, m) in v.iter_mut().zip(&mv) {
            *x += 0.5 * dt * m;
        }
        lu.solve_in_place(v);
        fix(v);
    }
    Ok((steps, dt, clamp_magnitude))
}

/// Forward evolution of a probability density `mu0` for time `t`.
pub fn evolve(g: &GridOperator, mu0: &[f64], t: f64) -> Result<Evolution> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("evolution time must be non-negative, got {t}")));
    }
    check_density(g, mu0)?;
    let mut v = mu0.to_vec();
    let (steps, dt, clamp_magnitude) = if t == 0.0 { (0, 0.0, 0.0) } else { time_march(g, &mut v, t, true, true)? };
    let survival = v.iter().sum::<f64>() * g.cell_volume();
    let conditioned = if t == 0.0 { mu0.to_vec() } else { v.iter().map(|x| x / survival).collect() };
    Ok(Evolution { unnormalized: v, survival, conditioned, clamp_magnitude, steps, dt })
}

/// Law at time `t` conditioned on survival.
pub fn conditioned_evolution(g: &GridOperator, mu0: &[f64], t: f64) -> Result<Vec<f64>> {
    Ok(evolve(g, mu0, t)?.conditioned)
}

/// `P_{μ_0}(τ > t)`.
pub fn survival_probability(g: &GridOperator, mu0: &[f64], t: f64) -> Result<f64> {
    Ok(evolve(g, mu0, t)?.survival)
}

/// `u_f(x) = E_x[f(X_t); τ > t]` and `u_1(x) = P_x(τ > t)` on the grid,
/// computed once with the same time stepping as [`evolve`] applied to the
/// transposed system, so that `Σ μ u_f / Σ μ u_1` equals the conditioned
/// expectation of `f` under the evolved histogram `μ` for any start `μ`.
#[derive(Clone, Debug)]
pub struct BackwardEvaluator {
    pub t: f64,
    pub u_f: Vec<f64>,
    pub u_1: Vec<f64>,
}

impl BackwardEvaluator {
    pub fn new(g: &GridOperator, f: impl Fn(&[f64]) -> f64, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("evaluation time must be non-negative, got {t}")));
        }
        let mut u_f: Vec<f64> = g.nodes().iter().map(|x| f(x)).collect();
        let mut u_1 = vec![1.0; g.n()];
        if t > 0.0 {
            time_march(g, &mut u_f, t, false, false)?;
            time_march(g, &mut u_1, t, false, false)?;
        }
        Ok(BackwardEvaluator { t, u_f, u_1 })
    }

    /// `E_μ[f(X_t) | τ > t]` for a node density `μ`.
    pub fn conditioned_expectation(&self, mu: &[f64]) -> f64 {
        let num: f64 = mu.iter().zip(&self.u_f).map(|(a, b)| a * b).sum();
        let den: f64 = mu.iter().zip(&self.u_1).map(|(a, b)| a * b).sum();
        num / den
    }
}

/// Total-variation distance (factor-2 convention) between node densities.
pub fn node_tv(g: &GridOperator, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * g.cell_volume()
}
