//! Potentials `U` on bounded domains, their assumption checks and the
//! critical height `c*`.

mod builtin;
mod critical;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use builtin::{
    builtin_potential, flat_interval, BuiltinPotential, DoubleWell1d, Flat, Quadratic1d, RadialWell2d, TiltedDoubleWell1d,
};
pub use critical::{critical_height, CriticalHeightReport};
pub use validate::{validate_assumption1, ClauseResult, ValidationReport};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};

/// A smooth energy landscape with analytic derivatives.
pub trait Landscape: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn laplacian(&self, x: &[f64]) -> f64;
}

/// A potential together with the domain it is killed on, the temperature
/// `ε` and the boundary energy `U_0`.
#[derive(Clone)]
pub struct PotentialSpec {
    name: String,
    params: BTreeMap<String, f64>,
    landscape: Arc<dyn Landscape>,
    domain: DomainSpec,
    epsilon: f64,
    boundary_level: f64,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("domain", &self.domain)
            .field("epsilon", &self.epsilon)
            .field("boundary_level", &self.boundary_level)
            .finish()
    }
}

impl PotentialSpec {
    pub fn new(
        name: impl Into<String>,
        landscape: Arc<dyn Landscape>,
        domain: DomainSpec,
        epsilon: f64,
        boundary_level: f64,
    ) -> Result<Self> {
        if landscape.dim() != domain.dim() {
            return Err(Error::Config(format!(
                "potential has dimension {} but the domain has dimension {}",
                landscape.dim(),
                domain.dim()
            )));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        if !boundary_level.is_finite() {
            return Err(Error::Config("boundary level must be finite".into()));
        }
        Ok(Self {
            name: name.into(),
            params: BTreeMap::new(),
            landscape,
            domain,
            epsilon,
            boundary_level,
        })
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    /// Same landscape and domain at another temperature.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        let mut p = self.clone();
        p.epsilon = epsilon;
        Ok(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn boundary_level(&self) -> f64 {
        self.boundary_level
    }

    pub fn landscape(&self) -> &Arc<dyn Landscape> {
        &self.landscape
    }

    #[inline]
    pub fn u(&self, x: &[f64]) -> f64 {
        self.landscape.value(x)
    }

    #[inline]
    pub fn grad_u(&self, x: &[f64], out: &mut [f64]) {
        self.landscape.gradient(x, out)
    }

    #[inline]
    pub fn laplacian_u(&self, x: &[f64]) -> f64 {
        self.landscape.laplacian(x)
    }
}

/// Regular lattice over the bounding box of a domain, restricted to nodes
/// strictly inside it. Shared by the validation and critical-height grids.
pub(crate) struct InteriorLattice {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub spacing: Vec<f64>,
    /// Number of cells per axis; nodes are indexed `0..=cells`.
    pub cells: usize,
    /// Lattice index -> compact interior index.
    pub compact: Vec<Option<usize>>,
    /// Compact interior index -> lattice multi-index.
    pub nodes: Vec<Vec<usize>>,
}

impl InteriorLattice {
    pub fn new(domain: &DomainSpec, cells: usize) -> Result<Self> {
        let dim = domain.dim();
        if dim > 3 {
            return Err(Error::Unsupported(format!("lattice computations in dimension {dim}")));
        }
        let (lo, hi) = domain.bounding_box();
        let spacing: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) / cells as f64).collect();
        let per_axis = cells + 1;
        let total = per_axis.pow(dim as u32);
        let mut compact = vec![None; total];
        let mut nodes = Vec::new();
        let mut x = vec![0.0; dim];
        for (flat, slot) in compact.iter_mut().enumerate() {
            let idx = unflatten(flat, per_axis, dim);
            for k in 0..dim {
                x[k] = lo[k] + idx[k] as f64 * spacing[k];
            }
            // Box faces are boundary even when rounding puts them inside.
            let on_face = idx.iter().any(|&i| i == 0 || i == cells);
            if !on_face && domain.inside(&x) {
                *slot = Some(nodes.len());
                nodes.push(idx);
            }
        }
        Ok(Self { dim, lo, spacing, cells, compact, nodes })
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        self.nodes[node]
            .iter()
            .enumerate()
            .map(|(k, &i)| self.lo[k] + i as f64 * self.spacing[k])
            .collect()
    }

    /// Interior neighbours in the full `3^d - 1` (king's move) stencil.
    pub fn neighbours(&self, node: usize, out: &mut Vec<usize>) {
        out.clear();
        let idx = &self.nodes[node];
        let per_axis = self.cells + 1;
        let n_offsets = 3usize.pow(self.dim as u32);
        'offsets: for code in 0..n_offsets {
            let mut rem = code;
            let mut flat = 0usize;
            let mut stride = 1usize;
            let mut all_zero = true;
            for &i in idx.iter().take(self.dim) {
                let off = (rem % 3) as isize - 1;
                rem /= 3;
                if off != 0 {
                    all_zero = false;
                }
                let j = i as isize + off;
                if j < 0 || j >= per_axis as isize {
                    continue 'offsets;
                }
                flat += j as usize * stride;
                stride *= per_axis;
            }
            if all_zero {
                continue;
            }
            if let Some(c) = self.compact[flat] {
                out.push(c);
            }
        }
    }
}

fn unflatten(mut flat: usize, per_axis: usize, dim: usize) -> Vec<usize> {
    let mut idx = vec![0; dim];
    for slot in idx.iter_mut() {
        *slot = flat % per_axis;
        flat /= per_axis;
    }
    idx
}

/// Armijo gradient descent from a lattice point, kept inside the domain.
pub(crate) fn polish_minimum(p: &PotentialSpec, mut x: Vec<f64>) -> (Vec<f64>, f64) {
    let d = x.len();
    let mut g = vec![0.0; d];
    let mut v = p.u(&x);
    let mut trial = vec![0.0; d];
    for _ in 0..500 {
        p.grad_u(&x, &mut g);
        let gn2: f64 = g.iter().map(|a| a * a).sum();
        if gn2 < 1e-30 {
            break;
        }
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-16 {
            for k in 0..d {
                trial[k] = x[k] - step * g[k];
            }
            if p.domain().inside(&trial) {
                let tv = p.u(&trial);
                if tv <= v - 1e-4 * step * gn2 {
                    x.copy_from_slice(&trial);
                    v = tv;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, v)
}
