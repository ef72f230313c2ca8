use serde::Serialize;

use super::{polish_minimum, InteriorLattice, PotentialSpec};
use crate::error::{Error, Result};

/// Discrete estimate of the critical height `c* = sup c(x₁, x₂)` with
/// `c(x₁, x₂) = inf_ξ max_t U(ξ(t)) − U(x₁) − U(x₂)`.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalHeightReport {
    pub c_star: f64,
    /// Admissible window `(c*, U_0)` for the exponent `a` of the block time.
    pub a_window: (f64, f64),
    /// Strict local minima of the lattice, sorted by energy.
    pub minima: Vec<Vec<f64>>,
    /// Bottleneck energy of the maximising pair.
    pub saddle_value: f64,
    pub resolution: usize,
}

struct Components {
    parent: Vec<usize>,
    lowest_min: Vec<Option<f64>>,
}

impl Components {
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }
}

/// Computes `c*` by minimax paths on the lattice graph over `D` with
/// `grid_resolution` cells per axis.
///
/// Each lattice edge is weighted by the maximum of `U` along the segment, so
/// every lattice path is a genuine continuous path and the bottleneck is an
/// upper bound that can only drop when the lattice is refined. Minima are
/// polished off the lattice. Edges are merged in increasing weight; when two
/// components meet at weight `w`, the best pair across them uses the lowest
/// minimum of each side. Pairs `x₁ = x₂` contribute `−U(x₁)`, i.e. zero at
/// the global minimum. The caller is expected to have validated the
/// potential first.
pub fn critical_height(p: &PotentialSpec, grid_resolution: usize) -> Result<CriticalHeightReport> {
    if grid_resolution < 2 {
        return Err(Error::Config("grid_resolution must be at least 2".into()));
    }
    let lattice = InteriorLattice::new(p.domain(), grid_resolution)?;
    let n = lattice.nodes.len();
    if n == 0 {
        return Err(Error::Degenerate("no lattice node lies inside the domain".into()));
    }
    let points: Vec<Vec<f64>> = (0..n).map(|i| lattice.point(i)).collect();
    let energy: Vec<f64> = points.iter().map(|x| p.u(x)).collect();

    let mut nbrs = Vec::with_capacity(27);
    let mut is_min = vec![false; n];
    let mut edges = Vec::new();
    for i in 0..n {
        lattice.neighbours(i, &mut nbrs);
        is_min[i] = !nbrs.is_empty() && nbrs.iter().all(|&j| energy[i] < energy[j]);
        for &j in nbrs.iter().filter(|&&j| j > i) {
            edges.push((segment_max(p, &points[i], &points[j], energy[i], energy[j]), i, j));
        }
    }
    let mut minima: Vec<usize> = (0..n).filter(|&i| is_min[i]).collect();
    if minima.is_empty() {
        return Err(Error::Degenerate("no strict interior local minimum on the lattice".into()));
    }
    minima.sort_by(|&a, &b| energy[a].total_cmp(&energy[b]).then(a.cmp(&b)));
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut comps = Components { parent: (0..n).collect(), lowest_min: vec![None; n] };
    let mut global = f64::INFINITY;
    for &i in &minima {
        let v = polish_minimum(p, points[i].clone()).1.min(energy[i]);
        comps.lowest_min[i] = Some(v);
        global = global.min(v);
    }

    // Self pairs: c(x, x) = −U(x), maximal at the global minimum.
    let mut c_star = -global;
    let mut saddle_value = global;

    for &(w, i, j) in &edges {
        let ri = comps.find(i);
        let rj = comps.find(j);
        if ri == rj {
            continue;
        }
        let (mi, mj) = (comps.lowest_min[ri], comps.lowest_min[rj]);
        if let (Some(a), Some(b)) = (mi, mj) {
            let c = w - a - b;
            if c > c_star {
                c_star = c;
                saddle_value = w;
            }
        }
        comps.parent[rj] = ri;
        comps.lowest_min[ri] = match (mi, mj) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }

    // The continuum global minimum has U = 0; lattice offsets of order h²
    // must not push the estimate below the self-pair value.
    let c_star = c_star.max(0.0);
    Ok(CriticalHeightReport {
        c_star,
        a_window: (c_star, p.boundary_level()),
        minima: minima.iter().map(|&i| lattice.point(i)).collect(),
        saddle_value,
        resolution: grid_resolution,
    })
}

/// Maximum of `U` on the segment `[a, b]`: coarse scan, then golden section
/// around the best sample.
fn segment_max(p: &PotentialSpec, a: &[f64], b: &[f64], ua: f64, ub: f64) -> f64 {
    const SCAN: usize = 8;
    let mut x = vec![0.0; a.len()];
    let mut eval = |t: f64| {
        for k in 0..a.len() {
            x[k] = a[k] + t * (b[k] - a[k]);
        }
        p.u(&x)
    };
    // The maximum may sit between a node and its first scan sample, so the
    // golden-section bracket is always searched, endpoints included.
    let mut best = if ua >= ub { (ua, 0) } else { (ub, SCAN) };
    for k in 1..SCAN {
        let v = eval(k as f64 / SCAN as f64);
        if v > best.0 {
            best = (v, k);
        }
    }
    let k = best.1;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (k.saturating_sub(1) as f64 / SCAN as f64, (k + 1).min(SCAN) as f64 / SCAN as f64);
    let mut t1 = hi - g * (hi - lo);
    let mut t2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (eval(t1), eval(t2));
    for _ in 0..60 {
        if f1 > f2 {
            hi = t2;
            t2 = t1;
            f2 = f1;
            t1 = hi - g * (hi - lo);
            f1 = eval(t1);
        } else {
            lo = t1;
            t1 = t2;
            f1 = f2;
            t2 = lo + g * (hi - lo);
            f2 = eval(t2);
        }
    }
    best.0.max(f1).max(f2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::builtin_potential;
    use std::collections::BTreeMap;

    fn builtin(name: &str) -> PotentialSpec {
        builtin_potential(name, &BTreeMap::new(), 0.5).unwrap()
    }

    #[test]
    fn double_well_barrier_is_one() {
        let r = critical_height(&builtin("double_well_1d"), 2048).unwrap();
        assert!((r.c_star - 1.0).abs() <= 0.01, "{}", r.c_star);
        assert_eq!(r.minima.len(), 2);
        assert!((r.saddle_value - 1.0).abs() < 0.01);
        assert!(r.c_star < r.a_window.1);
    }

    #[test]
    fn single_well_has_zero_height() {
        let r = critical_height(&builtin("quadratic_1d"), 1024).unwrap();
        assert_eq!(r.c_star, 0.0);
        assert_eq!(r.minima.len(), 1);
    }

    #[test]
    fn radial_well_minimum_set_is_connected() {
        let r = critical_height(&builtin("radial_well_2d"), 256).unwrap();
        assert!(r.c_star.abs() <= 0.02, "{}", r.c_star);
    }

    #[test]
    fn tilted_well_matches_local_well_depth() {
        use crate::potential::{Landscape, TiltedDoubleWell1d};
        let p = builtin("tilted_double_well_1d");
        let w = TiltedDoubleWell1d::new(0.75, 0.5).unwrap();
        let [_, s, r] = w.critical_points();
        let exact = w.value(&[s]) - w.value(&[r]);
        let est = critical_height(&p, 4096).unwrap().c_star;
        assert!((est - exact).abs() < 1e-9, "{est} vs {exact}");
    }

    #[test]
    fn refinement_is_monotone_and_settles() {
        for (name, start, end) in [("double_well_1d", 64, 4096), ("tilted_double_well_1d", 64, 4096)] {
            let p = builtin(name);
            let mut res = start;
            let mut prev = critical_height(&p, res).unwrap().c_star;
            while res < end {
                res *= 2;
                let next = critical_height(&p, res).unwrap().c_star;
                assert!(next <= prev + 1e-9, "{name}: {prev} -> {next} at {res}");
                if res >= 2048 {
                    assert!((prev - next).abs() <= 0.02 * prev.max(1e-12), "{name}: {prev} -> {next}");
                }
                prev = next;
            }
        }
        let p = builtin("radial_well_2d");
        let coarse = critical_height(&p, 128).unwrap().c_star;
        let fine = critical_height(&p, 256).unwrap().c_star;
        assert!(fine <= coarse + 1e-9);
    }

    #[test]
    fn flat_potential_is_degenerate() {
        use crate::domain::DomainSpec;
        use crate::potential::Landscape;
        use std::sync::Arc;
        #[derive(Debug)]
        struct Flat;
        impl Landscape for Flat {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, _: &[f64]) -> f64 {
                0.0
            }
            fn gradient(&self, _: &[f64], out: &mut [f64]) {
                out[0] = 0.0;
            }
            fn laplacian(&self, _: &[f64]) -> f64 {
                0.0
            }
        }
        let p = PotentialSpec::new("flat", Arc::new(Flat), DomainSpec::interval(-1.0, 1.0).unwrap(), 1.0, 0.0).unwrap();
        assert!(matches!(critical_height(&p, 64), Err(Error::Degenerate(_))));
    }
}
