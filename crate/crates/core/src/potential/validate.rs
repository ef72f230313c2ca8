use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{critical_height, polish_minimum, InteriorLattice, PotentialSpec};
use crate::error::{Error, Result};

const TOL: f64 = 1e-8;
const BOUNDARY_SAMPLES: usize = 256;
const GRADIENT_SAMPLES: usize = 200;
const COLLAR_FRACTION: f64 = 0.05;

/// One checked clause. `informative` clauses never fail a report.
#[derive(Clone, Debug, Serialize)]
pub struct ClauseResult {
    pub clause: String,
    pub pass: bool,
    pub witness_point: Option<Vec<f64>>,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub informative: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub grid_resolution: usize,
    pub clauses: Vec<ClauseResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.pass || c.informative)
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.clause == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.clauses)?)
    }
}

fn clause(name: &str, pass: bool, witness: Option<Vec<f64>>, value: Option<f64>) -> ClauseResult {
    ClauseResult { clause: name.to_string(), pass, witness_point: witness, value, informative: false }
}

/// Checks the standing assumptions on `(U, D)` numerically:
///
/// * `domain_bounded`
/// * `gradient_consistent`: analytic gradient against central differences
/// * `min_u_zero`: `min_D U = 0`
/// * `u_constant_on_boundary`: `U|∂D ≡ U_0`
/// * `boundary_level_exceeds_critical_height`: `U_0 > c*`
/// * `outward_gradient_positive`: `n(x)·∇U(x) > 0` on `∂D`
/// * `assumption3` (informative): `d = 1`, or `c* < (U_0 − U_1)/2` with
///   `U_1` the minimum over a collar of width 5% of the diameter
pub fn validate_assumption1(p: &PotentialSpec, grid_resolution: usize) -> Result<ValidationReport> {
    if grid_resolution < 16 {
        return Err(Error::Config(format!("grid_resolution must be at least 16, got {grid_resolution}")));
    }
    if p.landscape().dim() != p.domain().dim() {
        return Err(Error::Config("potential and domain dimensions differ".into()));
    }
    let domain = p.domain();
    let d = p.dim();
    let u0 = p.boundary_level();
    let mut clauses = Vec::new();

    clauses.push(clause("domain_bounded", domain.diameter().is_finite(), None, Some(domain.diameter())));

    // Analytic gradient consistency on a deterministic random sample.
    {
        let (lo, hi) = domain.bounding_box();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut g = vec![0.0; d];
        let mut worst = (0.0f64, None);
        let mut accepted = 0;
        let mut attempts = 0;
        while accepted < GRADIENT_SAMPLES && attempts < 100 * GRADIENT_SAMPLES {
            attempts += 1;
            let x: Vec<f64> = (0..d).map(|k| rng.random_range(lo[k]..hi[k])).collect();
            if domain.signed_distance(&x) > -1e-4 {
                continue;
            }
            accepted += 1;
            p.grad_u(&x, &mut g);
            let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for k in 0..d {
                let h = 1e-5;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (p.u(&xp) - p.u(&xm)) / (2.0 * h);
                let err = (fd - g[k]).abs() / scale;
                if err > worst.0 || worst.1.is_none() {
                    worst = (err, Some(x.clone()));
                }
            }
        }
        clauses.push(clause("gradient_consistent", worst.0 <= 1e-5, worst.1, Some(worst.0)));
    }

    let lattice = InteriorLattice::new(domain, grid_resolution)?;
    let energies: Vec<f64> = (0..lattice.nodes.len()).map(|i| p.u(&lattice.point(i))).collect();

    // min_D U = 0, refined from the best lattice node.
    {
        let best = (0..energies.len()).min_by(|&a, &b| energies[a].total_cmp(&energies[b]));
        match best {
            None => clauses.push(clause("min_u_zero", false, None, None)),
            Some(i) => {
                let (x, v) = polish_minimum(p, lattice.point(i));
                let pass = v.abs() <= TOL && energies[i] >= -TOL;
                clauses.push(clause("min_u_zero", pass, Some(x), Some(v)));
            }
        }
    }

    let samples = domain.boundary_samples(BOUNDARY_SAMPLES);

    // U constant (= U_0) on the boundary.
    {
        let vals: Vec<f64> = samples.iter().map(|x| p.u(x)).collect();
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let worst = (0..vals.len()).max_by(|&a, &b| (vals[a] - u0).abs().total_cmp(&(vals[b] - u0).abs()));
        let off_level = worst.map(|i| (vals[i] - u0).abs()).unwrap_or(0.0);
        let pass = max - min <= TOL && off_level <= TOL;
        clauses.push(clause("u_constant_on_boundary", pass, worst.map(|i| samples[i].clone()), Some(max - min)));
    }

    let c_star = critical_height(p, grid_resolution).map(|r| r.c_star);
    match &c_star {
        Ok(c) => clauses.push(clause("boundary_level_exceeds_critical_height", u0 > *c, None, Some(*c))),
        Err(_) => clauses.push(clause("boundary_level_exceeds_critical_height", false, None, None)),
    }

    // n·∇U > 0 on ∂D.
    {
        let mut g = vec![0.0; d];
        let mut worst: Option<(f64, usize)> = None;
        for (i, x) in samples.iter().enumerate() {
            p.grad_u(x, &mut g);
            let n = domain.outward_normal(x);
            let dot: f64 = n.iter().zip(&g).map(|(a, b)| a * b).sum();
            if worst.is_none_or(|(w, _)| dot < w) {
                worst = Some((dot, i));
            }
        }
        let (value, idx) = worst.unwrap_or((f64::NAN, 0));
        clauses.push(clause("outward_gradient_positive", value > 0.0, Some(samples[idx].clone()), Some(value)));
    }

    // Assumption 3 is only reported.
    {
        let width = COLLAR_FRACTION * domain.diameter();
        let collar: Vec<usize> = (0..lattice.nodes.len())
            .filter(|&i| domain.signed_distance(&lattice.point(i)) > -width)
            .collect();
        let (u1, witness) = collar
            .iter()
            .map(|&i| (energies[i], i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(v, i)| (v, Some(lattice.point(i))))
            .unwrap_or((u0, None));
        let mut g = vec![0.0; d];
        let min_grad = collar
            .iter()
            .map(|&i| {
                p.grad_u(&lattice.point(i), &mut g);
                g.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        let pass = if d == 1 {
            true
        } else {
            matches!(&c_star, Ok(c) if *c < 0.5 * (u0 - u1)) && min_grad > 0.0
        };
        let mut c = clause("assumption3", pass, witness, Some(u1));
        c.informative = true;
        clauses.push(c);
    }

    Ok(ValidationReport { grid_resolution, clauses })
}
