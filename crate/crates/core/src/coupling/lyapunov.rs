use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::{critical_height, InteriorLattice, PotentialSpec};

const COLLAR_FRACTION: f64 = 0.05;
const MONOTONE_GRID: usize = 10_000;

/// `V = f∘U` with `f(u) = u` below `u_switch` and a quintic bridge up to
/// `f(U_0) = V_0`.
#[derive(Clone, Debug, Serialize)]
pub struct LyapunovSpec {
    pub v0: f64,
    pub c1: f64,
    pub c2: f64,
    pub u_switch: f64,
    pub boundary_level: f64,
    /// `(a, b, c)` of `h(s) = s + a s³ + b s⁴ + c s⁵`, where
    /// `f(u) = u_switch + L h((u − u_switch)/L)` and `L = U_0 − u_switch`.
    pub f_params: [f64; 3],
    /// Slope `f′(U_0)` actually used.
    pub end_slope: f64,
    pub min_f_prime: f64,
}

impl LyapunovSpec {
    fn width(&self) -> f64 {
        self.boundary_level - self.u_switch
    }

    pub fn f(&self, u: f64) -> f64 {
        if u <= self.u_switch {
            return u;
        }
        if u >= self.boundary_level {
            return self.v0;
        }
        let l = self.width();
        let s = (u - self.u_switch) / l;
        let [a, b, c] = self.f_params;
        self.u_switch + l * (s + s * s * s * (a + s * (b + s * c)))
    }

    pub fn f_prime(&self, u: f64) -> f64 {
        if u <= self.u_switch {
            return 1.0;
        }
        let s = ((u - self.u_switch) / self.width()).min(1.0);
        let [a, b, c] = self.f_params;
        1.0 + s * s * (3.0 * a + s * (4.0 * b + s * 5.0 * c))
    }

    pub fn f_second(&self, u: f64) -> f64 {
        if u <= self.u_switch {
            return 0.0;
        }
        let s = ((u - self.u_switch) / self.width()).min(1.0);
        let [a, b, c] = self.f_params;
        s * (6.0 * a + s * (12.0 * b + s * 20.0 * c)) / self.width()
    }

    pub fn value(&self, p: &PotentialSpec, x: &[f64]) -> f64 {
        self.f(p.u(x))
    }

    /// `LV = f′(U)(εΔU − |∇U|²) + ε f″(U)|∇U|²`.
    pub fn generator(&self, p: &PotentialSpec, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        p.grad_u(x, &mut g);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let u = p.u(x);
        let eps = p.epsilon();
        self.f_prime(u) * (eps * p.laplacian_u(x) - g2) + eps * self.f_second(u) * g2
    }

    /// Threshold `3C_1` defining `B = {V > 3C_1}`.
    pub fn collar_threshold(&self) -> f64 {
        3.0 * self.c1
    }

    pub fn in_collar(&self, p: &PotentialSpec, x: &[f64]) -> bool {
        self.value(p, x) > self.collar_threshold()
    }
}

/// Coefficients of `h` with `h(0)=0, h′(0)=1, h″(0)=0, h(1)=m, h′(1)=m1,
/// h″(1)=0`.
fn quintic(m: f64, m1: f64) -> [f64; 3] {
    let k = m - 1.0;
    let j = m1 - 1.0;
    [10.0 * k - 4.0 * j, 7.0 * j - 15.0 * k, 6.0 * k - 3.0 * j]
}

/// Builds `V`. `v0` defaults to `4 sup_D U + 1`; `u_switch` defaults to
/// `(c* + U_0)/2`, clipped to the minimum of `U` over a collar of width 5% of
/// the diameter. The sup and the collar minimum are taken on a lattice with
/// `grid_resolution` cells per axis.
pub fn build_lyapunov(
    p: &PotentialSpec,
    v0: Option<f64>,
    u_switch: Option<f64>,
    grid_resolution: usize,
) -> Result<LyapunovSpec> {
    let u0 = p.boundary_level();
    let lattice = InteriorLattice::new(p.domain(), grid_resolution)?;
    let dom = p.domain();
    let width = COLLAR_FRACTION * dom.diameter();
    let mut sup_u = u0;
    let mut collar_min = u0;
    for i in 0..lattice.nodes.len() {
        let x = lattice.point(i);
        let u = p.u(&x);
        sup_u = sup_u.max(u);
        if dom.signed_distance(&x) > -width {
            collar_min = collar_min.min(u);
        }
    }
    let v0 = v0.unwrap_or(4.0 * sup_u + 1.0);
    if !(v0 >= 4.0 * sup_u + 1.0) {
        return Err(Error::Config(format!("v0 = {v0} must be at least 4·sup U + 1 = {}", 4.0 * sup_u + 1.0)));
    }
    let us = match u_switch {
        Some(us) => us,
        None => {
            let c_star = critical_height(p, grid_resolution)?.c_star;
            (0.5 * (c_star + u0)).min(collar_min)
        }
    };
    if !(us > 0.0 && us < u0) {
        return Err(Error::Config(format!("u_switch = {us} must lie in (0, U_0 = {u0})")));
    }
    // U is continuous on a connected domain with min 0 and boundary value
    // U_0 > u_switch, so sup{U ≤ u_switch} = u_switch.
    let c1 = us + 0.25;
    let c2 = 3.0 * c1;
    if !(v0 > 4.0 * c1) {
        return Err(Error::Config(format!("v0 = {v0} must exceed 4·C_1 = {}", 4.0 * c1)));
    }
    let l = u0 - us;
    let m = (v0 - us) / l;
    let mut slope = m;
    for _ in 0..2 {
        let spec = LyapunovSpec {
            v0,
            c1,
            c2,
            u_switch: us,
            boundary_level: u0,
            f_params: quintic(m, slope),
            end_slope: slope,
            min_f_prime: f64::NAN,
        };
        let min_fp = (0..=MONOTONE_GRID)
            .map(|k| spec.f_prime(us + l * k as f64 / MONOTONE_GRID as f64))
            .fold(f64::INFINITY, f64::min);
        if min_fp > 0.0 {
            return Ok(LyapunovSpec { min_f_prime: min_fp, ..spec });
        }
        slope *= 2.0;
    }
    Err(Error::Construction(format!("no monotone quintic bridge from u_switch = {us} to V_0 = {v0}")))
}
