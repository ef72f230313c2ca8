use serde::Serialize;

use super::LyapunovSpec;
use crate::error::{Error, Result};
use crate::fv::{boundary_count, SystemState};
use crate::potential::PotentialSpec;

#[derive(Clone, Debug, Serialize)]
pub struct DistanceParams {
    pub alpha: f64,
    pub beta: f64,
    pub v0: f64,
    /// Surrogate for the proof constant `C_3`; only used in the informative
    /// first condition.
    pub c3: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    /// `min((1+2βC_1)/(1+βC_2), 2βC_1) + αC_3(1+2βV_0)`
    pub cond1_value: f64,
    pub cond1_pass: bool,
    pub cond1_informative: bool,
    /// `(1+2βV_0)/(1+V_0)`
    pub cond2_value: f64,
    pub cond2_pass: bool,
}

impl DistanceParams {
    pub fn new(alpha: f64, beta: f64, v0: f64, c3: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.25) {
            return Err(Error::Config(format!("alpha must lie in (0, 1/4), got {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        if !(v0 > 0.0 && v0.is_finite()) || !(c3 > 0.0 && c3.is_finite()) {
            return Err(Error::Config(format!("v0 and c3 must be positive, got {v0} and {c3}")));
        }
        Ok(DistanceParams { alpha, beta, v0, c3 })
    }

    pub fn conditions(&self, lv: &LyapunovSpec) -> ConditionReport {
        let (a, b, v0) = (self.alpha, self.beta, self.v0);
        let contraction = ((1.0 + 2.0 * b * lv.c1) / (1.0 + b * lv.c2)).min(2.0 * b * lv.c1);
        let cond1_value = contraction + a * self.c3 * (1.0 + 2.0 * b * v0);
        let cond2_value = (1.0 + 2.0 * b * v0) / (1.0 + v0);
        ConditionReport {
            cond1_value,
            cond1_pass: cond1_value < 1.0,
            cond1_informative: true,
            cond2_value,
            cond2_pass: cond2_value < 1.0,
        }
    }
}

/// `d(x,y) = Σ 1{x_i≠y_i}(1 + βV(x_i) + βV(y_i))
///         + (1+V_0)N(1{A(x)>αN} + 1{A(y)>αN})1{x≠y}`.
pub fn distance_d(p: &PotentialSpec, sx: &SystemState, sy: &SystemState, lv: &LyapunovSpec, dp: &DistanceParams) -> f64 {
    assert_eq!(sx.n(), sy.n(), "systems of different sizes");
    let n = sx.n();
    let mut sum = 0.0;
    let mut differ = false;
    for i in 0..n {
        let (x, y) = (sx.position(i), sy.position(i));
        if x != y {
            differ = true;
            sum += 1.0 + dp.beta * (lv.value(p, x) + lv.value(p, y));
        }
    }
    if !differ {
        return 0.0;
    }
    let cap = dp.alpha * n as f64;
    let heavy = [sx, sy].iter().filter(|s| boundary_count(p, s, lv) as f64 > cap).count();
    sum + (1.0 + dp.v0) * n as f64 * heavy as f64
}
