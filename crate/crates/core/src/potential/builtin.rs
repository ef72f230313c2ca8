use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use super::{Landscape, PotentialSpec};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};

/// `u(x) = (x² − 1)²`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell1d;

impl Landscape for DoubleWell1d {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        let s = x[0] * x[0] - 1.0;
        s * s
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        12.0 * x[0] * x[0] - 4.0
    }
}

/// `u(x) = s·((x² − 1)² + τx − v_min)`, shifted so that the deeper (left)
/// well sits at zero.
#[derive(Debug, Clone, Copy)]
pub struct TiltedDoubleWell1d {
    pub tilt: f64,
    pub scale: f64,
    offset: f64,
}

impl TiltedDoubleWell1d {
    /// Largest tilt for which both wells survive: `8/(3√3)`.
    pub const MAX_TILT: f64 = 1.539_600_717_839_002;

    pub fn new(tilt: f64, scale: f64) -> Result<Self> {
        if !(0.0..Self::MAX_TILT).contains(&tilt) {
            return Err(Error::Config(format!("tilt must lie in [0, {:.4}), got {tilt}", Self::MAX_TILT)));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        let mut w = Self { tilt, scale, offset: 0.0 };
        let left = w.critical_points()[0];
        w.offset = w.raw(left);
        Ok(w)
    }

    fn raw(&self, x: f64) -> f64 {
        let s = x * x - 1.0;
        s * s + self.tilt * x
    }

    /// Left minimum, saddle, right minimum.
    pub fn critical_points(&self) -> [f64; 3] {
        let g = |x: f64| 4.0 * x * (x * x - 1.0) + self.tilt;
        let c = 1.0 / 3f64.sqrt();
        [bisect(g, -2.0, -c), bisect(g, -c, c), bisect(g, c, 2.0)]
    }
}

impl Landscape for TiltedDoubleWell1d {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.scale * (self.raw(x[0]) - self.offset)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.scale * (4.0 * x[0] * (x[0] * x[0] - 1.0) + self.tilt);
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        self.scale * (12.0 * x[0] * x[0] - 4.0)
    }
}

/// `u(x) = (|x|² − 1)²` in two dimensions.
#[derive(Debug, Clone, Copy)]
pub struct RadialWell2d;

impl Landscape for RadialWell2d {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        let s = x[0] * x[0] + x[1] * x[1] - 1.0;
        s * s
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let s = x[0] * x[0] + x[1] * x[1] - 1.0;
        out[0] = 4.0 * s * x[0];
        out[1] = 4.0 * s * x[1];
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        // ∇·(4 s x) = 4(2|x|²) + 4 s d, d = 2
        let r2 = x[0] * x[0] + x[1] * x[1];
        8.0 * r2 + 8.0 * (r2 - 1.0)
    }
}

/// `u(x) = x²`.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic1d;

impl Landscape for Quadratic1d {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        x[0] * x[0]
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x[0];
    }
    fn laplacian(&self, _x: &[f64]) -> f64 {
        2.0
    }
}

/// `u ≡ 0` in any dimension. Violates the boundary clauses; used to check
/// the spectral oracle against the Dirichlet Laplacian.
#[derive(Debug, Clone, Copy)]
pub struct Flat(pub usize);

impl Landscape for Flat {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn laplacian(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

/// `u ≡ 0` on `(a, b)`.
pub fn flat_interval(a: f64, b: f64, epsilon: f64) -> Result<PotentialSpec> {
    PotentialSpec::new("flat_1d", Arc::new(Flat(1)), DomainSpec::interval(a, b)?, epsilon, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinPotential {
    DoubleWell1d,
    TiltedDoubleWell1d,
    RadialWell2d,
    Quadratic1d,
}

impl BuiltinPotential {
    pub const ALL: [BuiltinPotential; 4] = [
        BuiltinPotential::DoubleWell1d,
        BuiltinPotential::TiltedDoubleWell1d,
        BuiltinPotential::RadialWell2d,
        BuiltinPotential::Quadratic1d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinPotential::DoubleWell1d => "double_well_1d",
            BuiltinPotential::TiltedDoubleWell1d => "tilted_double_well_1d",
            BuiltinPotential::RadialWell2d => "radial_well_2d",
            BuiltinPotential::Quadratic1d => "quadratic_1d",
        }
    }

    /// Recognised parameters with their defaults.
    pub fn default_params(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            BuiltinPotential::DoubleWell1d => &[("half_width", 2.0)],
            BuiltinPotential::TiltedDoubleWell1d => &[("tilt", 0.75), ("scale", 0.5), ("boundary_level", 1.0)],
            BuiltinPotential::RadialWell2d => &[("radius", 2.0)],
            BuiltinPotential::Quadratic1d => &[("half_width", 1.0)],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }
}

impl FromStr for BuiltinPotential {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown potential '{s}'")))
    }
}

/// Builds a named potential at its default domain. `params` overrides the
/// defaults listed by [`BuiltinPotential::default_params`]:
///
/// * `double_well_1d`: `half_width ∈ (1, 4]` (domain `(−L, L)`, `U_0 = (L²−1)²`)
/// * `tilted_double_well_1d`: `tilt ∈ [0, 1.5)`, `scale > 0`, `boundary_level`
///   above the saddle energy; the interval is the connected sub-level set
///   `{u < U_0}` around both wells
/// * `radial_well_2d`: `radius ∈ (1, 4]`
/// * `quadratic_1d`: `half_width ∈ (0, 10]`
pub fn builtin_potential(name: &str, params: &BTreeMap<String, f64>, epsilon: f64) -> Result<PotentialSpec> {
    let kind: BuiltinPotential = name.parse()?;
    let mut resolved = kind.default_params();
    for (k, v) in params {
        match resolved.get_mut(k) {
            Some(slot) => *slot = *v,
            None => return Err(Error::Config(format!("potential '{name}' has no parameter '{k}'"))),
        }
    }
    let get = |k: &str| resolved[k];
    let spec = match kind {
        BuiltinPotential::DoubleWell1d => {
            let l = get("half_width");
            if !(l > 1.0 && l <= 4.0) {
                return Err(Error::Config(format!("half_width must lie in (1, 4], got {l}")));
            }
            let u0 = (l * l - 1.0) * (l * l - 1.0);
            PotentialSpec::new(name, Arc::new(DoubleWell1d), DomainSpec::interval(-l, l)?, epsilon, u0)?
        }
        BuiltinPotential::Quadratic1d => {
            let l = get("half_width");
            if !(l > 0.0 && l <= 10.0) {
                return Err(Error::Config(format!("half_width must lie in (0, 10], got {l}")));
            }
            PotentialSpec::new(name, Arc::new(Quadratic1d), DomainSpec::interval(-l, l)?, epsilon, l * l)?
        }
        BuiltinPotential::RadialWell2d => {
            let r = get("radius");
            if !(r > 1.0 && r <= 4.0) {
                return Err(Error::Config(format!("radius must lie in (1, 4], got {r}")));
            }
            let u0 = (r * r - 1.0) * (r * r - 1.0);
            PotentialSpec::new(name, Arc::new(RadialWell2d), DomainSpec::ball(vec![0.0, 0.0], r)?, epsilon, u0)?
        }
        BuiltinPotential::TiltedDoubleWell1d => {
            let w = TiltedDoubleWell1d::new(get("tilt"), get("scale"))?;
            let u0 = get("boundary_level");
            let [left, saddle, right] = w.critical_points();
            let saddle_u = w.value(&[saddle]);
            if !(u0.is_finite() && u0 > saddle_u) {
                return Err(Error::Config(format!(
                    "boundary_level must exceed the saddle energy {saddle_u:.6}, got {u0}"
                )));
            }
            let f = |x: f64| w.value(&[x]) - u0;
            // u grows without bound outside the wells, so a sign change exists.
            let far = 1.0 + (u0 / w.scale).sqrt().sqrt() + 2.0;
            let a = bisect(f, -far, left);
            let b = bisect(f, right, far);
            PotentialSpec::new(name, Arc::new(w), DomainSpec::interval(a, b)?, epsilon, u0)?
        }
    };
    Ok(spec.with_params(resolved))
}

/// Bisection for a sign change of `f` on `[lo, hi]`, to machine precision.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::validate_assumption1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn empty() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    #[test]
    fn defaults_match_closed_forms() {
        let dw = builtin_potential("double_well_1d", &empty(), 0.5).unwrap();
        assert_eq!(dw.boundary_level(), 9.0);
        assert_eq!(dw.u(&[2.0]), 9.0);
        assert_eq!(dw.u(&[1.0]), 0.0);
        let q = builtin_potential("quadratic_1d", &empty(), 0.5).unwrap();
        assert_eq!(q.boundary_level(), 1.0);
        let r = builtin_potential("radial_well_2d", &empty(), 0.5).unwrap();
        assert_eq!(r.boundary_level(), 9.0);
        assert_eq!(r.u(&[0.0, 2.0]), 9.0);
    }

    #[test]
    fn tilted_well_hits_boundary_level() {
        let p = builtin_potential("tilted_double_well_1d", &empty(), 0.5).unwrap();
        let (lo, hi) = p.domain().bounding_box();
        assert!((p.u(&lo) - 1.0).abs() < 1e-12);
        assert!((p.u(&hi) - 1.0).abs() < 1e-12);
        let w = TiltedDoubleWell1d::new(0.75, 0.5).unwrap();
        let [l, s, r] = w.critical_points();
        assert!(w.value(&[l]).abs() < 1e-14);
        assert!(w.value(&[r]) > 0.0 && w.value(&[s]) > w.value(&[r]));
    }

    #[test]
    fn unknown_name_or_param_is_config_error() {
        assert!(matches!(builtin_potential("mexican_hat", &empty(), 0.5), Err(Error::Config(_))));
        let mut p = empty();
        p.insert("width".into(), 1.0);
        assert!(matches!(builtin_potential("quadratic_1d", &p, 0.5), Err(Error::Config(_))));
        let mut p = empty();
        p.insert("boundary_level".into(), 0.1);
        assert!(builtin_potential("tilted_double_well_1d", &p, 0.5).is_err());
    }

    #[test]
    fn every_builtin_passes_validation() {
        for b in BuiltinPotential::ALL {
            let p = builtin_potential(b.as_str(), &empty(), 0.5).unwrap();
            let report = validate_assumption1(&p, 64).unwrap();
            assert!(report.passed(), "{}: {:#?}", b.as_str(), report);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for b in BuiltinPotential::ALL {
            let p = builtin_potential(b.as_str(), &empty(), 0.5).unwrap();
            let (lo, hi) = p.domain().bounding_box();
            let d = p.dim();
            let mut accepted = 0;
            let mut g = vec![0.0; d];
            while accepted < 1000 {
                let x: Vec<f64> = (0..d).map(|k| rng.random_range(lo[k]..hi[k])).collect();
                if !p.domain().inside(&x) {
                    continue;
                }
                accepted += 1;
                p.grad_u(&x, &mut g);
                let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
                let mut lap_fd = 0.0;
                for k in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (p.u(&xp) - p.u(&xm)) / (2.0 * h);
                    assert!((fd - g[k]).abs() <= 1e-5 * scale, "{} at {x:?}: {fd} vs {}", b.as_str(), g[k]);
                    let h2 = 1e-4;
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h2;
                    xm[k] -= h2;
                    lap_fd += (p.u(&xp) - 2.0 * p.u(&x) + p.u(&xm)) / (h2 * h2);
                }
                let lap = p.laplacian_u(&x);
                assert!((lap - lap_fd).abs() <= 1e-4 * lap.abs().max(1.0), "{}: {lap} vs {lap_fd}", b.as_str());
            }
        }
    }
}
