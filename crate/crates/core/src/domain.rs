//! Bounded open domains: inside test, signed distance, outward normals and
//! the half-space geometry used by the Brownian-bridge exit correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Interval { a: f64, b: f64 },
    Hyperrectangle { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

/// A bounded open domain `D`. `signed_distance` is negative exactly on `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    kind: DomainKind,
    dim: usize,
}

impl DomainSpec {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Config(format!("interval requires finite a < b, got ({a}, {b})")));
        }
        Ok(Self { kind: DomainKind::Interval { a, b }, dim: 1 })
    }

    pub fn hyperrectangle(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Config("hyperrectangle bounds must be non-empty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
            return Err(Error::Config("hyperrectangle requires finite lo < hi on every axis".into()));
        }
        let dim = lo.len();
        Ok(Self { kind: DomainKind::Hyperrectangle { lo, hi }, dim })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("ball center must be a finite, non-empty vector".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        let dim = center.len();
        Ok(Self { kind: DomainKind::Ball { center, radius }, dim })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn inside(&self, x: &[f64]) -> bool {
        // Specialised fast paths; equivalent to `signed_distance(x) < 0`.
        match &self.kind {
            DomainKind::Interval { a, b } => x[0] > *a && x[0] < *b,
            DomainKind::Hyperrectangle { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v > l && v < h)
            }
            DomainKind::Ball { .. } => self.signed_distance(x) < 0.0,
        }
    }

    /// Signed Euclidean distance to the boundary, negative inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            DomainKind::Interval { a, b } => box_sdf(x, std::slice::from_ref(a), std::slice::from_ref(b)),
            DomainKind::Hyperrectangle { lo, hi } => box_sdf(x, lo, hi),
            DomainKind::Ball { center, radius } => norm_diff(x, center) - radius,
        }
    }

    /// Unit outward normal of the boundary point nearest to `x`.
    pub fn outward_normal(&self, x: &[f64]) -> Vec<f64> {
        let mut n = vec![0.0; self.dim];
        match &self.kind {
            DomainKind::Interval { a, b } => {
                n[0] = if (x[0] - a).abs() <= (b - x[0]).abs() { -1.0 } else { 1.0 };
            }
            DomainKind::Hyperrectangle { lo, hi } => {
                let (axis, upper, _) = nearest_face(x, lo, hi);
                n[axis] = if upper { 1.0 } else { -1.0 };
            }
            DomainKind::Ball { center, .. } => {
                let r = norm_diff(x, center);
                if r == 0.0 {
                    n[0] = 1.0;
                } else {
                    for k in 0..self.dim {
                        n[k] = (x[k] - center[k]) / r;
                    }
                }
            }
        }
        n
    }

    /// Unsigned distances of `start` and `end` to the tangent half-space of
    /// the boundary face nearest to `end`.
    pub fn face_distances(&self, start: &[f64], end: &[f64]) -> (f64, f64) {
        match &self.kind {
            DomainKind::Interval { a, b } => {
                if (end[0] - a).abs() <= (b - end[0]).abs() {
                    ((start[0] - a).abs(), (end[0] - a).abs())
                } else {
                    ((b - start[0]).abs(), (b - end[0]).abs())
                }
            }
            DomainKind::Hyperrectangle { lo, hi } => {
                let (k, upper, _) = nearest_face(end, lo, hi);
                if upper {
                    ((hi[k] - start[k]).abs(), (hi[k] - end[k]).abs())
                } else {
                    ((start[k] - lo[k]).abs(), (end[k] - lo[k]).abs())
                }
            }
            DomainKind::Ball { center, radius } => {
                let mut r = norm_diff(end, center);
                let pivot = if r > 0.0 { end } else { start };
                if r == 0.0 {
                    r = norm_diff(start, center);
                }
                if r == 0.0 {
                    return (*radius, *radius);
                }
                let proj = |p: &[f64]| -> f64 {
                    p.iter()
                        .zip(center)
                        .zip(pivot)
                        .map(|((pk, ck), qk)| (pk - ck) * (qk - ck) / r)
                        .sum()
                };
                ((radius - proj(start)).abs(), (radius - proj(end)).abs())
            }
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            DomainKind::Interval { a, b } => (vec![*a], vec![*b]),
            DomainKind::Hyperrectangle { lo, hi } => (lo.clone(), hi.clone()),
            DomainKind::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.kind {
            DomainKind::Interval { a, b } => b - a,
            DomainKind::Hyperrectangle { lo, hi } => {
                lo.iter().zip(hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
            }
            DomainKind::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Points on `∂D`. Intervals return both endpoints; 2D balls return
    /// `count` uniform angular samples; rectangles sample each face on a
    /// regular grid.
    pub fn boundary_samples(&self, count: usize) -> Vec<Vec<f64>> {
        match &self.kind {
            DomainKind::Interval { a, b } => vec![vec![*a], vec![*b]],
            DomainKind::Ball { center, radius } => {
                if self.dim == 1 {
                    return vec![vec![center[0] - radius], vec![center[0] + radius]];
                }
                // Angular samples in the first coordinate plane, plus the
                // remaining axis poles.
                let mut out: Vec<Vec<f64>> = (0..count)
                    .map(|k| {
                        let th = std::f64::consts::TAU * k as f64 / count as f64;
                        let mut p = center.clone();
                        p[0] += radius * th.cos();
                        p[1] += radius * th.sin();
                        p
                    })
                    .collect();
                for axis in 2..self.dim {
                    for s in [-1.0, 1.0] {
                        let mut p = center.clone();
                        p[axis] += s * radius;
                        out.push(p);
                    }
                }
                out
            }
            DomainKind::Hyperrectangle { lo, hi } => {
                let d = self.dim;
                if d == 1 {
                    return vec![vec![lo[0]], vec![hi[0]]];
                }
                let faces = 2 * d;
                let per_face = (count / faces).max(1);
                let per_axis = ((per_face as f64).powf(1.0 / (d - 1) as f64).round() as usize).max(2);
                let mut out = Vec::new();
                for axis in 0..d {
                    for &upper in &[false, true] {
                        let others: Vec<usize> = (0..d).filter(|&k| k != axis).collect();
                        let total = per_axis.pow(others.len() as u32);
                        for idx in 0..total {
                            let mut p = vec![0.0; d];
                            p[axis] = if upper { hi[axis] } else { lo[axis] };
                            let mut rem = idx;
                            for &k in &others {
                                let j = rem % per_axis;
                                rem /= per_axis;
                                // open face interior: avoid corners
                                let frac = (j as f64 + 0.5) / per_axis as f64;
                                p[k] = lo[k] + frac * (hi[k] - lo[k]);
                            }
                            out.push(p);
                        }
                    }
                }
                out
            }
        }
    }
}

fn norm_diff(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn box_sdf(x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut outside = 0.0;
    let mut inside_max = f64::NEG_INFINITY;
    for k in 0..x.len() {
        let c = 0.5 * (lo[k] + hi[k]);
        let half = 0.5 * (hi[k] - lo[k]);
        let q = (x[k] - c).abs() - half;
        if q > 0.0 {
            outside += q * q;
        }
        inside_max = inside_max.max(q);
    }
    if outside > 0.0 {
        outside.sqrt()
    } else {
        inside_max
    }
}

/// (axis, is_upper_face, distance) of the face hyperplane closest to `x`.
fn nearest_face(x: &[f64], lo: &[f64], hi: &[f64]) -> (usize, bool, f64) {
    let mut best = (0, false, f64::INFINITY);
    for k in 0..x.len() {
        let dl = (x[k] - lo[k]).abs();
        let dh = (hi[k] - x[k]).abs();
        if dl < best.2 {
            best = (k, false, dl);
        }
        if dh < best.2 {
            best = (k, true, dh);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_sign_convention() {
        let d = DomainSpec::interval(-2.0, 2.0).unwrap();
        assert!(d.inside(&[0.0]));
        assert!(!d.inside(&[2.0]));
        assert_eq!(d.signed_distance(&[1.5]), -0.5);
        assert_eq!(d.signed_distance(&[3.0]), 1.0);
        assert_eq!(d.outward_normal(&[2.0]), vec![1.0]);
        assert_eq!(d.outward_normal(&[-2.0]), vec![-1.0]);
    }

    #[test]
    fn ball_normals_are_unit() {
        let d = DomainSpec::ball(vec![0.0, 0.0], 2.0).unwrap();
        for p in d.boundary_samples(256) {
            let n = d.outward_normal(&p);
            let len: f64 = n.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((len - 1.0).abs() < 1e-12);
            assert!(d.signed_distance(&p).abs() < 1e-12);
        }
        assert_eq!(d.boundary_samples(256).len(), 256);
    }

    #[test]
    fn rectangle_samples_lie_on_boundary() {
        let d = DomainSpec::hyperrectangle(vec![0.0, -1.0], vec![1.0, 2.0]).unwrap();
        for p in d.boundary_samples(64) {
            assert!(d.signed_distance(&p).abs() < 1e-12, "{p:?}");
            let n = d.outward_normal(&p);
            assert_eq!(n.iter().map(|v| v * v).sum::<f64>(), 1.0);
        }
        assert!(d.signed_distance(&[0.5, 0.5]) < 0.0);
        assert!((d.signed_distance(&[2.0, 3.0]) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn face_distances_interval() {
        let d = DomainSpec::interval(0.0, 10.0).unwrap();
        assert_eq!(d.face_distances(&[1.0], &[0.5]), (1.0, 0.5));
        assert_eq!(d.face_distances(&[9.0], &[9.5]), (1.0, 0.5));
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(DomainSpec::interval(1.0, 1.0).is_err());
        assert!(DomainSpec::ball(vec![0.0], -1.0).is_err());
        assert!(DomainSpec::hyperrectangle(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn inside_iff_negative_distance(x in -3.0f64..3.0, y in -3.0f64..3.0) {
                let b = DomainSpec::ball(vec![0.2, -0.1], 2.0).unwrap();
                prop_assert_eq!(b.inside(&[x, y]), b.signed_distance(&[x, y]) < 0.0);
                let r = DomainSpec::hyperrectangle(vec![-1.0, -2.0], vec![1.5, 1.0]).unwrap();
                prop_assert_eq!(r.inside(&[x, y]), r.signed_distance(&[x, y]) < 0.0);
                let i = DomainSpec::interval(-1.0, 2.0).unwrap();
                prop_assert_eq!(i.inside(&[x]), i.signed_distance(&[x]) < 0.0);
                // bounded
                if b.inside(&[x, y]) { prop_assert!((x * x + y * y).sqrt() <= 2.0 + 0.3); }
            }
        }
    }
}
