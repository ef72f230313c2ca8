use std::collections::BTreeMap;
use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::oracle::{build_operator, principal_eigenpair};
use crate::potential::{builtin_potential, flat_interval};
use crate::sde::{Purpose, RngStream, StreamId};

fn unit_grid(bins: usize) -> HistogramGrid {
    HistogramGrid::new(&[0.0], &[1.0], &[bins]).unwrap()
}

fn hist(masses: &[f64]) -> HistogramMeasure {
    HistogramMeasure::from_masses(unit_grid(masses.len()), masses.to_vec()).unwrap()
}

fn state(xs: &[f64]) -> SystemState {
    SystemState::from_flat(1, xs.to_vec()).unwrap()
}

#[test]
fn empirical_measure_examples() {
    let m = empirical_measure(&state(&[0.1, 0.3]));
    assert_eq!(m.len(), 2);
    assert_eq!(m.atom(0), &[0.1]);
    assert_eq!(m.atom(1), &[0.3]);
    assert_eq!(m.weight(), 0.5);
    assert_eq!(m.integrate(|_| 1.0), 1.0);
    let left = empirical_measure(&state(&[-0.9, -0.5, -0.1]));
    assert_eq!(left.integrate(|x| (x[0] < 0.0) as u8 as f64), 1.0);
    assert!(EmpiricalMeasure::from_atoms(2, vec![1.0, 2.0, 3.0]).is_err());
}

#[test]
fn tv_examples() {
    let a = hist(&[0.5, 0.5]);
    assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
    assert_eq!(tv_distance(&a, &hist(&[1.0, 0.0])).unwrap(), 1.0);
    assert_eq!(tv_distance(&hist(&[1.0, 0.0]), &hist(&[0.0, 1.0])).unwrap(), 2.0);
    let other = HistogramMeasure::from_masses(HistogramGrid::new(&[0.0], &[2.0], &[2]).unwrap(), vec![0.5, 0.5]).unwrap();
    assert!(matches!(tv_distance(&a, &other), Err(Error::Config(_))));
    assert!(matches!(tv_distance(&a, &hist(&[0.25, 0.25, 0.5])), Err(Error::Config(_))));
}

#[test]
fn histogram_validation_and_binning() {
    assert!(HistogramMeasure::from_masses(unit_grid(2), vec![0.7, 0.7]).is_err());
    assert!(HistogramMeasure::from_masses(unit_grid(2), vec![1.5, -0.5]).is_err());
    assert!(HistogramGrid::new(&[1.0], &[0.0], &[4]).is_err());
    let g = unit_grid(4);
    assert_eq!(g.bin_of(&[0.0]), Some(0));
    assert_eq!(g.bin_of(&[0.25]), Some(1));
    assert_eq!(g.bin_of(&[1.0]), Some(3));
    assert_eq!(g.bin_of(&[1.0 + 1e-9]), None);
    assert_eq!(g.bin_of(&[f64::NAN]), None);
    assert_eq!(g.centre(2), vec![0.625]);
    let m = EmpiricalMeasure::from_atoms(1, vec![0.1, 0.2, 0.9, 1.0]).unwrap();
    assert_eq!(HistogramMeasure::from_empirical(&g, &m).unwrap().masses, vec![0.5, 0.0, 0.0, 0.5]);
    let far = EmpiricalMeasure::from_atoms(1, vec![2.0]).unwrap();
    assert!(matches!(HistogramMeasure::from_empirical(&g, &far), Err(Error::Domain(_))));
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("non-zero", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| {
            let mut m: Vec<f64> = w.iter().map(|x| x / s).collect();
            let drift: f64 = m.iter().sum::<f64>() - 1.0;
            m[0] = (m[0] - drift).max(0.0);
            m
        })
    })
}

proptest! {
    #[test]
    fn tv_is_a_metric(a in simplex(8), b in simplex(8), c in simplex(8)) {
        let (a, b, c) = (hist(&a), hist(&b), hist(&c));
        let ab = tv_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, tv_distance(&b, &a).unwrap());
        prop_assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= tv_distance(&a, &c).unwrap() + tv_distance(&c, &b).unwrap() + 1e-12);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
        if ab == 0.0 {
            prop_assert_eq!(&a.masses, &b.masses);
        }
    }

    #[test]
    fn chaos_error_ignores_labels(xs in prop::collection::vec(-1.9f64..1.9, 2..40), seed in any::<u64>()) {
        let s = state(&xs);
        let mut sigma: Vec<usize> = (0..xs.len()).collect();
        let mut r = RngStream::new(seed, StreamId::new(0, 0, 0, Purpose::RebirthIndex));
        for i in (1..sigma.len()).rev() {
            sigma.swap(i, r.next_index(i + 1));
        }
        let f = |x: &[f64]| (3.0 * x[0]).sin();
        prop_assert_eq!(chaos_error(&s, f, 0.1), chaos_error(&s.permuted(&sigma), f, 0.1));
    }
}

#[test]
fn tv_of_empirical_histogram_decays_like_root_m() {
    let g = unit_grid(20);
    let truth = hist(&[0.05; 20]);
    let ms = [100.0, 1000.0, 10000.0];
    let mut means = Vec::new();
    for (k, &m) in ms.iter().enumerate() {
        let reps = 50;
        let mut total = 0.0;
        for r in 0..reps {
            let mut s = RngStream::new(11, StreamId::new(r, k as u64, 0, Purpose::Diffusion));
            let atoms: Vec<f64> = (0..m as usize).map(|_| s.next_uniform()).collect();
            let h = HistogramMeasure::from_empirical(&g, &EmpiricalMeasure::from_atoms(1, atoms).unwrap()).unwrap();
            total += tv_distance(&h, &truth).unwrap();
        }
        means.push(total / reps as f64);
    }
    let fit = loglog_slope(&ms, &means).unwrap();
    assert!((fit.slope + 0.5).abs() <= 0.15, "{fit:?}");
}

#[test]
fn loglog_examples() {
    let xs = [1.0, 4.0, 16.0, 64.0];
    let id = loglog_slope(&xs, &xs).unwrap();
    assert!((id.slope - 1.0).abs() < 1e-12 && id.stderr < 1e-7);
    let inv: Vec<f64> = xs.iter().map(|x| 1.0 / x.sqrt()).collect();
    assert!((loglog_slope(&xs, &inv).unwrap().slope + 0.5).abs() < 1e-12);
    let flat = loglog_slope(&xs, &[3.0; 4]).unwrap();
    assert!(flat.slope.abs() < 1e-12 && flat.lo95 <= 0.0 && flat.hi95 >= 0.0);
    assert!(matches!(loglog_slope(&xs, &[1.0, 0.0, 1.0, 1.0]), Err(Error::Domain(_))));
    assert!(matches!(loglog_slope(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Config(_))));
}

#[test]
fn loglog_band_matches_student_t() {
    // Residuals ±δ alternate, so the slope is exact and its error is analytic.
    let xs = [1.0, 2.0, 4.0, 8.0];
    let d: f64 = 0.1;
    let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * if i % 2 == 0 { d.exp() } else { (-d).exp() }).collect();
    let fit = loglog_slope(&xs, &ys).unwrap();
    let lx: Vec<f64> = xs.iter().map(|x: &f64| x.ln()).collect();
    let mx = lx.iter().sum::<f64>() / 4.0;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ys).map(|(x, y)| (x - mx) * y.ln()).sum();
    let slope = sxy / sxx;
    let my = ys.iter().map(|y| y.ln()).sum::<f64>() / 4.0;
    let sse: f64 = lx.iter().zip(&ys).map(|(x, y)| (y.ln() - my - slope * (x - mx)).powi(2)).sum();
    let se = (sse / 2.0 / sxx).sqrt();
    assert!((fit.slope - slope).abs() < 1e-12 && (fit.stderr - se).abs() < 1e-12);
    // t_{0.975, 2} = 4.302653
    assert!((fit.hi95 - fit.slope - 4.302_652_73 * se).abs() < 1e-6);
}

#[test]
fn chaos_error_trivial_cases() {
    let s = state(&[-1.0, 0.2, 1.3]);
    assert_eq!(chaos_error(&s, |_| 2.5, 2.5), 0.0);

    // At t = 0 the oracle side is the node-binned empirical measure.
    let p = builtin_potential("double_well_1d", &BTreeMap::new(), 0.5).unwrap();
    let g = build_operator(&p, 256).unwrap();
    let atoms = [-1.23, -0.4, 0.77, 1.9];
    let rho = g.histogram_density(&atoms);
    let f = |x: &[f64]| x[0];
    let expect: f64 = rho.iter().enumerate().map(|(i, r)| r * f(g.node(i))).sum::<f64>() * g.cell_volume();
    assert!(chaos_error(&state(&atoms), f, expect) <= g.spacing()[0]);
}

#[test]
fn wasserstein_examples() {
    assert_eq!(wasserstein1(&[0.2, 0.5], &[0.5, 0.2]).unwrap(), 0.0);
    assert!((wasserstein1(&[0.0, 1.0], &[0.3, 1.3]).unwrap() - 0.3).abs() < 1e-12);
    assert!((wasserstein1(&[0.0, 1.0], &[0.5]).unwrap() - 0.5).abs() < 1e-12);
    assert!((wasserstein1(&[0.0], &[1.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!(wasserstein1(&[], &[1.0]).is_err());
    let a = hist(&[1.0, 0.0, 0.0, 0.0]);
    let b = hist(&[0.0, 0.0, 1.0, 0.0]);
    assert!((wasserstein1_hist(&a, &b).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn oracle_density_binned_by_trapezoids() {
    let g = build_operator(&flat_interval(0.0, PI, 1.0).unwrap(), 256).unwrap();
    let e = principal_eigenpair(&g).unwrap();
    let grid = HistogramGrid::from_oracle(&g, 4).unwrap();
    assert_eq!(grid.len(), 64);
    assert!(HistogramGrid::from_oracle(&g, 3).is_err());
    let h = HistogramMeasure::from_density(&grid, &g, &e.qsd_density).unwrap();
    assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let w = grid.bin_width()[0];
    for (k, m) in h.masses.iter().enumerate() {
        let exact = 0.5 * ((k as f64 * w).cos() - ((k + 1) as f64 * w).cos());
        assert!((m - exact).abs() < 1e-5, "bin {k}: {m} vs {exact}");
    }
}

#[test]
fn radial_density_bins_in_two_dimensions() {
    let p = builtin_potential("radial_well_2d", &BTreeMap::new(), 0.5).unwrap();
    let g = build_operator(&p, 64).unwrap();
    let e = principal_eigenpair(&g).unwrap();
    let grid = HistogramGrid::from_oracle(&g, 4).unwrap();
    let h = HistogramMeasure::from_density(&grid, &g, &e.qsd_density).unwrap();
    assert_eq!(h.masses.len(), 256);
    assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // Four-fold symmetry of the well.
    assert!((h.masses[0] - h.masses[255]).abs() < 1e-12);
}

#[test]
fn averager_respects_the_window() {
    let p = builtin_potential("quadratic_1d", &BTreeMap::new(), 0.5).unwrap();
    let grid = HistogramGrid::new(&[-1.0], &[1.0], &[2]).unwrap();
    let mut avg = HistogramAverager::new(grid, 1.0, 1);
    assert!(avg.average().is_err());
    avg.observe(&p, &state(&[0.5, 0.5]), &[]);
    assert_eq!(avg.snapshots(), 0);
    avg.observe(&p, &state(&[-0.5, 0.5]).with_time(1.0), &[]);
    avg.observe(&p, &state(&[-0.5, -0.5]).with_time(2.0), &[]);
    assert_eq!(avg.snapshots(), 2);
    assert_eq!(avg.average().unwrap().masses, vec![0.75, 0.25]);
}

#[test]
fn estimates_and_csv() {
    let e = mean_estimate(&[1.0, 2.0, 3.0]);
    assert_eq!(e.estimate, 2.0);
    assert!((e.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(e.replicas, 3);
    let mut buf = Vec::new();
    let row = EstimateRow { label: "tv".into(), estimate: 0.1, stderr: 0.01, replicas: 3, convention: "sum_abs".into(), bin_width: 0.25 };
    write_estimates_csv(&mut buf, &[row]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "label,estimate,stderr,replicas,convention,bin_width\ntv,0.1,0.01,3,sum_abs,0.25\n");
    let mut buf = Vec::new();
    hist(&[0.5, 0.5]).write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "centre0,width0,mass\n0.25,0.5,0.5\n0.75,0.5,0.5\n");
}
