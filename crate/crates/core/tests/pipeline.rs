use std::f64::consts::PI;

use dkappa_core::basis::{make_basis, quadrature_grid, unit_from_lat_lon, Domain, Point};
use dkappa_core::geodesic::{d_kappa, d_kappa_coeffs, GeodesicOptions};
use dkappa_core::heatkde::{kde, kernel_sum, SampleSet};
use dkappa_core::smoothing::{g_value, SmoothnessLevel};
use dkappa_core::testing::{
    baseline_distances, bootstrap_test, ks_test_1d, reference_circle_mixture, sample_mixture, BandwidthRule,
    MixtureComponent, MixtureSpec, TestConfig,
};
use dkappa_core::wrap1d::{detect_boundary, wrap_samples, DEFAULT_PAD};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn normal_sample(mean: f64, sd: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(mean, sd).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

fn kappa(v: f64) -> SmoothnessLevel {
    SmoothnessLevel::new(v).unwrap()
}

#[test]
fn wrapped_distance_is_invariant_to_a_shared_affine_change() {
    let x1 = normal_sample(0.0, 1.0, 150, 1);
    let x2 = normal_sample(0.7, 1.3, 150, 2);
    let basis = make_basis(Domain::Circle, 10).unwrap();
    let distance = |a: &[f64], b: &[f64]| {
        let map = detect_boundary(&[a, b], DEFAULT_PAD).unwrap();
        let f1 = kde(&wrap_samples(a, &map).unwrap(), 0.05, &basis, None).unwrap();
        let f2 = kde(&wrap_samples(b, &map).unwrap(), 0.05, &basis, None).unwrap();
        d_kappa(&f1, &f2, kappa(0.3), &GeodesicOptions::default()).unwrap().distance
    };
    let base = distance(&x1, &x2);
    for (scale, shift) in [(3.0, -10.0), (0.01, 5.0), (250.0, 1e3)] {
        let y1: Vec<f64> = x1.iter().map(|x| scale * x + shift).collect();
        let y2: Vec<f64> = x2.iter().map(|x| scale * x + shift).collect();
        assert!((distance(&y1, &y2) - base).abs() <= 1e-9, "scale {scale}");
    }
}

#[test]
fn wrapped_estimates_do_not_leak_across_the_cut() {
    let x1 = normal_sample(0.0, 1.0, 200, 3);
    let x2 = normal_sample(1.0, 0.5, 200, 4);
    let map = detect_boundary(&[&x1, &x2], DEFAULT_PAD).unwrap();
    let rule = BandwidthRule::default();
    for x in [&x1, &x2] {
        let s = wrap_samples(x, &map).unwrap();
        let h = rule.bandwidth(s.len()).unwrap();
        let grid = quadrature_grid(Domain::Circle, 7200).unwrap();
        let values = kernel_sum(&s, h, None, grid.nodes()).unwrap();
        let near_cut: Vec<f64> = grid
            .nodes()
            .iter()
            .zip(&values)
            .map(|(p, v)| match p {
                Point::Angle(t) if PI - t.abs() <= 5f64.to_radians() => *v,
                _ => 0.0,
            })
            .collect();
        let total = grid.integrate(&values).unwrap();
        let leak = grid.integrate(&near_cut).unwrap();
        assert!(leak < 1e-4 * total, "leak {leak}");
    }
}

#[test]
fn circle_estimate_agrees_with_wrapped_line_estimate() {
    // estimating on the circle after wrapping versus a Gaussian estimate on the
    // line mapped through the same affine map
    let x = normal_sample(2.0, 0.8, 120, 5);
    let map = detect_boundary(&[&x], DEFAULT_PAD).unwrap();
    let s = wrap_samples(&x, &map).unwrap();
    let h = BandwidthRule::default().bandwidth(x.len()).unwrap();
    // circle heat kernel at time h is a normal with sd sqrt(2h) in angle
    let sd_line = (2.0 * h).sqrt() * map.density_scale();
    let (a, b) = map.interval();
    let probes: Vec<f64> = (1..60).map(|i| a + (b - a) * i as f64 / 60.0).collect();
    let circle = kernel_sum(&s, h, None, &probes.iter().map(|&p| Point::Angle(map.forward(p))).collect::<Vec<_>>()).unwrap();
    let peak = circle.iter().cloned().fold(0.0, f64::max);
    for (p, c) in probes.iter().zip(&circle) {
        let line: f64 = x
            .iter()
            .map(|xi| (-0.5 * ((p - xi) / sd_line).powi(2)).exp() / (sd_line * (2.0 * PI).sqrt()))
            .sum::<f64>()
            / x.len() as f64;
        assert!((map.line_density(*c) - line).abs() <= 1e-3 * map.line_density(peak), "at {p}");
    }
}

#[test]
fn ks_is_blind_to_the_wrap() {
    let x1 = normal_sample(0.0, 1.0, 100, 6);
    let x2 = normal_sample(0.3, 1.0, 80, 7);
    let map = detect_boundary(&[&x1, &x2], DEFAULT_PAD).unwrap();
    let r = ks_test_1d(&wrap_samples(&x1, &map).unwrap(), &wrap_samples(&x2, &map).unwrap()).unwrap();
    // direct two-sample statistic on the line
    let mut d: f64 = 0.0;
    for &t in x1.iter().chain(&x2) {
        let f1 = x1.iter().filter(|&&v| v <= t).count() as f64 / 100.0;
        let f2 = x2.iter().filter(|&&v| v <= t).count() as f64 / 80.0;
        d = d.max((f1 - f2).abs());
    }
    assert!((r.statistic - d).abs() < 1e-12);
}

fn sphere_estimates() -> Vec<dkappa_core::heatkde::DensityEstimate> {
    let basis = make_basis(Domain::Sphere2, 4).unwrap();
    let centers = [(30.0, 0.0), (-10.0, 70.0), (50.0, -60.0), (0.0, 160.0)];
    centers
        .iter()
        .enumerate()
        .map(|(i, &(lat, lon))| {
            let spec = MixtureSpec::new(
                Domain::Sphere2,
                vec![MixtureComponent {
                    weight: 1.0,
                    center: Point::Unit(unit_from_lat_lon(lat, lon)),
                    spread: 4.0,
                }],
            )
            .unwrap();
            kde(&sample_mixture(&spec, 100, i as u64).unwrap(), 0.1, &basis, None).unwrap()
        })
        .collect()
}

#[test]
fn d_kappa_behaves_like_a_metric_on_sphere_estimates() {
    let f = sphere_estimates();
    let k = kappa(0.15);
    let opts = GeodesicOptions::default();
    let d = |a: usize, b: usize| d_kappa(&f[a], &f[b], k, &opts).unwrap();
    for i in 0..f.len() {
        assert!(d(i, i).distance.abs() <= 1e-9);
    }
    let tol = 2.0 * 1e-6 * k.value().sqrt();
    for a in 0..f.len() {
        for b in 0..f.len() {
            let ab = d(a, b);
            assert!((ab.distance - d(b, a).distance).abs() <= 1e-6);
            for p in &ab.path.points {
                assert!((g_value(p.coeffs()) - k.value()).abs() <= 1e-8 * k.value());
            }
            assert!(ab.path.energy_log.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-13)));
            for c in 0..f.len() {
                let lhs = ab.distance;
                let rhs = d(a, c).distance + d(c, b).distance;
                assert!(lhs <= rhs + tol + 1e-3 * lhs, "{a}{b}{c}: {lhs} > {rhs}");
            }
        }
    }
}

#[test]
fn distances_do_not_depend_on_bandwidth_but_baselines_do() {
    let basis = make_basis(Domain::Sphere2, 5).unwrap();
    let spec = |lat, lon| {
        MixtureSpec::new(
            Domain::Sphere2,
            vec![MixtureComponent {
                weight: 1.0,
                center: Point::Unit(unit_from_lat_lon(lat, lon)),
                spread: 8.0,
            }],
        )
        .unwrap()
    };
    let s1 = sample_mixture(&spec(20.0, 10.0), 150, 1).unwrap();
    let s2 = sample_mixture(&spec(0.0, 40.0), 150, 2).unwrap();
    let mut ds = vec![];
    let mut frs = vec![];
    for h1 in [0.05, 0.2] {
        for h2 in [0.05, 0.2] {
            let f1 = kde(&s1, h1, &basis, None).unwrap();
            let f2 = kde(&s2, h2, &basis, None).unwrap();
            ds.push(d_kappa(&f1, &f2, kappa(0.2), &GeodesicOptions::default()).unwrap().distance);
            frs.push(baseline_distances(&f1, &f2).unwrap().fisher_rao);
        }
    }
    let spread = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
        (hi - lo) / (v.iter().sum::<f64>() / v.len() as f64)
    };
    assert!(spread(&ds) < 1e-6);
    assert!(spread(&frs) > 0.3);
}

#[test]
fn bootstrap_is_reproducible_and_sensitive() {
    let mix = reference_circle_mixture();
    let a = sample_mixture(&mix, 150, 10).unwrap();
    let b = sample_mixture(&mix, 150, 11).unwrap();
    let shifted = MixtureSpec::new(
        Domain::Circle,
        vec![
            MixtureComponent {
                weight: 0.5,
                center: Point::Angle(-1.0),
                spread: 0.1,
            },
            MixtureComponent {
                weight: 0.5,
                center: Point::Angle(2.0),
                spread: 0.15,
            },
        ],
    )
    .unwrap();
    let c = sample_mixture(&shifted, 150, 12).unwrap();
    let cfg = TestConfig {
        replicates: 100,
        seed: 5,
        ..Default::default()
    };
    let same = bootstrap_test(&a, &b, &cfg).unwrap();
    assert_eq!(same, bootstrap_test(&a, &b, &cfg).unwrap());
    let diff = bootstrap_test(&a, &c, &cfg).unwrap();
    assert!(diff.reject && diff.d0 > same.d0 && diff.p_value < same.p_value);
    assert_eq!(diff.nonconverged, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn d_kappa_is_symmetric_and_nonnegative(
        a in prop::collection::vec(-PI..PI, 5..30),
        b in prop::collection::vec(-PI..PI, 5..30),
        h1 in 0.05f64..0.5,
        h2 in 0.05f64..0.5,
    ) {
        let basis = make_basis(Domain::Circle, 6).unwrap();
        let f1 = kde(&SampleSet::circle(a).unwrap(), h1, &basis, None).unwrap();
        let f2 = kde(&SampleSet::circle(b).unwrap(), h2, &basis, None).unwrap();
        let k = kappa(0.5 * g_value(&f1.coeffs).min(g_value(&f2.coeffs)));
        let opts = GeodesicOptions::default();
        let ab = d_kappa_coeffs(&f1.coeffs, &f2.coeffs, k, &opts).unwrap();
        let ba = d_kappa_coeffs(&f2.coeffs, &f1.coeffs, k, &opts).unwrap();
        prop_assert!(ab.distance >= 0.0);
        prop_assert!((ab.distance - ba.distance).abs() <= 1e-6);
        // the chord is never longer than the path
        let chord: f64 = ab.path.points[0].tail().iter().zip(ab.path.points.last().unwrap().tail())
            .map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        prop_assert!(ab.distance >= chord - 1e-12);
    }
}
