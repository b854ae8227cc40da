mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{random_spd, rel_err, rng};
use spd_rp::spd::{airm_exp_map, airm_log_map, geodesic_distance, SpdMatrix, TangentVector};
use spd_rp::synthesis::{
    generate_synthetic, geodesic_rescale, karcher_mean, training_ball, DirectionMode, SynthesisConfig, SynthesisError,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rescale_hits_requested_distance(seed in any::<u64>(), d in 2usize..7, zeta in 0.0f64..3.0) {
        let mut r = rng(seed);
        let x = random_spd(&mut r, d, 1.5);
        let pole = random_spd(&mut r, d, 1.5);
        let s = geodesic_rescale(&x, &pole, zeta).unwrap();
        let got = geodesic_distance(&pole, &s).unwrap();
        prop_assert!((got - zeta).abs() <= 1e-8 * (1.0 + zeta));
        // The rescaled point lies on the geodesic through x: its tangent is parallel.
        let u = airm_log_map(&pole, &x).unwrap();
        let v = airm_log_map(&pole, &s).unwrap();
        let c = zeta / geodesic_distance(&pole, &x).unwrap();
        prop_assert!((v.value() - u.value() * c).norm() <= 1e-8 * (1.0 + v.value().norm()));
    }

    #[test]
    fn karcher_mean_is_stationary_and_congruence_equivariant(seed in any::<u64>(), d in 2usize..5, n in 2usize..8) {
        let mut r = rng(seed);
        let points: Vec<SpdMatrix> = (0..n).map(|_| random_spd(&mut r, d, 1.0)).collect();
        let km = karcher_mean(&points, 1e-10, 200).unwrap();
        prop_assert!(km.residual <= km.threshold);
        let mut sum = DMatrix::zeros(d, d);
        let w = km.mean.inv_sqrt();
        for x in &points {
            sum += &w * airm_log_map(&km.mean, x).unwrap().value() * &w;
        }
        prop_assert!((sum / n as f64).norm() <= 1e-8);

        let a = common::random_invertible(&mut r, d);
        let moved: Vec<SpdMatrix> = points.iter().map(|x| x.congruence(&a).unwrap()).collect();
        let km2 = karcher_mean(&moved, 1e-10, 200).unwrap();
        let expected = km.mean.congruence(&a).unwrap();
        prop_assert!(rel_err(km2.mean.matrix(), expected.matrix()) < 1e-6);
    }

    #[test]
    fn synthetic_points_stay_in_ball(seed in any::<u64>(), n in 2usize..10) {
        let mut r = rng(seed);
        let points: Vec<SpdMatrix> = (0..n).map(|_| random_spd(&mut r, 3, 1.0)).collect();
        for mode in [DirectionMode::TangentGaussian, DirectionMode::TrainingPoint] {
            let cfg = SynthesisConfig { count: 50, seed, direction_mode: mode, ..SynthesisConfig::default() };
            let ball = training_ball(&points, &cfg).unwrap();
            for s in generate_synthetic(&points, &cfg).unwrap() {
                prop_assert!(geodesic_distance(&ball.mean, &s).unwrap() <= ball.radius + 1e-8);
                prop_assert!(SpdMatrix::new(s.matrix().clone()).is_ok());
            }
        }
    }
}

#[test]
fn pure_scaling_along_identity() {
    // d_g(I, eI) = √d; rescaling to ζ gives exp(ζ/√d)·I.
    let d = 3;
    let x = SpdMatrix::from_diagonal(&vec![std::f64::consts::E; d]).unwrap();
    let s = geodesic_rescale(&x, &SpdMatrix::identity(d), 1.0).unwrap();
    let expected = (1.0 / (d as f64).sqrt()).exp();
    for i in 0..d {
        assert!((s.matrix()[(i, i)] - expected).abs() < 1e-12);
    }
    assert!(matches!(
        geodesic_rescale(&x, &x, 1.0),
        Err(SynthesisError::DegenerateDirection { .. })
    ));
    assert!(geodesic_rescale(&x, &SpdMatrix::identity(d), -1.0).is_err());
}

/// Kolmogorov–Smirnov statistic of `samples` against Uniform[0, 1].
fn ks_uniform(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn training_point_mode_distance_ratio_is_uniform() {
    // Symmetric pairs M^{1/2} exp(±V) M^{1/2} with ‖V‖ = r have Karcher mean M
    // and every point at distance exactly r.
    let mut r = rng(12);
    let d = 3;
    let m = random_spd(&mut r, d, 0.8);
    let radius = 1.3;
    let mut points = Vec::new();
    for _ in 0..4 {
        let g = common::gaussian(&mut r, d, d);
        let v = (&g + g.transpose()) * 0.5;
        let v = &v * (radius / v.norm());
        let s = m.sqrt();
        for sign in [1.0, -1.0] {
            let tangent = TangentVector::new(m.clone(), &s * (&v * sign) * &s).unwrap();
            points.push(airm_exp_map(&tangent));
        }
    }
    let cfg = SynthesisConfig {
        count: 10_000,
        seed: 77,
        direction_mode: DirectionMode::TrainingPoint,
        ..SynthesisConfig::default()
    };
    let ball = training_ball(&points, &cfg).unwrap();
    assert!((ball.radius - radius).abs() < 1e-6);
    let ratios: Vec<f64> = generate_synthetic(&points, &cfg)
        .unwrap()
        .iter()
        .map(|s| geodesic_distance(&ball.mean, s).unwrap() / ball.radius)
        .collect();
    let ks = ks_uniform(ratios);
    assert!(ks <= 0.02, "KS statistic {ks}");
}

#[test]
fn generation_is_reproducible_and_prefix_stable() {
    let mut r = rng(5);
    let points: Vec<SpdMatrix> = (0..6).map(|_| random_spd(&mut r, 3, 1.0)).collect();
    let cfg = |count| SynthesisConfig { count, seed: 3, ..SynthesisConfig::default() };
    let a = generate_synthetic(&points, &cfg(20)).unwrap();
    assert_eq!(a, generate_synthetic(&points, &cfg(20)).unwrap());
    assert_eq!(a[..5], generate_synthetic(&points, &cfg(5)).unwrap()[..]);
    assert!(matches!(
        generate_synthetic(&points[..1], &cfg(3)),
        Err(SynthesisError::TooFewPoints { .. })
    ));
}
