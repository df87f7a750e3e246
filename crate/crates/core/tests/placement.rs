use std::f64::consts::{FRAC_PI_2, PI};

use lidarcam::placement::*;
use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(rng: &mut ChaCha8Rng) -> Vector2<f64> {
    Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
}

#[test]
fn angle_determinant_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (p1, p2, p3) = (random_point(&mut rng), random_point(&mut rng), random_point(&mut rng));
        let d = det_angle(&p1, &p2, &p3, rng.random_range(0.0..PI), rng.random_range(-PI..PI));
        worst = worst.max(d.relative_difference());
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn distance_determinant_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..2_000 {
        let (p1, p2, p3) = (random_point(&mut rng), random_point(&mut rng), random_point(&mut rng));
        let d = det_distance(&p1, &p2, &p3, rng.random_range(-PI..PI));
        assert!(d.relative_difference() < 1e-9, "{d:?}");
    }
}

#[test]
fn literal_q_does_not_reproduce_the_determinant() {
    let (p1, p2, p3) = (Vector2::new(0.4, 1.3), Vector2::new(-0.7, 0.2), Vector2::new(0.5, -0.9));
    let (theta, beta) = (0.3, 1.1f64);
    let literal = (q_literal(&p1, theta) - q_literal(&p2, theta)).powi(2) * beta.sin().powi(2);
    let d = det_angle(&p1, &p2, &p3, beta, theta);
    assert!((literal - d.brute_force).abs() > 1e-3 * d.brute_force.abs());
}

#[test]
fn beta_sweep_peaks_at_right_angle() {
    let points = [Vector2::new(0.4, 1.3), Vector2::new(-0.7, 0.2), Vector2::new(0.5, -0.9)];
    let rows = beta_sweep(points, 0.3, 180);
    assert_eq!(rows.len(), 181);
    let best = rows.iter().max_by(|a, b| a.brute_force.total_cmp(&b.brute_force)).unwrap();
    assert!((best.beta - FRAC_PI_2).abs() <= PI / 180.0 + 1e-12);
    assert!(rows[0].brute_force.abs() < 1e-12 && rows[180].brute_force.abs() < 1e-12);
    let scale = rows[90].brute_force;
    for r in &rows[1..180] {
        let ratio = r.brute_force / r.beta.sin().powi(2);
        assert!((ratio - scale).abs() < 1e-9 * scale, "{ratio} vs {scale}");
    }
}

#[test]
fn distance_sweep_grows_with_separation() {
    let rows = distance_sweep(0.3, 2.0, 40);
    assert_eq!(rows[0].closed_form, 0.0);
    for w in rows.windows(2) {
        assert!(w[1].brute_force > w[0].brute_force);
    }
}

#[test]
fn hessian_rejects_empty_and_non_unit_inputs() {
    assert_eq!(hessian_2d(&[]), Err(PlacementError::NoRows));
    assert!(matches!(jacobian_2d(&Vector2::new(0.6, 0.6), &Vector2::zeros(), 0.0), Err(PlacementError::NonUnitNormal(_))));
}

#[test]
fn recommended_normals_are_spread() {
    let two = recommend_placement(2, 2.5).unwrap();
    assert!(((two[1].normal_angle - two[0].normal_angle).abs() - FRAC_PI_2).abs() < 1e-12);
    let four = recommend_placement(4, 2.5).unwrap();
    assert_eq!(four, recommend_placement(4, 2.5).unwrap());
    for (i, a) in four.iter().enumerate() {
        assert!((a.position.norm() - 2.5).abs() < 1e-12);
        for b in &four[i + 1..] {
            let gap = (a.normal_angle - b.normal_angle).rem_euclid(PI);
            assert!(gap.min(PI - gap) >= 45f64.to_radians() - 1e-12);
            assert!((a.position - b.position).norm() > 2.5);
        }
    }
}
