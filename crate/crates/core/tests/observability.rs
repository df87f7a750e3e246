mod common;

use common::SlamCase;
use lidarcam::linalg::{max_principal_angle, relative_product, RANK_TOL};
use lidarcam::observability::*;
use nalgebra::Vector3;

#[test]
fn standard_cases_have_expected_nullity() {
    let reports: Vec<CaseReport> = verify_standard_cases().into_iter().map(Result::unwrap).collect();
    let dims: Vec<(CaseKind, usize, usize)> = reports.iter().map(|r| (r.kind, r.count, r.null_dimension)).collect();
    assert_eq!(
        dims,
        vec![
            (CaseKind::Plane, 1, 3),
            (CaseKind::Plane, 2, 1),
            (CaseKind::Plane, 3, 0),
            (CaseKind::Point, 1, 3),
            (CaseKind::Point, 2, 1),
            (CaseKind::Point, 3, 0),
        ]
    );
    for r in &reports {
        assert!(r.matches(1e-6, 1e-10), "{:?} {}: {:?} {:?}", r.kind, r.count, r.analytic_product, r.principal_angle);
    }
}

#[test]
fn visual_window_gauge_is_translation_and_rotation() {
    for (m, seed) in [(1, 1), (5, 2), (20, 3)] {
        let case = SlamCase::random(m, 4, seed);
        let obs = case.matrix();
        assert!(obs.notes.is_empty(), "{:?}", obs.notes);
        let ns = obs.nullspace(RANK_TOL);
        assert_eq!(ns.dimension, 6, "m = {m}");
        let analytic = slam_nullspace(&case.trajectory[0].translation, &case.landmarks);
        assert!(relative_product(&obs.matrix, &analytic) < 1e-12);
        assert!(max_principal_angle(&ns.basis, &analytic) < 1e-6);
    }
}

#[test]
fn projection_product_matches_closed_form() {
    let case = SlamCase::random(3, 8, 9);
    for k in 0..8 {
        for f in 0..3 {
            let b = projection_block(&case.trajectory, 0, k, f, &case.landmarks, &case.intrinsics).unwrap();
            assert!(b.relative_difference() < 1e-12);
        }
    }
}

#[test]
fn degenerate_scenarios_are_flagged() {
    let mut planes = PlaneScenario::standard(2).unwrap();
    planes.planes[1].normal = planes.planes[0].normal;
    assert!(matches!(verify_plane_cases(&planes), Err(ObservabilityError::ScenarioDegenerate(_))));

    let mut points = PointScenario::standard(3).unwrap();
    points.points[2] = points.points[0] * 2.0 - points.points[1];
    assert!(matches!(verify_point_cases(&points), Err(ObservabilityError::ScenarioDegenerate(_))));
}

#[test]
fn invisible_projections_are_skipped() {
    let case = SlamCase::random(2, 2, 4);
    let mut landmarks = case.landmarks.clone();
    landmarks.push(case.trajectory[0].translation * 2.0);
    let schedule = vec![Measurement::projection(0, 0), Measurement::projection(0, 2), Measurement::plane(1, 1, Vector3::z())];
    let obs = build_observability(&case.trajectory, &landmarks, &schedule, &case.intrinsics).unwrap();
    assert_eq!(obs.notes.len(), 1);
    assert_eq!(obs.matrix.nrows(), 3);
    assert!(matches!(build_observability(&case.trajectory, &landmarks, &[], &case.intrinsics), Err(ObservabilityError::EmptySchedule)));
}
