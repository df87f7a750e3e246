mod common;

use common::recover;
use lidarcam::scene_sim::{generate_scene, simulate_lidar_scan, LidarModel, Preset, SceneConfig};
use lidarcam::segmentation::{segment, SegmentationConfig};

#[test]
fn planted_boards_are_recovered() {
    for seed in 0..20 {
        for (i, (recall, err, claiming)) in recover(seed, 0.005, Preset::Scattered).into_iter().enumerate() {
            assert!(recall >= 0.9, "seed {seed} target {i}: recall {recall}");
            assert!(err < 3.0, "seed {seed} target {i}: normal error {err}");
            assert_eq!(claiming, 1, "seed {seed} target {i}");
        }
    }
}

#[test]
fn noiseless_boards_are_exact() {
    for (recall, err, _) in recover(3, 0.0, Preset::Centralized) {
        assert!(recall >= 0.99);
        assert!(err < 1e-6);
    }
}

#[test]
fn segmentation_is_deterministic() {
    let scene = generate_scene(&SceneConfig::default()).unwrap();
    let cloud = simulate_lidar_scan(&scene, &LidarModel::default(), 0.01, 1);
    let a = segment(&cloud.points, &SegmentationConfig::default()).unwrap();
    let b = segment(&cloud.points, &SegmentationConfig::default()).unwrap();
    assert_eq!(a, b);
    for s in &a.segments {
        for &i in &s.members {
            assert!(s.distance(&cloud.points[i]).abs() <= 3.0 * s.rms + 1e-15);
        }
    }
}
