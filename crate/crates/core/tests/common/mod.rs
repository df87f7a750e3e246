#![allow(dead_code)]

use lidarcam::geometry::{CameraIntrinsics, RigidPose, SmallAngle};
use lidarcam::optimizer::{point_to_plane_residual, point_to_point_residual, reprojection_residual, CalibrationGraph, PointFactor};
use lidarcam::pipeline::{build_problem, PipelineConfig};
use lidarcam::placement::{jacobian_2d, residual_2d};
use lidarcam::scene_sim::{generate_scene, simulate, Preset, Scene, SceneConfig, SensorConfig, SensorData, TargetKind};
use lidarcam::scene_sim::{simulate_lidar_scan, LidarModel};
use lidarcam::segmentation::{segment, SegmentationConfig};
use nalgebra::{DMatrix, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worst relative error of analytic against central-difference Jacobians.
#[derive(Debug, Clone, Copy)]
pub struct FdStats {
    pub configs: usize,
    pub max_relative_error: f64,
}

const H: f64 = 1e-6;

fn rel(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).norm() / numeric.norm().max(1e-12)
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
}

fn random_vec(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

/// Reprojection residual against pose `(θ, δp)` and landmark perturbations.
pub fn fd_projection(configs: usize, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = CameraIntrinsics::new(600.0, 580.0, 320.0, 240.0, 640, 480).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let pose = RigidPose::new(random_rotation(&mut rng), random_vec(&mut rng, 5.0));
        let offset = if rng.random_bool(0.5) { Vector3::new(rng.random_range(0.05..0.3), 0.0, 0.0) } else { Vector3::zeros() };
        let z = rng.random_range(1.0..10.0);
        let cam = Vector3::new(rng.random_range(-0.5..0.5) * z, rng.random_range(-0.4..0.4) * z, z) + offset;
        let landmark = pose.transform_point(&cam);
        let pixel = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let lin = reprojection_residual(&pose, &landmark, &pixel, &offset, &k).unwrap();
        let f = |p: &RigidPose, l: &Vector3<f64>| reprojection_residual(p, l, &pixel, &offset, &k).unwrap().residual;
        let mut num_pose = DMatrix::zeros(2, 6);
        for c in 0..6 {
            let mut d = [0.0; 6];
            d[c] = H;
            let step = |s: f64| {
                pose.retract(&SmallAngle(Vector3::new(d[0], d[1], d[2]) * s), &(Vector3::new(d[3], d[4], d[5]) * s))
            };
            let col = (f(&step(1.0), &landmark) - f(&step(-1.0), &landmark)) / (2.0 * H);
            num_pose.set_column(c, &col);
        }
        let mut num_lm = DMatrix::zeros(2, 3);
        for c in 0..3 {
            let e = Vector3::ith(c, H);
            num_lm.set_column(c, &((f(&pose, &(landmark + e)) - f(&pose, &(landmark - e))) / (2.0 * H)));
        }
        let a_pose = DMatrix::from_column_slice(2, 6, lin.d_pose.as_slice());
        let a_lm = DMatrix::from_column_slice(2, 3, lin.d_landmark.as_slice());
        worst = worst.max(rel(&a_pose, &num_pose)).max(rel(&a_lm, &num_lm));
    }
    FdStats { configs, max_relative_error: worst }
}

pub fn fd_plane(configs: usize, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let p = random_vec(&mut rng, 10.0);
        let q = random_vec(&mut rng, 10.0);
        let n = random_vec(&mut rng, 1.0).normalize();
        let (_, j) = point_to_plane_residual(&p, &q, &n);
        let mut num = DMatrix::zeros(1, 3);
        for c in 0..3 {
            let e = Vector3::ith(c, H);
            num[(0, c)] = (point_to_plane_residual(&(p + e), &q, &n).0 - point_to_plane_residual(&(p - e), &q, &n).0) / (2.0 * H);
        }
        worst = worst.max(rel(&DMatrix::from_column_slice(1, 3, j.as_slice()), &num));
    }
    FdStats { configs, max_relative_error: worst }
}

pub fn fd_point(configs: usize, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let p = random_vec(&mut rng, 10.0);
        let q = random_vec(&mut rng, 10.0);
        let (_, j) = point_to_point_residual(&p, &q);
        let mut num = DMatrix::zeros(3, 3);
        for c in 0..3 {
            let e = Vector3::ith(c, H);
            num.set_column(c, &((point_to_point_residual(&(p + e), &q).0 - point_to_point_residual(&(p - e), &q).0) / (2.0 * H)));
        }
        worst = worst.max(rel(&DMatrix::from_column_slice(3, 3, j.as_slice()), &num));
    }
    FdStats { configs, max_relative_error: worst }
}

/// 2D point-to-line residual against `(θ, t_x, t_y)`.
pub fn fd_placement(configs: usize, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let n = Vector2::new(a.cos(), a.sin());
        let p = Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let theta = rng.random_range(-3.0..3.0);
        let t = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let d = rng.random_range(-3.0..3.0);
        let j = jacobian_2d(&n, &p, theta).unwrap();
        let f = |th: f64, tt: Vector2<f64>| residual_2d(&n, d, &p, th, &tt);
        let num = DMatrix::from_row_slice(
            1,
            3,
            &[
                (f(theta + H, t) - f(theta - H, t)) / (2.0 * H),
                (f(theta, t + Vector2::new(H, 0.0)) - f(theta, t - Vector2::new(H, 0.0))) / (2.0 * H),
                (f(theta, t + Vector2::new(0.0, H)) - f(theta, t - Vector2::new(0.0, H))) / (2.0 * H),
            ],
        );
        worst = worst.max(rel(&DMatrix::from_row_slice(1, 3, j.as_slice()), &num));
    }
    FdStats { configs, max_relative_error: worst }
}

/// A compact scattered chessboard scene with `boards` targets.
pub fn small_scene(seed: u64, boards: usize) -> SceneConfig {
    SceneConfig {
        seed,
        preset: Preset::Scattered,
        target_kind: TargetKind::Chessboard,
        target_count: boards,
        keyframes: 12,
        background_landmarks: 60,
        ..Default::default()
    }
}

pub fn noiseless(config: &SceneConfig) -> (Scene, SensorData) {
    let scene = generate_scene(config).unwrap();
    let data = simulate(&scene, &SensorConfig::noiseless(), config.seed).unwrap();
    (scene, data)
}

/// The calibration graph of a noiseless scene, linearized at ground truth.
pub fn graph_at_truth(scene: &Scene, data: &SensorData) -> CalibrationGraph {
    let seg = segment(&data.scan.points, &PipelineConfig::default().segmentation).unwrap();
    build_problem(data, &seg, &scene.extrinsics, &PipelineConfig::default()).unwrap().graph
}

/// Replaces the plane factors with point factors on the given target
/// landmarks (graph indices), each anchored at its true position.
pub fn with_points(graph: &CalibrationGraph, landmarks: &[usize]) -> CalibrationGraph {
    let mut g = graph.clone();
    g.planes.clear();
    g.points = landmarks.iter().map(|&j| PointFactor { landmark: j, corner: g.landmarks[j], info: 1e4 }).collect();
    g
}

/// Graph indices of one on-target landmark from each of up to `count`
/// distinct boards, chosen far from the previous picks.
pub fn spread_target_landmarks(graph: &CalibrationGraph, count: usize) -> Vec<usize> {
    let targets: Vec<usize> = (0..graph.landmarks.len()).filter(|&j| graph.on_target[j]).collect();
    let mut picked = vec![targets[0]];
    while picked.len() < count {
        let next = *targets
            .iter()
            .max_by(|&&a, &&b| {
                let da = picked.iter().map(|&p| (graph.landmarks[a] - graph.landmarks[p]).norm()).fold(f64::INFINITY, f64::min);
                let db = picked.iter().map(|&p| (graph.landmarks[b] - graph.landmarks[p]).norm()).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        picked.push(next);
    }
    picked
}

/// Random visual-only window: `m` features in a unit cube at the origin seen
/// from `keyframes` cameras about 5 m away, every feature at every keyframe.
pub struct SlamCase {
    pub trajectory: Vec<lidarcam::geometry::RigidPose>,
    pub landmarks: Vec<Vector3<f64>>,
    pub intrinsics: CameraIntrinsics,
}

impl SlamCase {
    pub fn random(m: usize, keyframes: usize, seed: u64) -> SlamCase {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let landmarks = (0..m).map(|_| random_vec(&mut rng, 0.5)).collect();
        let trajectory = (0..keyframes)
            .map(|_| {
                let dir = random_vec(&mut rng, 1.0).normalize();
                let aim = random_vec(&mut rng, 0.1);
                lidarcam::observability::look_at(&(dir * rng.random_range(4.5..5.5)), &aim)
            })
            .collect();
        SlamCase { trajectory, landmarks, intrinsics: CameraIntrinsics::default() }
    }

    pub fn matrix(&self) -> lidarcam::observability::ObservabilityMatrix {
        use lidarcam::observability::{build_observability, Measurement};
        let schedule: Vec<Measurement> = (0..self.trajectory.len())
            .flat_map(|t| (0..self.landmarks.len()).map(move |i| Measurement::projection(t, i)))
            .collect();
        build_observability(&self.trajectory, &self.landmarks, &schedule, &self.intrinsics).unwrap()
    }
}

/// Per-target best segment: (recall, normal error in degrees, segments claiming the target).
pub fn recover(seed: u64, sigma: f64, preset: Preset) -> Vec<(f64, f64, usize)> {
    let scene = generate_scene(&SceneConfig { seed, preset, target_kind: TargetKind::Chessboard, ..Default::default() }).unwrap();
    let cloud = simulate_lidar_scan(&scene, &LidarModel::default(), sigma, seed);
    let seg = segment(&cloud.points, &SegmentationConfig { seed, ..Default::default() }).unwrap();
    scene
        .targets
        .iter()
        .map(|t| {
            let total = cloud.labels.iter().filter(|&&l| l == t.id as i64).count();
            let mut best = (0.0, f64::INFINITY, 0usize);
            let mut claiming = 0;
            for s in &seg.segments {
                let hits = s.members.iter().filter(|&&i| cloud.labels[i] == t.id as i64).count();
                if hits * 2 > s.members.len() {
                    claiming += 1;
                }
                let recall = hits as f64 / total.max(1) as f64;
                if recall > best.0 {
                    let err = s.normal.dot(&t.normal()).abs().clamp(-1.0, 1.0).acos().to_degrees();
                    best = (recall, err, 0);
                }
            }
            (best.0, best.1, claiming)
        })
        .collect()
}
