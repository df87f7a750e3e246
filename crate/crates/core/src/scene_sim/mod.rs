//! Synthetic calibration scenes: target layouts, a spinning multi-ring LiDAR,
//! and a moving stereo camera standing in for a visual SLAM front end.

mod camera;
pub mod io;
mod lidar;
mod targets;

pub use camera::{
    simulate_camera_pass, CameraNoise, CameraPass, LandmarkEstimate, LandmarkTruth, Observation,
};
pub use lidar::{simulate_lidar_scan, simulate_laser_corners, LaserCorner, LidarModel, PointCloud};
pub use targets::{
    facing_pose, regular_polygon, ChessboardGrid, Hit, TargetKind, TargetModel, TargetShape,
};

use nalgebra::{Unit, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, RigidPose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("could not place target {placed} of {requested} after {attempts} attempts")]
    PlacementInfeasible { placed: usize, requested: usize, attempts: usize },
    #[error("no target corner is visible from any keyframe")]
    NoObservations,
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(String),
}

/// Target layout and camera motion preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Targets all around the sensor with diverse normals; full 360° camera sweep.
    Scattered,
    /// Targets in front of the sensor with near-parallel normals; ±30° camera sweep.
    Centralized,
    /// Centralized layout seen from a single stereo keyframe.
    SingleShot,
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scattered" => Ok(Preset::Scattered),
            "centralized" => Ok(Preset::Centralized),
            "single-shot" | "single-shot-style" => Ok(Preset::SingleShot),
            other => Err(format!("unknown preset '{other}'")),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Scattered => "scattered",
            Preset::Centralized => "centralized",
            Preset::SingleShot => "single-shot",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    pub target_count: usize,
    pub preset: Preset,
    pub target_kind: TargetKind,
    /// Keyframe count; 0 selects the preset default.
    pub keyframes: usize,
    /// Range of target distances from the sensor, meters.
    pub distance_range: (f64, f64),
    /// Range of target center heights, meters.
    pub height_range: (f64, f64),
    pub chessboard: ChessboardGrid,
    /// Blank border around the chessboard pattern, meters.
    pub chessboard_margin: f64,
    pub box_size: Vector3<f64>,
    pub polygon_radius: f64,
    /// Tilt of scattered targets away from vertical, degrees.
    pub tilt_range_deg: (f64, f64),
    /// Minimum pairwise normal angle for scattered layouts, degrees.
    pub min_normal_angle_deg: f64,
    /// Largest yaw of a scattered target away from facing the sensor, degrees.
    pub max_facing_yaw_deg: f64,
    /// Normal jitter for centralized layouts, degrees.
    pub centralized_jitter_deg: f64,
    /// Half-width of the centralized azimuth window, degrees.
    pub centralized_half_fov_deg: f64,
    /// Ground-truth camera pose in the laser frame.
    pub extrinsics: RigidPose,
    pub intrinsics: CameraIntrinsics,
    /// Stereo baseline along the camera x axis, meters; 0 disables the second camera.
    pub stereo_baseline: f64,
    /// Visual landmarks off the targets, invisible to the LiDAR.
    pub background_landmarks: usize,
    pub background_distance: (f64, f64),
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            target_count: 4,
            preset: Preset::Scattered,
            target_kind: TargetKind::Chessboard,
            keyframes: 0,
            distance_range: (2.0, 3.5),
            height_range: (-0.2, 0.2),
            chessboard: ChessboardGrid { rows: 5, cols: 7, square: 0.075 },
            chessboard_margin: 0.05,
            box_size: Vector3::new(0.5, 0.4, 0.4),
            polygon_radius: 0.35,
            tilt_range_deg: (5.0, 20.0),
            min_normal_angle_deg: 45.0,
            max_facing_yaw_deg: 30.0,
            centralized_jitter_deg: 10.0,
            centralized_half_fov_deg: 25.0,
            extrinsics: default_extrinsics(),
            intrinsics: CameraIntrinsics::new(1000.0, 1000.0, 640.0, 480.0, 1280, 960).expect("valid intrinsics"),
            stereo_baseline: 0.12,
            background_landmarks: 150,
            background_distance: (5.0, 8.0),
            max_attempts: 5000,
        }
    }
}

/// A forward-looking camera (optical axis along laser `+x`) slightly offset
/// from the LiDAR, with a small mounting rotation.
pub fn default_extrinsics() -> RigidPose {
    let mount = nalgebra::Rotation3::from_basis_unchecked(&[
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::new(1.0, 0.0, 0.0),
    ]);
    let tweak = UnitQuaternion::from_euler_angles(0.02, -0.03, 0.015);
    RigidPose::new(tweak * UnitQuaternion::from_rotation_matrix(&mount), Vector3::new(0.08, -0.05, -0.12))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub config: SceneConfig,
    pub targets: Vec<TargetModel>,
    /// Ground-truth camera pose in the laser frame.
    pub extrinsics: RigidPose,
    /// Ground-truth left-camera keyframe poses in the laser frame; the first equals `extrinsics`.
    pub trajectory: Vec<RigidPose>,
    pub intrinsics: CameraIntrinsics,
    /// Right camera position in the left camera frame.
    pub stereo_offset: Option<Vector3<f64>>,
    /// Background landmark positions, laser frame.
    pub background: Vec<Vector3<f64>>,
}

impl Scene {
    /// All visual landmarks in the laser frame: target corners first (grouped by
    /// target), then background points.
    pub fn landmarks(&self) -> Vec<LandmarkTruth> {
        let mut out = Vec::new();
        for t in &self.targets {
            for (k, p) in t.corners_laser().into_iter().enumerate() {
                out.push(LandmarkTruth { position: p, target: Some(t.id), corner: Some(k) });
            }
        }
        for p in &self.background {
            out.push(LandmarkTruth { position: *p, target: None, corner: None });
        }
        out
    }

    /// First surface hit along a ray from `origin` in direction `dir`, with the target index.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(usize, Hit)> {
        self.targets
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.intersect(origin, dir).map(|h| (i, h)))
            .min_by(|a, b| a.1.distance.total_cmp(&b.1.distance))
    }

    /// Whether the segment from `from` to `to` is blocked by any target other than `except`.
    pub fn occluded(&self, from: &Vector3<f64>, to: &Vector3<f64>, except: Option<usize>) -> bool {
        let d = to - from;
        let len = d.norm();
        if len < 1e-12 {
            return false;
        }
        let dir = d / len;
        self.targets.iter().enumerate().any(|(i, t)| {
            Some(i) != except && t.intersect(from, &dir).is_some_and(|h| h.distance < len - 1e-9)
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub(crate) fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Builds a deterministic scene from the configuration.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene, SceneError> {
    if config.target_count == 0 {
        return Err(SceneError::InvalidConfig("target count must be at least 1".into()));
    }
    let (dmin, dmax) = config.distance_range;
    if !(dmin > 0.0 && dmax >= dmin) {
        return Err(SceneError::InvalidConfig(format!("bad distance range {:?}", config.distance_range)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let targets = place_targets(config, &mut rng)?;
    let trajectory = camera_trajectory(config);
    let background = background_points(config, &mut rng);
    Ok(Scene {
        config: config.clone(),
        targets,
        extrinsics: config.extrinsics,
        trajectory,
        intrinsics: config.intrinsics,
        stereo_offset: (config.stereo_baseline > 0.0).then(|| Vector3::new(config.stereo_baseline, 0.0, 0.0)),
        background,
    })
}

fn make_target(config: &SceneConfig, id: usize, center: Vector3<f64>, facing: &Vector3<f64>, roll: f64) -> TargetModel {
    let pose = facing_pose(config.target_kind, center, facing, roll);
    match config.target_kind {
        TargetKind::Chessboard => TargetModel::chessboard(id, pose, config.chessboard, config.chessboard_margin),
        TargetKind::Polygon => TargetModel::polygon(id, pose, regular_polygon(6, config.polygon_radius)),
        TargetKind::Box => TargetModel::cuboid(id, pose, config.box_size),
    }
}

fn place_targets(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<TargetModel>, SceneError> {
    let n = config.target_count;
    let (dmin, mut dmax) = config.distance_range;
    if config.preset != Preset::Scattered && n > 4 {
        // crowded frontal layouts need more depth to avoid interpenetration
        dmax += 0.4 * (n - 4) as f64;
    }
    let (hmin, hmax) = config.height_range;
    let min_cos = config.min_normal_angle_deg.to_radians().cos();
    let mut placed: Vec<TargetModel> = Vec::with_capacity(n);
    let mut spans: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut attempts = 0;
    while placed.len() < n {
        attempts += 1;
        if attempts > config.max_attempts {
            return Err(SceneError::PlacementInfeasible { placed: placed.len(), requested: n, attempts: config.max_attempts });
        }
        let dist = rng.random_range(dmin..=dmax);
        let height = if hmax > hmin { rng.random_range(hmin..hmax) } else { hmin };
        let (azimuth, facing) = match config.preset {
            Preset::Scattered => {
                let az = rng.random_range(0.0..std::f64::consts::TAU);
                let ymax = config.max_facing_yaw_deg;
                let yaw = if ymax > 0.0 { rng.random_range(-ymax..ymax).to_radians() } else { 0.0 };
                let (tlo, thi) = config.tilt_range_deg;
                let tilt = rng.random_range(tlo..=thi).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let back = az + std::f64::consts::PI + yaw;
                let f = Vector3::new(tilt.cos() * back.cos(), tilt.cos() * back.sin(), tilt.sin());
                (az, f)
            }
            Preset::Centralized | Preset::SingleShot => {
                let half = config.centralized_half_fov_deg.to_radians();
                let az = rng.random_range(-half..=half);
                let j = config.centralized_jitter_deg.to_radians();
                let axis = Unit::new_normalize(Vector3::new(0.0, gaussian(rng), gaussian(rng)));
                let f = UnitQuaternion::from_axis_angle(&axis, rng.random_range(0.0..=j)) * -Vector3::x();
                (az, f)
            }
        };
        let center = Vector3::new(dist * azimuth.cos(), dist * azimuth.sin(), height);
        let roll = rng.random_range(-0.3..0.3);
        let target = make_target(config, placed.len(), center, &facing, roll);
        let radius = target.bounding_radius();
        let half_span = (radius / dist).asin();
        let span = (azimuth - half_span, azimuth + half_span);
        // strict layouts keep targets out of each other's line of sight
        let strict = attempts <= config.max_attempts / 2;
        let ok = placed.iter().zip(&spans).all(|(other, s)| {
            let sep = (other.pose.translation - center).norm() > other.bounding_radius() + radius + 0.05;
            let angle_ok = config.preset != Preset::Scattered || other.normal().dot(&facing) <= min_cos;
            let view_ok = !strict || !spans_overlap(*s, span);
            sep && angle_ok && view_ok
        });
        if ok {
            placed.push(target);
            spans.push(span);
        }
    }
    Ok(placed)
}

fn spans_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    let wrap = |x: f64| (x + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    let ca = 0.5 * (a.0 + a.1);
    let cb = 0.5 * (b.0 + b.1);
    let gap = wrap(ca - cb).abs();
    gap < 0.5 * (a.1 - a.0) + 0.5 * (b.1 - b.0) + 0.02
}

/// Rig motion: rig pose `k` maps the laser frame at time `k` into the laser frame at time 0.
fn rig_motion(config: &SceneConfig) -> Vec<RigidPose> {
    let k = match (config.preset, config.keyframes) {
        (Preset::SingleShot, _) => 1,
        (_, 0) => match config.preset {
            Preset::Scattered => 40,
            _ => 16,
        },
        (_, k) => k,
    };
    (0..k)
        .map(|i| {
            let s = i as f64 / k as f64;
            let tau = std::f64::consts::TAU * s;
            let (yaw, trans) = match config.preset {
                Preset::Scattered => (tau, Vector3::new(0.25 * tau.sin(), 0.25 * (1.0 - tau.cos()), 0.05 * (2.0 * tau).sin())),
                _ => (
                    30f64.to_radians() * tau.sin(),
                    Vector3::new(0.15 * (1.0 - tau.cos()), 0.3 * tau.sin(), 0.05 * (2.0 * tau).sin()),
                ),
            };
            let roll = 3f64.to_radians() * (3.0 * tau).sin();
            let pitch = 3f64.to_radians() * (2.0 * tau).sin();
            RigidPose::new(UnitQuaternion::from_euler_angles(roll, pitch, yaw), trans)
        })
        .collect()
}

fn camera_trajectory(config: &SceneConfig) -> Vec<RigidPose> {
    rig_motion(config).iter().map(|rig| rig.compose(&config.extrinsics)).collect()
}

fn background_points(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    let (lo, hi) = config.background_distance;
    (0..config.background_landmarks)
        .map(|_| {
            let az = match config.preset {
                Preset::Scattered => rng.random_range(0.0..std::f64::consts::TAU),
                _ => rng.random_range(-70f64..70.0).to_radians(),
            };
            let r = rng.random_range(lo..=hi);
            Vector3::new(r * az.cos(), r * az.sin(), rng.random_range(-1.0..2.0))
        })
        .collect()
}

/// Returns `gt` rotated by exactly `rot_deg` about a random axis and moved by
/// exactly `trans_m` in a random direction.
pub fn perturb_extrinsics(gt: &RigidPose, rot_deg: f64, trans_m: f64, seed: u64) -> RigidPose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let axis = Unit::new_unchecked(random_unit(&mut rng));
    let dir = random_unit(&mut rng);
    let dq = UnitQuaternion::from_axis_angle(&axis, rot_deg.to_radians());
    RigidPose::new(gt.rotation() * dq, gt.translation + dir * trans_m)
}

/// Camera-independent parameters of the full sensor simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub lidar: LidarModel,
    pub lidar_sigma: f64,
    /// Noise of LiDAR-extracted target corners; negative means "same as `lidar_sigma`".
    pub corner_sigma: f64,
    pub camera: CameraNoise,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig { lidar: LidarModel::default(), lidar_sigma: 0.01, corner_sigma: -1.0, camera: CameraNoise::default() }
    }
}

impl SensorConfig {
    pub fn noiseless() -> Self {
        SensorConfig {
            lidar_sigma: 0.0,
            corner_sigma: 0.0,
            camera: CameraNoise { pixel_sigma: 0.0, landmark_sigma: 0.0, keyframe_rot_sigma_deg: 0.0, keyframe_trans_sigma: 0.0 },
            ..Default::default()
        }
    }
}

/// Everything the calibration pipeline consumes, plus ground truth for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorData {
    pub scan: PointCloud,
    pub laser_corners: Vec<LaserCorner>,
    pub camera: CameraPass,
}

/// Simulates the static scan, the LiDAR corner detections and the camera pass.
pub fn simulate(scene: &Scene, config: &SensorConfig, seed: u64) -> Result<SensorData, SceneError> {
    let scan = simulate_lidar_scan(scene, &config.lidar, config.lidar_sigma, seed);
    let corner_sigma = if config.corner_sigma < 0.0 { config.lidar_sigma } else { config.corner_sigma };
    let laser_corners = simulate_laser_corners(scene, corner_sigma, seed);
    let camera = simulate_camera_pass(scene, &config.camera, seed)?;
    Ok(SensorData { scan, laser_corners, camera })
}

pub(crate) fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn normal2(rng: &mut ChaCha8Rng) -> Vector2<f64> {
    Vector2::new(gaussian(rng), gaussian(rng))
}

pub(crate) fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng))
}
