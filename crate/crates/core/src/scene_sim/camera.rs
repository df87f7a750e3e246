use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{normal2, normal3, sub_rng, Scene, SceneError, TargetKind};
use crate::geometry::{project_camera_point, CameraIntrinsics, RigidPose};

/// Parallax angle at which a pair of views is considered fully informative about depth.
pub const REFERENCE_PARALLAX_DEG: f64 = 2.0;

/// Nearest depth at which the simulated camera still resolves a point, meters.
const NEAR_PLANE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraNoise {
    /// Pixel noise, pixels.
    pub pixel_sigma: f64,
    /// Per-axis noise of initial landmark estimates, meters.
    pub landmark_sigma: f64,
    /// Per-axis rotation noise of initial keyframe estimates, degrees.
    pub keyframe_rot_sigma_deg: f64,
    /// Per-axis translation noise of initial keyframe estimates, meters.
    pub keyframe_trans_sigma: f64,
}

impl Default for CameraNoise {
    fn default() -> Self {
        CameraNoise { pixel_sigma: 0.5, landmark_sigma: 0.01, keyframe_rot_sigma_deg: 0.2, keyframe_trans_sigma: 0.005 }
    }
}

/// One pixel measurement of a landmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub keyframe: usize,
    pub landmark: usize,
    /// 0 for the reference (left) camera, 1 for the stereo partner.
    pub camera: u8,
    pub pixel: Vector2<f64>,
}

/// Front-end landmark estimate in the first keyframe's camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkEstimate {
    pub position: Vector3<f64>,
    /// Number of keyframes observing the landmark.
    pub n_a: f64,
    /// Depth-uncertainty proxy in `[0, n_a]`.
    pub n_b: f64,
    /// Kind of calibration target the feature was detected on, if any.
    pub target_kind: Option<TargetKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkTruth {
    /// Laser frame.
    pub position: Vector3<f64>,
    pub target: Option<usize>,
    pub corner: Option<usize>,
}

impl LandmarkTruth {
    pub fn on_target(&self) -> bool {
        self.target.is_some()
    }
}

/// Output of the simulated visual front end, plus ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPass {
    pub intrinsics: CameraIntrinsics,
    /// Right camera position in the left camera frame.
    pub stereo_offset: Option<Vector3<f64>>,
    /// Keyframe poses relative to the first keyframe (first is identity).
    pub keyframes: Vec<RigidPose>,
    pub landmarks: Vec<LandmarkEstimate>,
    pub observations: Vec<Observation>,
    pub truth_landmarks: Vec<LandmarkTruth>,
    /// Ground-truth keyframe poses in the laser frame.
    pub truth_keyframes: Vec<RigidPose>,
}

fn visible(scene: &Scene, truth: &LandmarkTruth, pose: &RigidPose, offset: &Vector3<f64>) -> Option<Vector2<f64>> {
    let pc = pose.inverse_transform_point(&truth.position) - offset;
    if pc.z <= NEAR_PLANE {
        return None;
    }
    let proj = project_camera_point(&pc, &scene.intrinsics).ok()?;
    if !scene.intrinsics.contains(&proj.pixel) {
        return None;
    }
    let center = pose.transform_point(offset);
    let target_idx = truth.target.and_then(|id| scene.targets.iter().position(|t| t.id == id));
    if let (Some(ti), Some(ci)) = (target_idx, truth.corner) {
        if !scene.targets[ti].corner_faces(ci, &center) {
            return None;
        }
    }
    if scene.occluded(&center, &truth.position, target_idx) {
        return None;
    }
    Some(proj.pixel)
}

/// Depth-uncertainty proxy: `n_a` times the mean over observing pairs of
/// `min(1, α_ref / α)`, where α is the pair's parallax angle.
pub fn depth_uncertainty(point: &Vector3<f64>, centers: &[Vector3<f64>]) -> f64 {
    let n_a = centers.len() as f64;
    if centers.len() < 2 {
        return n_a;
    }
    let reference = REFERENCE_PARALLAX_DEG.to_radians();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let a = (centers[i] - point).normalize();
            let b = (centers[j] - point).normalize();
            let parallax = a.dot(&b).clamp(-1.0, 1.0).acos();
            sum += if parallax > 0.0 { (reference / parallax).min(1.0) } else { 1.0 };
            pairs += 1;
        }
    }
    n_a * sum / pairs as f64
}

/// Synthesizes pixel observations for every keyframe and camera, noisy initial
/// landmark and keyframe estimates, and the per-landmark scoring counts.
pub fn simulate_camera_pass(scene: &Scene, noise: &CameraNoise, seed: u64) -> Result<CameraPass, SceneError> {
    let mut pixel_rng = sub_rng(seed, 3);
    let mut state_rng = sub_rng(seed, 4);
    let truth = scene.landmarks();
    let mut cameras = vec![Vector3::zeros()];
    if let Some(off) = scene.stereo_offset {
        cameras.push(off);
    }
    let mut observations = Vec::new();
    let mut observers: Vec<Vec<usize>> = vec![Vec::new(); truth.len()];
    for (k, pose) in scene.trajectory.iter().enumerate() {
        for (c, offset) in cameras.iter().enumerate() {
            for (j, t) in truth.iter().enumerate() {
                if let Some(px) = visible(scene, t, pose, offset) {
                    let pixel = if noise.pixel_sigma > 0.0 { px + normal2(&mut pixel_rng) * noise.pixel_sigma } else { px };
                    observations.push(Observation { keyframe: k, landmark: j, camera: c as u8, pixel });
                    if c == 0 {
                        observers[j].push(k);
                    }
                }
            }
        }
    }
    let any_target = observations.iter().any(|o| truth[o.landmark].on_target());
    if !any_target {
        return Err(SceneError::NoObservations);
    }

    let ext_inv = scene.extrinsics.inverse();
    let landmarks = truth
        .iter()
        .zip(&observers)
        .map(|(t, obs)| {
            let centers: Vec<Vector3<f64>> = obs.iter().map(|&k| scene.trajectory[k].translation).collect();
            let p = ext_inv.transform_point(&t.position);
            let noisy = if noise.landmark_sigma > 0.0 { p + normal3(&mut state_rng) * noise.landmark_sigma } else { p };
            LandmarkEstimate {
                position: noisy,
                n_a: obs.len() as f64,
                n_b: depth_uncertainty(&t.position, &centers),
                target_kind: t.target.and_then(|id| scene.targets.iter().find(|x| x.id == id)).map(|x| x.kind),
            }
        })
        .collect();
    let keyframes = scene
        .trajectory
        .iter()
        .enumerate()
        .map(|(k, pose)| {
            let rel = ext_inv.compose(pose);
            if k == 0 {
                return RigidPose::identity();
            }
            let rot = normal3(&mut state_rng) * noise.keyframe_rot_sigma_deg.to_radians();
            let trans = normal3(&mut state_rng) * noise.keyframe_trans_sigma;
            RigidPose::new(rel.rotation() * UnitQuaternion::from_scaled_axis(rot), rel.translation + trans)
        })
        .collect();
    Ok(CameraPass {
        intrinsics: scene.intrinsics,
        stereo_offset: scene.stereo_offset,
        keyframes,
        landmarks,
        observations,
        truth_landmarks: truth,
        truth_keyframes: scene.trajectory.clone(),
    })
}
