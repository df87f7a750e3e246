//! End-to-end calibration of one data set: segment the scan, build the graph
//! from the camera pass, associate landmarks with laser geometry, and solve.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::heldout_error;
use crate::geometry::RigidPose;
use crate::optimizer::{
    solve, CalibrationGraph, PlaneFactor, PointFactor, Reassociator, ReprojectionFactor, SolveConfig, SolveError,
    SolveReport,
};
use crate::scene_sim::{SensorData, TargetKind};
use crate::segmentation::{
    calibrate_gamma, score_landmark, segment, AssociationOutcome, SegmentIndex, Segmentation, SegmentationConfig,
    SegmentationError,
};
use crate::spatial::KdTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("no landmark could be associated with laser geometry")]
    NoAlignmentFactors,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub segmentation: SegmentationConfig,
    pub solve: SolveConfig,
    /// Maximum landmark-to-segment distance for plane association, meters.
    pub association_cutoff: f64,
    /// Maximum landmark-to-corner distance for point association, meters.
    pub corner_cutoff: f64,
    /// Associations scoring above this are excluded, meters.
    pub score_r_threshold: f64,
    /// Landmarks scoring below this are discarded.
    pub score_c_threshold: f64,
    /// Refresh associations while solving; off means a single association at the initial extrinsic.
    pub reassociate: bool,
    /// Noise levels used for the information weights.
    pub pixel_sigma: f64,
    pub lidar_sigma: f64,
    pub corner_sigma: f64,
    /// Fraction of target landmarks held out of the alignment factors for evaluation.
    pub test_fraction: f64,
    pub split_seed: u64,
    /// Keep landmarks that lie on no target (reprojection-only).
    pub include_background: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            segmentation: SegmentationConfig::default(),
            solve: SolveConfig::default(),
            association_cutoff: 0.5,
            corner_cutoff: 0.2,
            score_r_threshold: 0.05,
            score_c_threshold: -2.0,
            reassociate: true,
            pixel_sigma: 0.5,
            lidar_sigma: 0.01,
            corner_sigma: 0.01,
            test_fraction: 0.0,
            split_seed: 0,
            include_background: true,
        }
    }
}

/// Result of one calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRun {
    pub initial_extrinsics: RigidPose,
    pub report: SolveReport,
    pub segments: usize,
    /// Original landmark ids kept in the graph, in graph order.
    pub landmark_ids: Vec<usize>,
    /// Landmarks dropped for too few observations or a low reconstruction score.
    pub dropped: usize,
    /// Original ids of target landmarks used for alignment factors.
    pub train: Vec<usize>,
    /// Original ids of held-out target landmarks.
    pub test: Vec<usize>,
    /// Final estimates of the held-out landmarks in the first camera frame.
    pub test_landmarks_camera: Vec<Vector3<f64>>,
    pub heldout_rms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Anchor {
    Plane,
    Point,
}

/// Builds alignment factors for the training landmarks at their current positions.
struct Associator<'a> {
    index: SegmentIndex<'a>,
    corners: KdTree,
    corner_points: Vec<Vector3<f64>>,
    /// `(graph landmark index, anchor type)`.
    train: Vec<(usize, Anchor)>,
    plane_cutoff: f64,
    corner_cutoff: f64,
    plane_info: f64,
    point_info: f64,
    score_threshold: Option<f64>,
}

impl Associator<'_> {
    fn factors(&self, landmarks: &[Vector3<f64>], score_threshold: Option<f64>) -> (Vec<PlaneFactor>, Vec<PointFactor>) {
        let mut planes = Vec::new();
        let mut points = Vec::new();
        for &(j, anchor) in &self.train {
            let p = landmarks[j];
            match anchor {
                Anchor::Plane => {
                    if self.index.segment_count() == 0 {
                        continue;
                    }
                    if let AssociationOutcome::Matched(a) = self.index.associate_one(j, &p, self.plane_cutoff) {
                        if score_threshold.is_some_and(|t| a.score > t) {
                            continue;
                        }
                        for i in 0..3 {
                            planes.push(PlaneFactor { landmark: j, point: a.points[i], normal: a.normals[i], info: self.plane_info });
                        }
                    }
                }
                Anchor::Point => {
                    if let Some(&(d2, c)) = self.corners.nearest(&p, 1).first() {
                        if d2.sqrt() <= self.corner_cutoff {
                            points.push(PointFactor { landmark: j, corner: self.corner_points[c], info: self.point_info });
                        }
                    }
                }
            }
        }
        (planes, points)
    }
}

impl Associator<'_> {
    fn corner_within(&self, p: &Vector3<f64>) -> bool {
        self.corners.nearest(p, 1).first().is_some_and(|&(d2, _)| d2.sqrt() <= self.corner_cutoff)
    }
}

impl Reassociator for Associator<'_> {
    fn reassociate(&self, graph: &CalibrationGraph) -> (Vec<PlaneFactor>, Vec<PointFactor>) {
        self.factors(&graph.landmarks, self.score_threshold)
    }
}

fn anchor_of(kind: Option<TargetKind>) -> Anchor {
    match kind {
        Some(TargetKind::Chessboard) => Anchor::Plane,
        _ => Anchor::Point,
    }
}

fn info(sigma: f64) -> f64 {
    1.0 / (sigma * sigma)
}

/// Calibrates from one data set starting at `initial` extrinsics.
pub fn calibrate(data: &SensorData, initial: &RigidPose, config: &PipelineConfig) -> Result<CalibrationRun, PipelineError> {
    if !(0.0..1.0).contains(&config.test_fraction) {
        return Err(PipelineError::InvalidConfig(format!("test fraction {} outside [0, 1)", config.test_fraction)));
    }
    for (name, s) in [("pixel", config.pixel_sigma), ("lidar", config.lidar_sigma), ("corner", config.corner_sigma)] {
        if !(s > 0.0) {
            return Err(PipelineError::InvalidConfig(format!("{name} sigma must be positive")));
        }
    }
    let seg = segment(&data.scan.points, &config.segmentation)?;
    calibrate_with_segmentation(data, &seg, initial, config)
}

/// As [`calibrate`], reusing an existing segmentation of `data.scan`.
pub fn calibrate_with_segmentation(
    data: &SensorData,
    seg: &Segmentation,
    initial: &RigidPose,
    config: &PipelineConfig,
) -> Result<CalibrationRun, PipelineError> {
    build_problem(data, seg, initial, config)?.solve(&config.solve)
}

/// A calibration graph ready to solve, with the association state needed to
/// refresh its alignment factors and evaluate held-out landmarks.
pub struct Problem<'a> {
    pub graph: CalibrationGraph,
    pub initial_extrinsics: RigidPose,
    pub segments: usize,
    pub landmark_ids: Vec<usize>,
    pub dropped: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    test_anchors: Vec<Anchor>,
    graph_index: Vec<usize>,
    associator: Associator<'a>,
    reassociate: bool,
    cutoff: f64,
}

/// Selects landmarks, maps the camera pass through `initial`, splits the
/// target landmarks and builds the initial alignment factors.
pub fn build_problem<'a>(
    data: &'a SensorData,
    seg: &'a Segmentation,
    initial: &RigidPose,
    config: &PipelineConfig,
) -> Result<Problem<'a>, PipelineError> {
    let pass = &data.camera;
    let mut obs_count = vec![0usize; pass.landmarks.len()];
    for o in &pass.observations {
        obs_count[o.landmark] += 1;
    }
    let n_a: Vec<f64> = pass.landmarks.iter().map(|l| l.n_a).collect();
    let n_b: Vec<f64> = pass.landmarks.iter().map(|l| l.n_b).collect();
    let gamma = calibrate_gamma(&n_a, &n_b);

    let mut landmark_ids = Vec::new();
    let mut graph_index = vec![usize::MAX; pass.landmarks.len()];
    let mut dropped = 0;
    for (j, l) in pass.landmarks.iter().enumerate() {
        if l.target_kind.is_none() && !config.include_background {
            continue;
        }
        if obs_count[j] < 2 || score_landmark(l.n_a, l.n_b, gamma) < config.score_c_threshold {
            dropped += 1;
            continue;
        }
        graph_index[j] = landmark_ids.len();
        landmark_ids.push(j);
    }

    let keyframes: Vec<RigidPose> = pass.keyframes.iter().map(|k| initial.compose(k)).collect();
    let landmarks: Vec<Vector3<f64>> = landmark_ids.iter().map(|&j| initial.transform_point(&pass.landmarks[j].position)).collect();
    let on_target: Vec<bool> = landmark_ids.iter().map(|&j| pass.landmarks[j].target_kind.is_some()).collect();
    let pixel_info = info(config.pixel_sigma);
    let offset = pass.stereo_offset.unwrap_or_else(Vector3::zeros);
    let reprojections: Vec<ReprojectionFactor> = pass
        .observations
        .iter()
        .filter(|o| graph_index[o.landmark] != usize::MAX)
        .map(|o| ReprojectionFactor {
            keyframe: o.keyframe,
            landmark: graph_index[o.landmark],
            pixel: o.pixel,
            offset: if o.camera == 0 { Vector3::zeros() } else { offset },
            info: pixel_info,
        })
        .collect();

    let mut targets: Vec<usize> = landmark_ids.iter().copied().filter(|&j| pass.landmarks[j].target_kind.is_some()).collect();
    let n_test = (targets.len() as f64 * config.test_fraction).round() as usize;
    targets.shuffle(&mut ChaCha8Rng::seed_from_u64(config.split_seed));
    let mut test: Vec<usize> = targets[..n_test].to_vec();
    let mut train: Vec<usize> = targets[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();

    let corner_points: Vec<Vector3<f64>> = data.laser_corners.iter().map(|c| c.position).collect();
    let associator = Associator {
        index: SegmentIndex::new(&data.scan.points, &seg.normals, &seg.segments),
        corners: KdTree::new(&corner_points),
        corner_points,
        train: train.iter().map(|&j| (graph_index[j], anchor_of(pass.landmarks[j].target_kind))).collect(),
        plane_cutoff: config.association_cutoff,
        corner_cutoff: config.corner_cutoff,
        plane_info: info(config.lidar_sigma),
        point_info: info(config.corner_sigma),
        score_threshold: Some(config.score_r_threshold),
    };
    let initial_threshold = if config.reassociate { None } else { Some(config.score_r_threshold) };
    let (planes, points) = associator.factors(&landmarks, initial_threshold);
    if planes.is_empty() && points.is_empty() {
        return Err(PipelineError::NoAlignmentFactors);
    }
    let graph = CalibrationGraph {
        intrinsics: pass.intrinsics,
        keyframes,
        landmarks,
        on_target,
        reprojections,
        planes,
        points,
    };
    let test_anchors = test.iter().map(|&j| anchor_of(pass.landmarks[j].target_kind)).collect();
    Ok(Problem {
        graph,
        initial_extrinsics: *initial,
        segments: seg.segments.len(),
        landmark_ids,
        dropped,
        train,
        test,
        test_anchors,
        graph_index,
        associator,
        reassociate: config.reassociate,
        cutoff: config.association_cutoff,
    })
}

impl Problem<'_> {
    /// Solves the graph and evaluates the held-out landmarks.
    pub fn solve(self, config: &SolveConfig) -> Result<CalibrationRun, PipelineError> {
        let reassociator: Option<&dyn Reassociator> = if self.reassociate { Some(&self.associator) } else { None };
        let report = solve(&self.graph, config, reassociator)?;
        let ext = report.extrinsics;
        let test_landmarks_camera: Vec<Vector3<f64>> =
            self.test.iter().map(|&j| ext.inverse_transform_point(&report.landmarks[self.graph_index[j]])).collect();
        // Corner landmarks count only where the LiDAR detected the corner and
        // sampled a face close to it.
        let evaluable: Vec<Vector3<f64>> = test_landmarks_camera
            .iter()
            .zip(&self.test_anchors)
            .filter(|(p, anchor)| match anchor {
                Anchor::Plane => true,
                Anchor::Point => {
                    let q = ext.transform_point(p);
                    self.associator.corner_within(&q)
                        && matches!(self.associator.index.associate_one(0, &q, self.associator.corner_cutoff), AssociationOutcome::Matched(_))
                }
            })
            .map(|(p, _)| *p)
            .collect();
        let heldout_rms = if evaluable.is_empty() {
            None
        } else {
            heldout_error(&ext, &evaluable, &self.associator.index, self.cutoff).ok()
        };
        Ok(CalibrationRun {
            initial_extrinsics: self.initial_extrinsics,
            report,
            segments: self.segments,
            landmark_ids: self.landmark_ids,
            dropped: self.dropped,
            train: self.train,
            test: self.test,
            test_landmarks_camera,
            heldout_rms,
        })
    }

    /// Alignment factors recomputed at the given landmark positions (laser frame),
    /// with the association-score filter applied.
    pub fn associate_at(&self, landmarks: &[Vector3<f64>]) -> (Vec<PlaneFactor>, Vec<PointFactor>) {
        self.associator.factors(landmarks, self.associator.score_threshold)
    }
}
