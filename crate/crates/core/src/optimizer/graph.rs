use nalgebra::{DMatrix, Matrix1x3, Matrix2x3, Matrix2x6, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::factors::{huber, point_to_plane_residual, point_to_point_residual, reprojection_residual};
use super::{PlaneFactor, PointFactor, ReprojectionFactor, SolveError};
use crate::geometry::{CameraIntrinsics, RigidPose};
use crate::linalg::{nullspace, NullspaceBasis};

/// Huber thresholds in raw residual units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HuberDeltas {
    /// Pixels.
    pub pixel: f64,
    /// Meters.
    pub plane: f64,
    /// Meters.
    pub point: f64,
}

impl Default for HuberDeltas {
    fn default() -> Self {
        HuberDeltas { pixel: 2.0, plane: 0.02, point: 0.05 }
    }
}

/// Tightly coupled graph of keyframe poses and landmarks (all in the laser frame).
/// The first keyframe pose is the camera-to-laser extrinsic estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGraph {
    pub intrinsics: CameraIntrinsics,
    pub keyframes: Vec<RigidPose>,
    pub landmarks: Vec<Vector3<f64>>,
    /// Landmarks believed to lie on a calibration target.
    pub on_target: Vec<bool>,
    pub reprojections: Vec<ReprojectionFactor>,
    pub planes: Vec<PlaneFactor>,
    pub points: Vec<PointFactor>,
}

/// Robust cost per residual family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub reprojection: f64,
    pub plane: f64,
    pub point: f64,
    /// Reprojection factors skipped because the landmark was behind the camera.
    pub behind_camera: usize,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.reprojection + self.plane + self.point
    }
}

/// One linearized factor with its IRLS weight folded into `w` (= weight × information).
#[derive(Debug, Clone, Copy)]
pub(crate) enum Linearized {
    Reprojection { keyframe: usize, landmark: usize, r: Vector2<f64>, jp: Matrix2x6<f64>, jl: Matrix2x3<f64>, w: f64 },
    Plane { landmark: usize, r: f64, jl: Matrix1x3<f64>, w: f64 },
    Point { landmark: usize, r: Vector3<f64>, w: f64 },
    Inactive,
}

impl CalibrationGraph {
    /// Current extrinsic estimate.
    pub fn extrinsics(&self) -> RigidPose {
        self.keyframes[0]
    }

    pub fn dimension(&self) -> usize {
        6 * self.keyframes.len() + 3 * self.landmarks.len()
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: String| Err(SolveError::InvalidGraph(m));
        if self.keyframes.is_empty() {
            return bad("graph has no keyframes".into());
        }
        if self.on_target.len() != self.landmarks.len() {
            return bad("on-target flags do not match landmark count".into());
        }
        for f in &self.reprojections {
            if f.keyframe >= self.keyframes.len() || f.landmark >= self.landmarks.len() {
                return bad(format!("reprojection factor references missing state ({}, {})", f.keyframe, f.landmark));
            }
        }
        if self.planes.iter().any(|f| f.landmark >= self.landmarks.len())
            || self.points.iter().any(|f| f.landmark >= self.landmarks.len())
        {
            return bad("alignment factor references a missing landmark".into());
        }
        Ok(())
    }

    pub fn cost(&self, deltas: &HuberDeltas) -> CostBreakdown {
        let reproj: Vec<Option<f64>> = self
            .reprojections
            .par_iter()
            .map(|f| {
                reprojection_residual(&self.keyframes[f.keyframe], &self.landmarks[f.landmark], &f.pixel, &f.offset, &self.intrinsics)
                    .ok()
                    .map(|lin| f.info * huber(lin.residual.norm(), deltas.pixel).0)
            })
            .collect();
        let mut out = CostBreakdown::default();
        for c in reproj {
            match c {
                Some(c) => out.reprojection += c,
                None => out.behind_camera += 1,
            }
        }
        for f in &self.planes {
            let (r, _) = point_to_plane_residual(&self.landmarks[f.landmark], &f.point, &f.normal);
            out.plane += f.info * huber(r, deltas.plane).0;
        }
        for f in &self.points {
            let (r, _) = point_to_point_residual(&self.landmarks[f.landmark], &f.corner);
            out.point += f.info * huber(r.norm(), deltas.point).0;
        }
        out
    }

    pub(crate) fn linearize(&self, deltas: &HuberDeltas) -> Vec<Linearized> {
        let mut out: Vec<Linearized> = self
            .reprojections
            .par_iter()
            .map(|f| {
                match reprojection_residual(&self.keyframes[f.keyframe], &self.landmarks[f.landmark], &f.pixel, &f.offset, &self.intrinsics) {
                    Ok(lin) => Linearized::Reprojection {
                        keyframe: f.keyframe,
                        landmark: f.landmark,
                        r: lin.residual,
                        jp: lin.d_pose,
                        jl: lin.d_landmark,
                        w: f.info * huber(lin.residual.norm(), deltas.pixel).1,
                    },
                    Err(_) => Linearized::Inactive,
                }
            })
            .collect();
        out.extend(self.planes.iter().map(|f| {
            let (r, jl) = point_to_plane_residual(&self.landmarks[f.landmark], &f.point, &f.normal);
            Linearized::Plane { landmark: f.landmark, r, jl, w: f.info * huber(r, deltas.plane).1 }
        }));
        out.extend(self.points.iter().map(|f| {
            let (r, _) = point_to_point_residual(&self.landmarks[f.landmark], &f.corner);
            Linearized::Point { landmark: f.landmark, r, w: f.info * huber(r.norm(), deltas.point).1 }
        }));
        out
    }

    /// Dense Jacobian of all residuals, rows scaled by `sqrt(information)`;
    /// columns ordered `[pose_0 (θ, p), …, pose_K, landmark_0, …]`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let nk = self.keyframes.len();
        let cols = self.dimension();
        let lcol = |j: usize| 6 * nk + 3 * j;
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        for f in &self.reprojections {
            if let Ok(lin) = reprojection_residual(&self.keyframes[f.keyframe], &self.landmarks[f.landmark], &f.pixel, &f.offset, &self.intrinsics) {
                let s = f.info.sqrt();
                for r in 0..2 {
                    let mut row = Vec::with_capacity(9);
                    for c in 0..6 {
                        row.push((6 * f.keyframe + c, s * lin.d_pose[(r, c)]));
                    }
                    for c in 0..3 {
                        row.push((lcol(f.landmark) + c, s * lin.d_landmark[(r, c)]));
                    }
                    rows.push(row);
                }
            }
        }
        for f in &self.planes {
            let s = f.info.sqrt();
            rows.push((0..3).map(|c| (lcol(f.landmark) + c, s * f.normal[c])).collect());
        }
        for f in &self.points {
            let s = f.info.sqrt();
            for r in 0..3 {
                rows.push(vec![(lcol(f.landmark) + r, s)]);
            }
        }
        let mut m = DMatrix::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            for &(c, v) in row {
                m[(i, c)] += v;
            }
        }
        m
    }

    /// Numerical nullspace of the weighted Jacobian (equivalently of `JᵀΩJ`).
    pub fn nullspace(&self, rel_tol: f64) -> NullspaceBasis {
        nullspace(&self.jacobian(), rel_tol)
    }
}
