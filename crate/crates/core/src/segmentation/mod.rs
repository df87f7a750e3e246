//! Plane extraction from the static scan, visual landmark scoring, and
//! landmark-to-laser association.

mod associate;
mod normals;
mod planes;
mod region;

pub use associate::{associate, score_association, Association, AssociationOutcome, SegmentIndex, VOTERS};
pub use normals::{estimate_normals, is_degenerate, principal_axes, refine_normals, NormalEstimate};
pub use planes::{filter_planes, fit_plane, fit_plane_trimmed, PlaneFilter, PlaneSegment};
pub use region::{region_grow, GrowParams};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("cloud has {have} points, need at least {need}")]
    TooFewPoints { have: usize, need: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no plane segment survived filtering")]
    NoSegments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub normal_k: usize,
    /// Region-growing neighbor radius, meters.
    pub radius: f64,
    pub angle_deg: f64,
    /// 0 means "seed until every point is assigned".
    pub seed_count: usize,
    pub min_region_points: usize,
    pub min_area: f64,
    pub max_rms: f64,
    pub max_normal_deviation_deg: f64,
    pub seed: u64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            normal_k: 60,
            radius: 0.25,
            angle_deg: 8.0,
            seed_count: 0,
            min_region_points: 10,
            min_area: 0.1,
            max_rms: 0.02,
            max_normal_deviation_deg: 15.0,
            seed: 0,
        }
    }
}

/// Result of segmenting one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub segments: Vec<PlaneSegment>,
    /// Per-point normals, re-estimated within each segment for members.
    pub normals: Vec<Vector3<f64>>,
    pub degenerate: Vec<bool>,
}

/// Normals, region growing, and plane filtering in one pass.
pub fn segment(points: &[Vector3<f64>], config: &SegmentationConfig) -> Result<Segmentation, SegmentationError> {
    let est = estimate_normals(points, config.normal_k)?;
    let normals: Vec<Vector3<f64>> = est.iter().map(|e| e.normal).collect();
    let degenerate: Vec<bool> = est.iter().map(|e| e.degenerate).collect();
    let params = GrowParams {
        seed_count: config.seed_count,
        radius: config.radius,
        angle_deg: config.angle_deg,
        min_points: config.min_region_points,
        seed: config.seed,
    };
    let sets = region_grow(points, &normals, &degenerate, &params);
    let filter = PlaneFilter {
        min_area: config.min_area,
        max_rms: config.max_rms,
        max_normal_deviation_deg: config.max_normal_deviation_deg,
    };
    let segments = filter_planes(points, &normals, &sets, &filter);
    let members: Vec<Vec<usize>> = segments.iter().map(|s| s.members.clone()).collect();
    let normals = refine_normals(points, &normals, &members, config.normal_k);
    Ok(Segmentation { segments, normals, degenerate })
}

/// Reconstruction score `N_a − γ·N_b`.
pub fn score_landmark(n_a: f64, n_b: f64, gamma: f64) -> f64 {
    n_a - gamma * n_b
}

/// γ that makes the batch means of `N_a` and `γ·N_b` equal.
pub fn calibrate_gamma(n_a: &[f64], n_b: &[f64]) -> f64 {
    let ma = n_a.iter().sum::<f64>();
    let mb = n_b.iter().sum::<f64>();
    if mb > 0.0 {
        ma / mb
    } else {
        1.0
    }
}
