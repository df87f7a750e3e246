use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::normals::principal_axes;

const MAX_TRIM_ROUNDS: usize = 50;

/// A filtered planar region of the laser scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSegment {
    /// Indices into the laser cloud, ascending.
    pub members: Vec<usize>,
    /// Unit normal, oriented toward the sensor origin.
    pub normal: Vector3<f64>,
    /// Offset `d` of the plane `n·p + d = 0`, meters.
    pub offset: f64,
    /// RMS point-to-plane distance of the members, meters.
    pub rms: f64,
    /// In-plane extents along the two principal axes, meters.
    pub extent: (f64, f64),
    pub centroid: Vector3<f64>,
}

impl PlaneSegment {
    /// Area proxy: product of the in-plane extents, m².
    pub fn area(&self) -> f64 {
        self.extent.0 * self.extent.1
    }

    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

/// Least-squares plane of the given members.
pub fn fit_plane(points: &[Vector3<f64>], members: &[usize]) -> PlaneSegment {
    let pts: Vec<Vector3<f64>> = members.iter().map(|&i| points[i]).collect();
    let (centroid, _, axes) = principal_axes(&pts);
    let mut normal = axes[0];
    if normal.dot(&centroid) > 0.0 {
        normal = -normal;
    }
    let offset = -normal.dot(&centroid);
    let rms = (pts.iter().map(|p| (normal.dot(p) + offset).powi(2)).sum::<f64>() / pts.len().max(1) as f64).sqrt();
    let span = |axis: &Vector3<f64>| {
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let s = axis.dot(&(p - centroid));
            (lo.min(s), hi.max(s))
        });
        (hi - lo).max(0.0)
    };
    PlaneSegment { members: members.to_vec(), normal, offset, rms, extent: (span(&axes[2]), span(&axes[1])), centroid }
}

/// Fits a plane and repeatedly drops members farther than 3× the RMS until none remain.
pub fn fit_plane_trimmed(points: &[Vector3<f64>], members: &[usize]) -> PlaneSegment {
    let mut seg = fit_plane(points, members);
    for _ in 0..MAX_TRIM_ROUNDS {
        let limit = 3.0 * seg.rms;
        let kept: Vec<usize> = seg.members.iter().copied().filter(|&i| seg.distance(&points[i]).abs() <= limit).collect();
        if kept.len() == seg.members.len() || kept.len() < 3 {
            break;
        }
        seg = fit_plane(points, &kept);
    }
    seg
}

/// Thresholds of [`filter_planes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFilter {
    pub min_area: f64,
    pub max_rms: f64,
    /// Maximum angle between the fitted normal and the members' mean normal, degrees.
    pub max_normal_deviation_deg: f64,
}

/// Fits planes to the grown sets and keeps the planar, board-sized ones.
pub fn filter_planes(
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    sets: &[Vec<usize>],
    filter: &PlaneFilter,
) -> Vec<PlaneSegment> {
    let cos_dev = filter.max_normal_deviation_deg.to_radians().cos();
    sets.iter()
        .filter(|s| s.len() >= 3)
        .filter_map(|set| {
            let seg = fit_plane_trimmed(points, set);
            let mean = seg.members.iter().map(|&i| normals[i]).sum::<Vector3<f64>>();
            let mean_ok = mean.norm() > 0.0 && seg.normal.dot(&mean.normalize()).abs() >= cos_dev;
            (seg.members.len() >= 3 && seg.rms <= filter.max_rms && seg.area() >= filter.min_area && mean_ok).then_some(seg)
        })
        .collect()
}
