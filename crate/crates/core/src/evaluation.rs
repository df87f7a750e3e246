//! Calibration accuracy metrics.

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::RigidPose;
use crate::segmentation::{AssociationOutcome, SegmentIndex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no test landmark could be associated with a laser plane")]
    EmptyTestSet,
}

/// Rotation error in degrees (angle of `R⁻¹R_g`) and translation error in meters.
pub fn extrinsic_error(est: &RigidPose, gt: &RigidPose) -> (f64, f64) {
    (est.rotation_angle_to(gt).to_degrees(), (est.translation - gt.translation).norm())
}

/// RMS point-to-plane distance of held-out camera-frame landmarks mapped into
/// the laser frame by `extrinsics`, over their three associated laser planes.
pub fn heldout_error(
    extrinsics: &RigidPose,
    test_landmarks: &[Vector3<f64>],
    index: &SegmentIndex<'_>,
    cutoff: f64,
) -> Result<f64, EvalError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (j, p) in test_landmarks.iter().enumerate() {
        let q = extrinsics.transform_point(p);
        if let AssociationOutcome::Matched(a) = index.associate_one(j, &q, cutoff) {
            for i in 0..3 {
                let d = a.normals[i].dot(&(q - a.points[i]));
                sum += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(EvalError::EmptyTestSet);
    }
    Ok((sum / count as f64).sqrt())
}
