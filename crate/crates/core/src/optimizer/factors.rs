use nalgebra::{Matrix1x3, Matrix2x3, Matrix2x6, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{project_camera_point, skew, CameraIntrinsics, GeometryError, RigidPose};

/// Pixel measurement of landmark `landmark` from keyframe `keyframe`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionFactor {
    pub keyframe: usize,
    pub landmark: usize,
    pub pixel: Vector2<f64>,
    /// Position of the measuring camera in the keyframe camera frame (zero for
    /// the reference camera, the stereo baseline for its partner).
    pub offset: Vector3<f64>,
    /// Scalar information `1/σ²`, pixels⁻².
    pub info: f64,
}

/// Distance of a landmark from the plane through one laser point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFactor {
    pub landmark: usize,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub info: f64,
}

/// Offset of a landmark from a laser corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointFactor {
    pub landmark: usize,
    pub corner: Vector3<f64>,
    pub info: f64,
}

/// Linearized reprojection residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReprojectionLinearization {
    pub residual: Vector2<f64>,
    /// With respect to the pose error state `[θ, δp]`.
    pub d_pose: Matrix2x6<f64>,
    pub d_landmark: Matrix2x3<f64>,
}

/// `π(R̂ (p_f − p) − offset) − u` with Jacobians.
///
/// With the rotation error `R = R̂ (I − ⌊θ×⌋)` on the laser-to-camera rotation,
/// the pose block is `J R̂ [⌊(p_f − p)×⌋, −I]` and the landmark block `J R̂`.
pub fn reprojection_residual(
    pose: &RigidPose,
    landmark: &Vector3<f64>,
    pixel: &Vector2<f64>,
    offset: &Vector3<f64>,
    k: &CameraIntrinsics,
) -> Result<ReprojectionLinearization, GeometryError> {
    let r_cw = pose.laser_to_body();
    let rel = landmark - pose.translation;
    let pc = r_cw * rel - offset;
    let proj = project_camera_point(&pc, k)?;
    let jr = proj.jacobian * r_cw;
    let mut d_pose = Matrix2x6::zeros();
    d_pose.fixed_view_mut::<2, 3>(0, 0).copy_from(&(jr * skew(&rel)));
    d_pose.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-jr));
    Ok(ReprojectionLinearization { residual: proj.pixel - pixel, d_pose, d_landmark: jr })
}

/// `n_rᵀ (p − p_r)` and its Jacobian `n_rᵀ`.
pub fn point_to_plane_residual(landmark: &Vector3<f64>, point: &Vector3<f64>, normal: &Vector3<f64>) -> (f64, Matrix1x3<f64>) {
    (normal.dot(&(landmark - point)), normal.transpose())
}

/// `p − q` and its Jacobian `I`.
pub fn point_to_point_residual(landmark: &Vector3<f64>, corner: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    (landmark - corner, Matrix3::identity())
}

/// Huber cost of a residual norm and the matching IRLS weight.
pub fn huber(r: f64, delta: f64) -> (f64, f64) {
    let r = r.abs();
    if r <= delta {
        (0.5 * r * r, 1.0)
    } else {
        (delta * r - 0.5 * delta * delta, delta / r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    #[test]
    fn huber_examples() {
        assert_eq!(huber(0.0, 2.0), (0.0, 1.0));
        assert_eq!(huber(2.0, 2.0), (2.0, 1.0));
        let (c, w) = huber(20.0, 2.0);
        assert_eq!(c, 2.0 * 20.0 - 2.0);
        assert_eq!(w, 0.1);
    }

    #[test]
    fn plane_and_point_examples() {
        let p_r = Vector3::new(1.0, 2.0, 3.0);
        let n = Vector3::new(0.0, 0.6, 0.8);
        assert!(point_to_plane_residual(&(p_r + Vector3::new(1.0, 0.8, -0.6)), &p_r, &n).0.abs() < 1e-15);
        assert!((point_to_plane_residual(&(p_r + n * 0.02), &p_r, &n).0 - 0.02).abs() < 1e-15);
        let q = Vector3::new(0.3, -0.1, 2.0);
        assert_eq!(point_to_point_residual(&q, &q).0, Vector3::zeros());
        assert!((point_to_point_residual(&(q + Vector3::new(0.01, 0.0, 0.0)), &q).0 - Vector3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn exact_projection_has_zero_residual_and_gauge_symmetry() {
        let k = CameraIntrinsics::default();
        let pose = RigidPose::new(UnitQuaternion::from_euler_angles(0.1, 0.2, -0.3), Vector3::new(0.5, -0.2, 0.1));
        let pc = Vector3::new(0.2, -0.1, 3.0);
        let p = pose.transform_point(&pc);
        let px = project_camera_point(&pc, &k).unwrap().pixel;
        let lin = reprojection_residual(&pose, &p, &px, &Vector3::zeros(), &k).unwrap();
        assert!(lin.residual.norm() < 1e-10);
        let shift = Vector3::new(1.0, -2.0, 0.5);
        let moved = RigidPose::new(*pose.rotation(), pose.translation + shift);
        let lin2 = reprojection_residual(&moved, &(p + shift), &px, &Vector3::zeros(), &k).unwrap();
        assert!((lin2.residual - lin.residual).norm() < 1e-10);
    }
}
