//! Rigid-body and pinhole projection algebra shared by every other module.
//!
//! # Conventions
//!
//! Quaternions are nalgebra's Hamilton unit quaternions and always describe
//! active rotations. A [`RigidPose`] stores the rotation that takes vectors from
//! the body (camera) frame into the laser frame, together with the body origin
//! expressed in the laser frame.
//!
//! Rotation *errors* follow the passive small-angle convention used by
//! error-state filters: if `R` is a laser-to-camera rotation matrix with
//! estimate `R̂`, the error vector `θ` satisfies `R = R̂ (I - ⌊θ×⌋)`. The error
//! is applied on the right of the laser-to-camera estimate, which is the same
//! as a left perturbation `Exp(θ) · R̂ᵀ` of the camera-to-laser rotation.
//! Every first-order update is re-orthonormalized by polar decomposition, and
//! [`quaternion_error`] is the exact inverse of [`apply_rotation_error`].

use nalgebra::{
    Matrix2x3, Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Depth below which a point is considered to be behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (depth {depth:.3e} m)")]
    BehindCamera { depth: f64 },
    #[error("relative rotation of {angle:.6} rad is too large for a small-angle error")]
    DegenerateRotationError { angle: f64 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// The skew-symmetric (cross-product) matrix of `v`, so that `skew(v) * w == v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Nearest rotation matrix to `m` in the Frobenius sense (polar decomposition).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Rotation3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let mut correction = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        correction[(2, 2)] = -1.0;
    }
    Rotation3::from_matrix_unchecked(u * correction * v_t)
}

/// Minimal three-parameter rotation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallAngle(pub Vector3<f64>);

impl SmallAngle {
    pub fn zero() -> Self {
        SmallAngle(Vector3::zeros())
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// The error quaternion `[θ/2, sqrt(1 - θᵀθ/4)]` (vector part first), returned
    /// as the Hamilton quaternion of the same rotation matrix `≈ I - ⌊θ×⌋`.
    pub fn to_quaternion(&self) -> UnitQuaternion<f64> {
        let half = self.0 * 0.5;
        let w = (1.0 - half.norm_squared()).max(0.0).sqrt();
        UnitQuaternion::new_normalize(Quaternion::new(w, -half.x, -half.y, -half.z))
    }

    /// Inverse of [`SmallAngle::to_quaternion`].
    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        let q = canonical(q);
        SmallAngle(-2.0 * q.vector())
    }
}

fn canonical(q: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        *q
    }
}

/// `R̂ (I - ⌊θ×⌋)`, projected back onto SO(3).
pub fn apply_rotation_error(r_hat: &Matrix3<f64>, theta: &SmallAngle) -> Rotation3<f64> {
    nearest_rotation(&(r_hat * (Matrix3::identity() - skew(&theta.0))))
}

/// Rotation error `θ` such that `apply_rotation_error(R(q_est), θ)` reproduces
/// `R(q_true)`, where both quaternions are laser-to-camera rotations.
///
/// The polar projection of `I - ⌊θ×⌋` is a rotation by `atan(‖θ‖)`, so the
/// inverse scales the axis by `tan` of the relative angle. It is undefined at a
/// relative angle of π/2, which is reported as degenerate.
pub fn quaternion_error(
    q_true: &UnitQuaternion<f64>,
    q_est: &UnitQuaternion<f64>,
) -> Result<SmallAngle, GeometryError> {
    let delta = canonical(&(q_est.inverse() * q_true));
    let v = delta.vector();
    let w = delta.w;
    let denom = w * w - v.norm_squared();
    let angle = 2.0 * v.norm().atan2(w);
    if denom <= 1e-12 {
        return Err(GeometryError::DegenerateRotationError { angle });
    }
    // tan(φ) = 2 w |v| / (w² - |v|²); the relative rotation turns by -θ.
    Ok(SmallAngle(-(2.0 * w / denom) * v))
}

/// Pose of a body frame (camera) expressed in the laser frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct RigidPose {
    rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    /// `[w, x, y, z]`
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl From<PoseRepr> for RigidPose {
    fn from(r: PoseRepr) -> Self {
        let q = Quaternion::new(r.rotation[0], r.rotation[1], r.rotation[2], r.rotation[3]);
        RigidPose::new(UnitQuaternion::new_normalize(q), Vector3::from(r.translation))
    }
}

impl From<RigidPose> for PoseRepr {
    fn from(p: RigidPose) -> Self {
        let q = p.rotation.quaternion();
        PoseRepr {
            rotation: [q.w, q.i, q.j, q.k],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        RigidPose {
            rotation: UnitQuaternion::new_normalize(rotation.into_inner()),
            translation,
        }
    }

    pub fn identity() -> Self {
        RigidPose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_rotation_matrix(rotation: &Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::from_rotation_matrix(rotation), translation)
    }

    /// Body-to-laser rotation.
    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    /// Body-to-laser rotation matrix.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Laser-to-body rotation matrix (`R̂` of the error-state formulation).
    pub fn laser_to_body(&self) -> Matrix3<f64> {
        self.rotation_matrix().transpose()
    }

    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidPose {
        let inv = self.rotation.inverse();
        RigidPose::new(inv, -(inv * self.translation))
    }

    /// Maps a body-frame point into the laser frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Maps a laser-frame point into the body frame.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    /// Applies an error-state update `(θ, δp)`: the laser-to-body rotation
    /// becomes `R̂ (I - ⌊θ×⌋)` (re-orthonormalized) and the position moves by `δp`.
    pub fn retract(&self, theta: &SmallAngle, delta_p: &Vector3<f64>) -> RigidPose {
        let laser_to_body = apply_rotation_error(&self.laser_to_body(), theta);
        RigidPose::from_rotation_matrix(&laser_to_body.inverse(), self.translation + delta_p)
    }

    /// Angle of the relative rotation between two poses, in radians.
    pub fn rotation_angle_to(&self, other: &RigidPose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr", into = "IntrinsicsRepr")]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<IntrinsicsRepr> for CameraIntrinsics {
    type Error = GeometryError;
    fn try_from(r: IntrinsicsRepr) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl From<CameraIntrinsics> for IntrinsicsRepr {
    fn from(k: CameraIntrinsics) -> Self {
        IntrinsicsRepr {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside a {width}x{height} image"
            )));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy, width, height })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }
}

/// Result of a pinhole projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    /// Point in the camera frame.
    pub camera_point: Vector3<f64>,
    /// Jacobian of the pixel with respect to the camera-frame point.
    pub jacobian: Matrix2x3<f64>,
}

/// Pinhole projection of a point already expressed in the camera frame.
pub fn project_camera_point(
    p: &Vector3<f64>,
    k: &CameraIntrinsics,
) -> Result<Projection, GeometryError> {
    if p.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { depth: p.z });
    }
    let inv_z = 1.0 / p.z;
    let pixel = Vector2::new(k.fx * p.x * inv_z + k.cx, k.fy * p.y * inv_z + k.cy);
    let jacobian = Matrix2x3::new(
        k.fx * inv_z,
        0.0,
        -k.fx * p.x * inv_z * inv_z,
        0.0,
        k.fy * inv_z,
        -k.fy * p.y * inv_z * inv_z,
    );
    Ok(Projection { pixel, camera_point: *p, jacobian })
}

/// Projects a laser-frame point through a camera whose pose is given in the laser frame.
pub fn project(
    point: &Vector3<f64>,
    camera_pose: &RigidPose,
    k: &CameraIntrinsics,
) -> Result<Projection, GeometryError> {
    project_camera_point(&camera_pose.inverse_transform_point(point), k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
        let v = Vector3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        UnitQuaternion::from_scaled_axis(v)
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let s = skew(&Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(s, Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn skew_matches_componentwise_cross_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let v = Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * 4.0;
            let w = Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * 4.0;
            let cross = Vector3::new(
                v.y * w.z - v.z * w.y,
                v.z * w.x - v.x * w.z,
                v.x * w.y - v.y * w.x,
            );
            assert_relative_eq!(skew(&v) * w, cross, epsilon = 1e-14);
            let s = skew(&v);
            assert_eq!(s, -s.transpose());
            assert!((s * v).norm() < 1e-14);
        }
    }

    #[test]
    fn rotation_error_identity_cases() {
        let r = apply_rotation_error(&Matrix3::identity(), &SmallAngle::zero());
        assert_relative_eq!(r.into_inner(), Matrix3::identity(), epsilon = 1e-15);

        let r = apply_rotation_error(
            &Matrix3::identity(),
            &SmallAngle(Vector3::new(1e-3, 0.0, 0.0)),
        );
        // axis-angle oracle: the angle of R is acos((tr R - 1) / 2)
        let angle = ((r.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        assert!((angle - 1e-3).abs() < 1e-9, "angle {angle}");
    }

    #[test]
    fn rotation_error_matches_exponential_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let r_hat = random_rotation(&mut rng).to_rotation_matrix().into_inner();
            let theta = Vector3::new(0.0, 1e-4, 0.0);
            let applied = apply_rotation_error(&r_hat, &SmallAngle(theta));
            // R̂ (I - ⌊θ×⌋) ≈ R̂ Exp(-θ)
            let exp = r_hat * Rotation3::from_scaled_axis(-theta).into_inner();
            assert!((applied.into_inner() - exp).norm() < 1e-7);
        }
    }

    #[test]
    fn quaternion_error_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_rotation(&mut rng);
        assert_relative_eq!(quaternion_error(&q, &q).unwrap().0, Vector3::zeros(), epsilon = 1e-15);

        // A passive rotation of 1e-3 rad about z: R_true = R_est Exp(-θ).
        let q_est = random_rotation(&mut rng);
        let q_true = q_est * UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, -1e-3));
        let theta = quaternion_error(&q_true, &q_est).unwrap();
        assert!((theta.0 - Vector3::new(0.0, 0.0, 1e-3)).norm() < 1e-8);
    }

    #[test]
    fn quaternion_error_reconstructs_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let q_est = random_rotation(&mut rng);
            let axis = random_unit(&mut rng);
            let q_true = q_est * UnitQuaternion::from_scaled_axis(axis * rng.random_range(-0.05..0.05));
            let theta = quaternion_error(&q_true, &q_est).unwrap();
            let r_est = q_est.to_rotation_matrix().into_inner();
            let rebuilt = UnitQuaternion::from_rotation_matrix(&apply_rotation_error(&r_est, &theta));
            worst = worst.max(rebuilt.angle_to(&q_true));
        }
        assert!(worst < 1e-7, "worst reconstruction {worst}");
    }

    #[test]
    fn quaternion_error_rejects_large_angles() {
        let q = UnitQuaternion::identity();
        let far = UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 1.7, 0.0));
        assert!(matches!(
            quaternion_error(&far, &q),
            Err(GeometryError::DegenerateRotationError { .. })
        ));
    }

    #[test]
    fn small_angle_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let theta = random_unit(&mut rng) * rng.random_range(0.0..0.1);
            let q = SmallAngle(theta).to_quaternion();
            assert!((SmallAngle::from_quaternion(&q).0 - theta).norm() < 1e-9);
            // The quaternion's matrix agrees with I - ⌊θ×⌋ to first order.
            let m = q.to_rotation_matrix().into_inner();
            assert!((m - (Matrix3::identity() - skew(&theta))).norm() < theta.norm_squared() + 1e-15);
        }
    }

    #[test]
    fn apply_then_error_recovers_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let q_hat = random_rotation(&mut rng);
            let theta = random_unit(&mut rng) * rng.random_range(0.0..1e-2);
            let r = apply_rotation_error(&q_hat.to_rotation_matrix().into_inner(), &SmallAngle(theta));
            let q = UnitQuaternion::from_rotation_matrix(&r);
            let back = quaternion_error(&q, &q_hat).unwrap();
            assert!((back.0 - theta).norm() < 1e-7);
        }
    }

    #[test]
    fn representations_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let q = random_rotation(&mut rng);
            let m = q.to_rotation_matrix();
            let back = UnitQuaternion::from_rotation_matrix(&m);
            assert!(back.angle_to(&q) < 1e-10);
            let aa = q.scaled_axis();
            assert!(UnitQuaternion::from_scaled_axis(aa).angle_to(&q) < 1e-10);
        }
    }

    #[test]
    fn pose_compose_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let p = RigidPose::new(
                random_rotation(&mut rng),
                Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 1.0),
            );
            let id = p.compose(&p.inverse());
            assert!(id.rotation().angle() < 1e-12);
            assert!(id.translation.norm() < 1e-12);
            assert!((p.rotation().norm() - 1.0).abs() < 1e-12);
            let pt = Vector3::new(0.3, -0.2, 4.0);
            assert_relative_eq!(p.inverse_transform_point(&p.transform_point(&pt)), pt, epsilon = 1e-12);
        }
    }

    #[test]
    fn pose_serde_round_trip() {
        let p = RigidPose::new(
            UnitQuaternion::from_euler_angles(0.1, -0.2, 0.3),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let s = serde_json::to_string(&p).unwrap();
        let back: RigidPose = serde_json::from_str(&s).unwrap();
        assert!(back.rotation_angle_to(&p) < 1e-15);
        assert_eq!(back.translation, p.translation);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).is_ok());
        assert!(CameraIntrinsics::new(-1.0, 500.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 700.0, 240.0, 640, 480).is_err());
        let bad = r#"{"fx":0.0,"fy":1.0,"cx":1.0,"cy":1.0,"width":4,"height":4}"#;
        assert!(serde_json::from_str::<CameraIntrinsics>(bad).is_err());
    }

    #[test]
    fn projection_examples() {
        let k = CameraIntrinsics::default();
        let p = project_camera_point(&Vector3::new(0.0, 0.0, 1.0), &k).unwrap();
        assert_eq!(p.pixel, Vector2::new(320.0, 240.0));
        let p = project_camera_point(&Vector3::new(0.1, 0.0, 1.0), &k).unwrap();
        assert_relative_eq!(p.pixel, Vector2::new(370.0, 240.0), epsilon = 1e-12);
        assert!(matches!(
            project_camera_point(&Vector3::new(0.0, 0.0, 1e-7), &k),
            Err(GeometryError::BehindCamera { .. })
        ));
    }

    #[test]
    fn projection_jacobian_matches_finite_differences() {
        let k = CameraIntrinsics::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for _ in 0..1000 {
            let p = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(1.0..8.0),
            );
            let proj = project_camera_point(&p, &k).unwrap();
            let mut fd = Matrix2x3::zeros();
            for c in 0..3 {
                let mut dp = Vector3::zeros();
                dp[c] = h;
                let plus = project_camera_point(&(p + dp), &k).unwrap().pixel;
                let minus = project_camera_point(&(p - dp), &k).unwrap().pixel;
                fd.set_column(c, &((plus - minus) / (2.0 * h)));
            }
            let rel = (proj.jacobian - fd).norm() / proj.jacobian.norm();
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }
}
