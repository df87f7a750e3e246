//! Error-state transition matrices, measurement Jacobian blocks and stacked
//! observability matrices, with numerical checks of the unobservable
//! directions for plane and point alignment.
//!
//! The error state is `[θ (3), p (3), p_f1 (3), …, p_fm (3)]`: the camera
//! orientation and position errors at the start of the window followed by the
//! landmark position errors, all in the laser frame.

use nalgebra::{DMatrix, Matrix3, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project, skew, CameraIntrinsics, RigidPose};
use crate::linalg::{max_principal_angle, nullspace, relative_product, NullspaceBasis, RANK_TOL};

/// Denominators below this magnitude make an analytic basis undefined.
const DEGENERATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservabilityError {
    #[error("measurement schedule is empty or produced no rows")]
    EmptySchedule,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("degenerate scenario: {0}")]
    ScenarioDegenerate(String),
}

/// Layout of the error state for `landmarks` features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorState {
    pub landmarks: usize,
}

impl ErrorState {
    pub fn new(landmarks: usize) -> Self {
        ErrorState { landmarks }
    }

    pub fn dimension(&self) -> usize {
        6 + 3 * self.landmarks
    }

    /// First column of feature `i`.
    pub fn landmark_offset(&self, i: usize) -> usize {
        6 + 3 * i
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementKind {
    Projection,
    Plane,
    Point,
}

/// One scheduled measurement of feature `feature` at keyframe `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub time: usize,
    pub feature: usize,
    pub kind: MeasurementKind,
    /// Laser plane normal, required for plane measurements.
    pub normal: Option<Vector3<f64>>,
}

impl Measurement {
    pub fn projection(time: usize, feature: usize) -> Self {
        Measurement { time, feature, kind: MeasurementKind::Projection, normal: None }
    }

    pub fn plane(time: usize, feature: usize, normal: Vector3<f64>) -> Self {
        Measurement { time, feature, kind: MeasurementKind::Plane, normal: Some(normal) }
    }

    pub fn point(time: usize, feature: usize) -> Self {
        Measurement { time, feature, kind: MeasurementKind::Point, normal: None }
    }
}

/// Rows `start..start + rows` of the stacked matrix come from this measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowBlock {
    pub time: usize,
    pub feature: usize,
    pub kind: MeasurementKind,
    pub start: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityMatrix {
    pub matrix: DMatrix<f64>,
    pub provenance: Vec<RowBlock>,
    /// First and last keyframe of the window.
    pub window: (usize, usize),
    pub state: ErrorState,
    /// Measurements skipped because the feature was not visible.
    pub notes: Vec<String>,
}

/// Error-state transition between two keyframes: identity except the
/// position/orientation block `-⌊(p_{k+1} - p_k)×⌋`.
pub fn transition_matrix(pose_k: &RigidPose, pose_next: &RigidPose, m: usize) -> DMatrix<f64> {
    let n = ErrorState::new(m).dimension();
    let mut phi = DMatrix::identity(n, n);
    let block = -skew(&(pose_next.translation - pose_k.translation));
    phi.fixed_view_mut::<3, 3>(3, 0).copy_from(&block);
    phi
}

/// Measurement Jacobian of the projection of feature `i` at keyframe `pose_k`,
/// with respect to the error state at that keyframe.
pub fn projection_jacobian(
    pose_k: &RigidPose,
    feature: usize,
    landmarks: &[Vector3<f64>],
    intrinsics: &CameraIntrinsics,
) -> Result<DMatrix<f64>, ObservabilityError> {
    let state = ErrorState::new(landmarks.len());
    let pf = feature_position(landmarks, feature)?;
    let jr = projected_rotation(pose_k, pf, intrinsics)?;
    let mut h = DMatrix::zeros(2, state.dimension());
    h.fixed_view_mut::<2, 3>(0, 0).copy_from(&(jr * skew(&(pf - pose_k.translation))));
    h.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-jr));
    h.fixed_view_mut::<2, 3>(0, state.landmark_offset(feature)).copy_from(&jr);
    Ok(h)
}

/// A projection block in both of its constructions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBlock {
    /// `H_k Φ_{k-1} ⋯ Φ_s`.
    pub product: DMatrix<f64>,
    /// `J R̂_k [⌊(p_f - p_s)×⌋, -I, 0 … I … 0]`.
    pub closed_form: DMatrix<f64>,
}

impl ProjectionBlock {
    /// `‖product - closed‖ / ‖closed‖`.
    pub fn relative_difference(&self) -> f64 {
        let scale = self.closed_form.norm().max(f64::MIN_POSITIVE);
        (&self.product - &self.closed_form).norm() / scale
    }
}

/// Projection block of feature `i` observed at keyframe `k`, propagated back to
/// the window start `s`.
pub fn projection_block(
    trajectory: &[RigidPose],
    s: usize,
    k: usize,
    feature: usize,
    landmarks: &[Vector3<f64>],
    intrinsics: &CameraIntrinsics,
) -> Result<ProjectionBlock, ObservabilityError> {
    if s > k || k >= trajectory.len() {
        return Err(ObservabilityError::InvalidMeasurement(format!("window {s}..={k} outside trajectory of {}", trajectory.len())));
    }
    let m = landmarks.len();
    let mut product = projection_jacobian(&trajectory[k], feature, landmarks, intrinsics)?;
    for step in (s..k).rev() {
        product *= transition_matrix(&trajectory[step], &trajectory[step + 1], m);
    }
    let state = ErrorState::new(m);
    let pf = landmarks[feature];
    let jr = projected_rotation(&trajectory[k], pf, intrinsics)?;
    let mut closed_form = DMatrix::zeros(2, state.dimension());
    closed_form.fixed_view_mut::<2, 3>(0, 0).copy_from(&(jr * skew(&(pf - trajectory[s].translation))));
    closed_form.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-jr));
    closed_form.fixed_view_mut::<2, 3>(0, state.landmark_offset(feature)).copy_from(&jr);
    Ok(ProjectionBlock { product, closed_form })
}

/// Point-to-plane row: `n_rᵀ` in the columns of feature `i`.
pub fn plane_block(normal: &Vector3<f64>, feature: usize, m: usize) -> Result<DMatrix<f64>, ObservabilityError> {
    if (normal.norm() - 1.0).abs() > 1e-9 {
        return Err(ObservabilityError::InvalidMeasurement(format!("plane normal has norm {}", normal.norm())));
    }
    check_feature(feature, m)?;
    let state = ErrorState::new(m);
    let mut row = DMatrix::zeros(1, state.dimension());
    row.fixed_view_mut::<1, 3>(0, state.landmark_offset(feature)).copy_from(&normal.transpose());
    Ok(row)
}

/// Point-to-point rows: `I₃` in the columns of feature `i`.
pub fn point_block(feature: usize, m: usize) -> Result<DMatrix<f64>, ObservabilityError> {
    check_feature(feature, m)?;
    let state = ErrorState::new(m);
    let mut rows = DMatrix::zeros(3, state.dimension());
    rows.fixed_view_mut::<3, 3>(0, state.landmark_offset(feature)).fill_with_identity();
    Ok(rows)
}

/// Gauge directions of pure visual SLAM: columns are global translation (3)
/// then global rotation (3), evaluated at the window-start position `p_s`.
pub fn slam_nullspace(p_s: &Vector3<f64>, landmarks: &[Vector3<f64>]) -> DMatrix<f64> {
    let state = ErrorState::new(landmarks.len());
    let mut n = DMatrix::zeros(state.dimension(), 6);
    n.fixed_view_mut::<3, 3>(0, 3).fill_with_identity();
    n.fixed_view_mut::<3, 3>(3, 0).fill_with_identity();
    n.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-skew(p_s)));
    for (i, pf) in landmarks.iter().enumerate() {
        let o = state.landmark_offset(i);
        n.fixed_view_mut::<3, 3>(o, 0).fill_with_identity();
        n.fixed_view_mut::<3, 3>(o, 3).copy_from(&(-skew(pf)));
    }
    n
}

/// Stacks the measurement blocks of `schedule` over the window starting at
/// keyframe 0, in (time, feature, kind) order. Projection rows of features
/// that are behind the camera or outside the image are skipped with a note.
pub fn build_observability(
    trajectory: &[RigidPose],
    landmarks: &[Vector3<f64>],
    schedule: &[Measurement],
    intrinsics: &CameraIntrinsics,
) -> Result<ObservabilityMatrix, ObservabilityError> {
    if trajectory.is_empty() {
        return Err(ObservabilityError::EmptyTrajectory);
    }
    if schedule.is_empty() {
        return Err(ObservabilityError::EmptySchedule);
    }
    let m = landmarks.len();
    let state = ErrorState::new(m);
    let mut ordered = schedule.to_vec();
    ordered.sort_by_key(|a| (a.time, a.feature, a.kind));
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(ordered.len());
    let mut provenance = Vec::with_capacity(ordered.len());
    let mut notes = Vec::new();
    let mut start = 0;
    for meas in &ordered {
        if meas.time >= trajectory.len() {
            return Err(ObservabilityError::InvalidMeasurement(format!("time {} outside trajectory of {}", meas.time, trajectory.len())));
        }
        check_feature(meas.feature, m)?;
        let block = match meas.kind {
            MeasurementKind::Projection => {
                match projection_block(trajectory, 0, meas.time, meas.feature, landmarks, intrinsics) {
                    Ok(b) => b.closed_form,
                    Err(ObservabilityError::InvalidMeasurement(why)) => {
                        notes.push(format!("skipped projection of feature {} at time {}: {why}", meas.feature, meas.time));
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            MeasurementKind::Plane => {
                let n = meas.normal.ok_or_else(|| ObservabilityError::InvalidMeasurement("plane measurement without a normal".into()))?;
                plane_block(&n, meas.feature, m)?
            }
            MeasurementKind::Point => point_block(meas.feature, m)?,
        };
        provenance.push(RowBlock { time: meas.time, feature: meas.feature, kind: meas.kind, start, rows: block.nrows() });
        start += block.nrows();
        blocks.push(block);
    }
    if start == 0 {
        return Err(ObservabilityError::EmptySchedule);
    }
    let mut matrix = DMatrix::zeros(start, state.dimension());
    for (b, p) in blocks.iter().zip(&provenance) {
        matrix.view_mut((p.start, 0), (p.rows, state.dimension())).copy_from(b);
    }
    let last = ordered.iter().map(|m| m.time).max().unwrap_or(0);
    Ok(ObservabilityMatrix { matrix, provenance, window: (0, last), state, notes })
}

impl ObservabilityMatrix {
    /// The matrix scaled so that its largest singular value is one.
    pub fn normalized(&self) -> DMatrix<f64> {
        let smax = self.matrix.clone().svd(false, false).singular_values.max();
        if smax > 0.0 {
            &self.matrix / smax
        } else {
            self.matrix.clone()
        }
    }

    /// Numerical nullspace of the normalized matrix.
    pub fn nullspace(&self, rel_tol: f64) -> NullspaceBasis {
        nullspace(&self.normalized(), rel_tol)
    }
}

/// A laser plane and the visual features lying on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneObservation {
    pub normal: Vector3<f64>,
    pub features: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneScenario {
    pub planes: Vec<PlaneObservation>,
    pub trajectory: Vec<RigidPose>,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointScenario {
    /// Visual features, each matched to a laser point.
    pub points: Vec<Vector3<f64>>,
    pub trajectory: Vec<RigidPose>,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseKind {
    Plane,
    Point,
}

/// Outcome of a nullspace check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub kind: CaseKind,
    /// Number of planes or points.
    pub count: usize,
    pub rows: usize,
    pub columns: usize,
    pub null_dimension: usize,
    pub expected_dimension: usize,
    /// Computed orthonormal nullspace basis (columns).
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// Closed-form unobservable directions, when they exist and are defined.
    pub analytic_basis: Option<DMatrix<f64>>,
    /// `‖M·N‖ / (‖M‖‖N‖)` for the analytic basis.
    pub analytic_product: Option<f64>,
    /// Largest principal angle between the computed and analytic bases.
    pub principal_angle: Option<f64>,
    /// Vanishing denominators that left the analytic basis undefined.
    pub degeneracies: Vec<String>,
    pub notes: Vec<String>,
}

impl CaseReport {
    /// Dimension as expected and, where an analytic basis exists, spanned by it.
    pub fn matches(&self, angle_tol: f64, product_tol: f64) -> bool {
        self.null_dimension == self.expected_dimension
            && self.principal_angle.is_none_or(|a| a < angle_tol)
            && self.analytic_product.is_none_or(|p| p <= product_tol)
    }
}

impl PlaneScenario {
    /// Features spread over the planes `n·p = 3` for the first `count` of the
    /// normals `(1,0,0)`, `(0,1,0)`, `(0,0,1)` (the last two shifted into view),
    /// seen from three keyframes.
    pub fn standard(count: usize) -> Result<PlaneScenario, ObservabilityError> {
        if !(1..=3).contains(&count) {
            return Err(ObservabilityError::InvalidMeasurement(format!("standard plane scenarios have 1 to 3 planes, got {count}")));
        }
        let grid = |f: &dyn Fn(f64, f64) -> Vector3<f64>| -> Vec<Vector3<f64>> {
            [(-0.4, -0.3), (0.3, -0.2), (0.1, 0.4), (-0.2, 0.25)].iter().map(|&(u, v)| f(u, v)).collect()
        };
        let all = [
            PlaneObservation { normal: Vector3::x(), features: grid(&|u, v| Vector3::new(4.0, u, v)) },
            PlaneObservation { normal: Vector3::y(), features: grid(&|u, v| Vector3::new(4.0 + u, 1.2, v)) },
            PlaneObservation { normal: Vector3::z(), features: grid(&|u, v| Vector3::new(4.0 + u, v, -1.0)) },
        ];
        let planes: Vec<PlaneObservation> = all.into_iter().take(count).collect();
        let target = Vector3::new(4.0, 0.0, 0.0);
        Ok(PlaneScenario { planes, trajectory: standard_trajectory(&target), intrinsics: CameraIntrinsics::default() })
    }

    fn landmarks(&self) -> Vec<Vector3<f64>> {
        self.planes.iter().flat_map(|p| p.features.iter().copied()).collect()
    }
}

impl PointScenario {
    /// The first `count` of `(1,2,3)`, `(2,1,3.5)`, `(1.5,2.5,2)`, seen from
    /// three keyframes.
    pub fn standard(count: usize) -> Result<PointScenario, ObservabilityError> {
        if !(1..=3).contains(&count) {
            return Err(ObservabilityError::InvalidMeasurement(format!("standard point scenarios have 1 to 3 points, got {count}")));
        }
        let all = [Vector3::new(1.0, 2.0, 3.0), Vector3::new(2.0, 1.0, 3.5), Vector3::new(1.5, 2.5, 2.0)];
        let points: Vec<Vector3<f64>> = all.into_iter().take(count).collect();
        let target = points.iter().sum::<Vector3<f64>>() / count as f64;
        Ok(PointScenario { points, trajectory: standard_trajectory(&target), intrinsics: CameraIntrinsics::default() })
    }
}

/// Builds the plane-alignment observability matrix and compares its
/// nullspace with the analytic one.
pub fn verify_plane_cases(scenario: &PlaneScenario) -> Result<CaseReport, ObservabilityError> {
    let count = scenario.planes.len();
    if count == 0 {
        return Err(ObservabilityError::EmptySchedule);
    }
    let normals: Vec<Vector3<f64>> = scenario.planes.iter().map(|p| p.normal).collect();
    for n in &normals {
        if (n.norm() - 1.0).abs() > 1e-9 {
            return Err(ObservabilityError::InvalidMeasurement(format!("plane normal has norm {}", n.norm())));
        }
    }
    match count {
        1 => {}
        2 => {
            if normals[0].cross(&normals[1]).norm() < DEGENERATE_TOL {
                return Err(ObservabilityError::ScenarioDegenerate("the two plane normals are collinear".into()));
            }
        }
        3 => {
            let det = Matrix3::from_columns(&[normals[0], normals[1], normals[2]]).determinant();
            if det.abs() < DEGENERATE_TOL {
                return Err(ObservabilityError::ScenarioDegenerate("the three plane normals are linearly dependent".into()));
            }
        }
        _ => return Err(ObservabilityError::InvalidMeasurement(format!("expected 1 to 3 planes, got {count}"))),
    }
    let landmarks = scenario.landmarks();
    let mut schedule = Vec::new();
    for k in 0..scenario.trajectory.len() {
        let mut feature = 0;
        for plane in &scenario.planes {
            for _ in &plane.features {
                schedule.push(Measurement::projection(k, feature));
                schedule.push(Measurement::plane(k, feature, plane.normal));
                feature += 1;
            }
        }
    }
    let obs = build_observability(&scenario.trajectory, &landmarks, &schedule, &scenario.intrinsics)?;
    let n_slam = slam_nullspace(&scenario.trajectory[0].translation, &landmarks);
    let mut degeneracies = Vec::new();
    let analytic = match count {
        1 => one_plane_basis(&n_slam, &normals[0], &mut degeneracies),
        2 => two_plane_basis(&n_slam, &normals[0], &normals[1], &mut degeneracies),
        _ => None,
    };
    Ok(report(CaseKind::Plane, count, [3, 1, 0][count - 1], &obs, analytic, degeneracies))
}

/// Builds the point-alignment observability matrix and compares its
/// nullspace with the analytic one.
pub fn verify_point_cases(scenario: &PointScenario) -> Result<CaseReport, ObservabilityError> {
    let count = scenario.points.len();
    let p = &scenario.points;
    match count {
        1 => {}
        2 => {
            if (p[0] - p[1]).norm() < DEGENERATE_TOL {
                return Err(ObservabilityError::ScenarioDegenerate("the two points coincide".into()));
            }
        }
        3 => {
            if (p[1] - p[0]).cross(&(p[2] - p[0])).norm() < DEGENERATE_TOL {
                return Err(ObservabilityError::ScenarioDegenerate("the three points are collinear".into()));
            }
        }
        0 => return Err(ObservabilityError::EmptySchedule),
        _ => return Err(ObservabilityError::InvalidMeasurement(format!("expected 1 to 3 points, got {count}"))),
    }
    let mut schedule = Vec::new();
    for k in 0..scenario.trajectory.len() {
        for i in 0..count {
            schedule.push(Measurement::projection(k, i));
            schedule.push(Measurement::point(k, i));
        }
    }
    let obs = build_observability(&scenario.trajectory, p, &schedule, &scenario.intrinsics)?;
    let n_slam = slam_nullspace(&scenario.trajectory[0].translation, p);
    let mut degeneracies = Vec::new();
    let analytic = match count {
        1 => Some(one_point_basis(&n_slam, &p[0])),
        2 => two_point_basis(&n_slam, &p[0], &p[1], &mut degeneracies),
        _ => None,
    };
    Ok(report(CaseKind::Point, count, [3, 1, 0][count - 1], &obs, analytic, degeneracies))
}

/// Runs the standard 1/2/3-plane and 1/2/3-point scenarios in parallel.
pub fn verify_standard_cases() -> Vec<Result<CaseReport, ObservabilityError>> {
    let cases: Vec<(CaseKind, usize)> = [CaseKind::Plane, CaseKind::Point].iter().flat_map(|&k| (1..=3).map(move |c| (k, c))).collect();
    cases
        .par_iter()
        .map(|&(kind, count)| match kind {
            CaseKind::Plane => verify_plane_cases(&PlaneScenario::standard(count)?),
            CaseKind::Point => verify_point_cases(&PointScenario::standard(count)?),
        })
        .collect()
}

/// `N1`: in-plane translations and rotation about the normal.
pub fn one_plane_basis(n_slam: &DMatrix<f64>, n: &Vector3<f64>, degeneracies: &mut Vec<String>) -> Option<DMatrix<f64>> {
    if n.x.abs() < DEGENERATE_TOL {
        degeneracies.push("one-plane basis divides by n_1 = 0".into());
        return None;
    }
    let c = |j: usize| n_slam.column(j).into_owned();
    let cols = [
        c(1) - c(0) * (n.y / n.x),
        c(2) - c(0) * (n.z / n.x),
        c(3) * n.x + c(4) * n.y + c(5) * n.z,
    ];
    Some(DMatrix::from_columns(&cols))
}

/// `N2`: translation along the intersection line of the two planes.
pub fn two_plane_basis(
    n_slam: &DMatrix<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    degeneracies: &mut Vec<String>,
) -> Option<DMatrix<f64>> {
    let denom = b.y * a.x - b.x * a.y;
    if a.x.abs() < DEGENERATE_TOL {
        degeneracies.push("two-plane basis divides by n_a1 = 0".into());
    }
    if denom.abs() < DEGENERATE_TOL {
        degeneracies.push("two-plane basis divides by n_b2 n_a1 - n_b1 n_a2 = 0".into());
    }
    if a.x.abs() < DEGENERATE_TOL || denom.abs() < DEGENERATE_TOL {
        return None;
    }
    let lambda = (b.z * a.x - b.x * a.z) / denom;
    let c = |j: usize| n_slam.column(j).into_owned();
    let col = c(0) * (a.y / a.x * lambda - a.z / a.x) - c(1) * lambda + c(2);
    Some(DMatrix::from_columns(&[col]))
}

/// `N3`: rotations about the observed point.
pub fn one_point_basis(n_slam: &DMatrix<f64>, p: &Vector3<f64>) -> DMatrix<f64> {
    let mut a3 = DMatrix::<f64>::identity(6, 6);
    a3.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(p));
    (n_slam * a3).columns(3, 3).into_owned()
}

/// `N4`: rotation about the axis through the two observed points, with the
/// translation `p_j × ω` that keeps both points fixed.
pub fn two_point_basis(
    n_slam: &DMatrix<f64>,
    pi: &Vector3<f64>,
    pj: &Vector3<f64>,
    degeneracies: &mut Vec<String>,
) -> Option<DMatrix<f64>> {
    let delta = pi.x - pj.x;
    if delta.abs() < DEGENERATE_TOL {
        degeneracies.push("two-point basis divides by p_i1 - p_j1 = 0".into());
        return None;
    }
    let d = (pi.y - pj.y) / delta;
    let e = (pi.z - pj.z) / delta;
    let a = (-pi.y * pj.z + pi.z * pj.y) / delta;
    let b = pj.z - pj.x * e;
    let c = -pj.y + pj.x * d;
    let col = |j: usize| n_slam.column(j).into_owned();
    let v = col(0) * a + col(1) * b + col(2) * c + col(3) + col(4) * d + col(5) * e;
    Some(DMatrix::from_columns(&[v]))
}

fn report(
    kind: CaseKind,
    count: usize,
    expected_dimension: usize,
    obs: &ObservabilityMatrix,
    analytic: Option<DMatrix<f64>>,
    degeneracies: Vec<String>,
) -> CaseReport {
    let scaled = obs.normalized();
    let ns = nullspace(&scaled, RANK_TOL);
    let analytic_product = analytic.as_ref().map(|n| relative_product(&scaled, n));
    let principal_angle = analytic.as_ref().map(|n| max_principal_angle(&ns.basis, n));
    CaseReport {
        kind,
        count,
        rows: scaled.nrows(),
        columns: scaled.ncols(),
        null_dimension: ns.dimension,
        expected_dimension,
        basis: ns.basis,
        singular_values: ns.singular_values,
        analytic_basis: analytic,
        analytic_product,
        principal_angle,
        degeneracies,
        notes: obs.notes.clone(),
    }
}

fn check_feature(feature: usize, m: usize) -> Result<(), ObservabilityError> {
    if feature >= m {
        return Err(ObservabilityError::InvalidMeasurement(format!("feature {feature} out of range for {m} landmarks")));
    }
    Ok(())
}

fn feature_position(landmarks: &[Vector3<f64>], feature: usize) -> Result<Vector3<f64>, ObservabilityError> {
    check_feature(feature, landmarks.len())?;
    Ok(landmarks[feature])
}

/// `J R̂_k` for a visible feature.
fn projected_rotation(
    pose: &RigidPose,
    pf: Vector3<f64>,
    intrinsics: &CameraIntrinsics,
) -> Result<nalgebra::Matrix2x3<f64>, ObservabilityError> {
    let proj = project(&pf, pose, intrinsics).map_err(|e| ObservabilityError::InvalidMeasurement(e.to_string()))?;
    if !intrinsics.contains(&proj.pixel) {
        return Err(ObservabilityError::InvalidMeasurement(format!("pixel ({:.1}, {:.1}) outside the image", proj.pixel.x, proj.pixel.y)));
    }
    Ok(proj.jacobian * pose.laser_to_body())
}

/// Camera at `eye` with its optical axis through `target` and image rows
/// roughly aligned with laser `-z`.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> RigidPose {
    let z = (target - eye).normalize();
    let mut x = z.cross(&Vector3::z());
    if x.norm() < 1e-6 {
        x = z.cross(&Vector3::x());
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let r = Rotation3::from_basis_unchecked(&[x, y, z]);
    RigidPose::new(UnitQuaternion::from_rotation_matrix(&r), *eye)
}

/// Three keyframes with generic translation and viewing direction.
fn standard_trajectory(target: &Vector3<f64>) -> Vec<RigidPose> {
    let eyes = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.2, 0.4, 0.15), Vector3::new(-0.25, -0.3, 0.3)];
    let aims = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.0, 0.1, -0.05), Vector3::new(0.1, -0.05, 0.1)];
    eyes.iter().zip(&aims).map(|(e, a)| look_at(e, &(target + a))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_examples() {
        let p = RigidPose::identity();
        assert_eq!(transition_matrix(&p, &p, 2), DMatrix::identity(12, 12));
        let q = RigidPose::new(UnitQuaternion::identity(), Vector3::new(1.0, 0.0, 0.0));
        let phi = transition_matrix(&p, &q, 1);
        assert_eq!(phi.fixed_view::<3, 3>(3, 0).into_owned(), -skew(&Vector3::x()));
    }

    #[test]
    fn plane_row_example() {
        let row = plane_block(&Vector3::z(), 1, 2).unwrap();
        let mut expected = DMatrix::zeros(1, 12);
        expected[(0, 11)] = 1.0;
        assert_eq!(row, expected);
        assert!(plane_block(&Vector3::new(0.0, 0.0, 2.0), 0, 1).is_err());
    }

    #[test]
    fn one_projection_shape() {
        let traj = vec![RigidPose::identity()];
        let lm = vec![Vector3::new(0.1, 0.2, 3.0)];
        let obs = build_observability(&traj, &lm, &[Measurement::projection(0, 0)], &CameraIntrinsics::default()).unwrap();
        assert_eq!(obs.matrix.shape(), (2, 9));
        assert_eq!(obs.window, (0, 0));
    }

    #[test]
    fn empty_schedule_rejected() {
        let traj = vec![RigidPose::identity()];
        assert_eq!(
            build_observability(&traj, &[Vector3::z()], &[], &CameraIntrinsics::default()).unwrap_err(),
            ObservabilityError::EmptySchedule
        );
    }
}
