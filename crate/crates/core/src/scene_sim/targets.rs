use nalgebra::{Rotation3, Unit, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::RigidPose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Chessboard,
    Polygon,
    Box,
}

impl TargetKind {
    /// Whether the target is aligned with point-to-point (corner) residuals.
    pub fn uses_corners(&self) -> bool {
        !matches!(self, TargetKind::Chessboard)
    }
}

impl std::str::FromStr for TargetKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chessboard" => Ok(TargetKind::Chessboard),
            "polygon" => Ok(TargetKind::Polygon),
            "box" => Ok(TargetKind::Box),
            other => Err(format!("unknown target kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChessboardGrid {
    /// Inner-corner rows.
    pub rows: usize,
    /// Inner-corner columns.
    pub cols: usize,
    /// Square size in meters.
    pub square: f64,
}

/// Physical shape in the target frame. Flat targets lie in the plane `z = 0`
/// with their front face along `+z`; boxes are centered on the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TargetShape {
    Rectangle { width: f64, height: f64 },
    Polygon { vertices: Vec<Vector2<f64>> },
    Cuboid { size: Vector3<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModel {
    pub id: usize,
    pub kind: TargetKind,
    /// Target frame expressed in the laser frame.
    pub pose: RigidPose,
    pub shape: TargetShape,
    pub grid: Option<ChessboardGrid>,
    /// Visual corner landmarks in the target frame.
    pub corners: Vec<Vector3<f64>>,
}

/// A ray–surface hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    /// Outward surface normal in the laser frame.
    pub normal: Vector3<f64>,
}

impl TargetModel {
    pub fn chessboard(id: usize, pose: RigidPose, grid: ChessboardGrid, margin: f64) -> Self {
        let width = (grid.cols + 1) as f64 * grid.square + 2.0 * margin;
        let height = (grid.rows + 1) as f64 * grid.square + 2.0 * margin;
        let mut corners = Vec::with_capacity(grid.rows * grid.cols);
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                corners.push(Vector3::new(
                    (c as f64 - (grid.cols as f64 - 1.0) / 2.0) * grid.square,
                    (r as f64 - (grid.rows as f64 - 1.0) / 2.0) * grid.square,
                    0.0,
                ));
            }
        }
        TargetModel {
            id,
            kind: TargetKind::Chessboard,
            pose,
            shape: TargetShape::Rectangle { width, height },
            grid: Some(grid),
            corners,
        }
    }

    /// Convex polygon given counter-clockwise in the target plane.
    pub fn polygon(id: usize, pose: RigidPose, vertices: Vec<Vector2<f64>>) -> Self {
        let corners = vertices.iter().map(|v| Vector3::new(v.x, v.y, 0.0)).collect();
        TargetModel {
            id,
            kind: TargetKind::Polygon,
            pose,
            shape: TargetShape::Polygon { vertices },
            grid: None,
            corners,
        }
    }

    pub fn cuboid(id: usize, pose: RigidPose, size: Vector3<f64>) -> Self {
        let h = size / 2.0;
        let mut corners = Vec::with_capacity(8);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    corners.push(Vector3::new(sx * h.x, sy * h.y, sz * h.z));
                }
            }
        }
        TargetModel {
            id,
            kind: TargetKind::Box,
            pose,
            shape: TargetShape::Cuboid { size },
            grid: None,
            corners,
        }
    }

    /// Width × height of the target's face (largest face for boxes).
    pub fn extent(&self) -> (f64, f64) {
        match &self.shape {
            TargetShape::Rectangle { width, height } => (*width, *height),
            TargetShape::Polygon { vertices } => {
                let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
                for v in vertices {
                    lo = lo.inf(v);
                    hi = hi.sup(v);
                }
                (hi.x - lo.x, hi.y - lo.y)
            }
            TargetShape::Cuboid { size } => {
                let mut s = [size.x, size.y, size.z];
                s.sort_by(|a, b| b.total_cmp(a));
                (s[0], s[1])
            }
        }
    }

    /// Radius of a sphere around the target origin that contains the target.
    pub fn bounding_radius(&self) -> f64 {
        match &self.shape {
            TargetShape::Rectangle { width, height } => 0.5 * (width * width + height * height).sqrt(),
            TargetShape::Polygon { vertices } => vertices.iter().map(|v| v.norm()).fold(0.0, f64::max),
            TargetShape::Cuboid { size } => 0.5 * size.norm(),
        }
    }

    pub fn is_flat(&self) -> bool {
        !matches!(self.shape, TargetShape::Cuboid { .. })
    }

    /// Front-face normal (flat targets) or facing direction (boxes), laser frame.
    pub fn normal(&self) -> Vector3<f64> {
        match &self.shape {
            TargetShape::Cuboid { .. } => self.pose.rotation() * Vector3::repeat(1.0).normalize(),
            _ => self.pose.rotation() * Vector3::z(),
        }
    }

    /// Plane `n·p + d = 0` of a flat target, laser frame.
    pub fn plane(&self) -> Option<(Vector3<f64>, f64)> {
        if !self.is_flat() {
            return None;
        }
        let n = self.normal();
        Some((n, -n.dot(&self.pose.translation)))
    }

    pub fn corners_laser(&self) -> Vec<Vector3<f64>> {
        self.corners.iter().map(|c| self.pose.transform_point(c)).collect()
    }

    /// Outward normals (laser frame) of the faces adjacent to corner `idx`.
    pub fn corner_face_normals(&self, idx: usize) -> Vec<Vector3<f64>> {
        let r = self.pose.rotation();
        match &self.shape {
            TargetShape::Cuboid { .. } => {
                let c = self.corners[idx];
                (0..3)
                    .map(|a| {
                        let mut n = Vector3::zeros();
                        n[a] = c[a].signum();
                        r * n
                    })
                    .collect()
            }
            _ => vec![r * Vector3::z()],
        }
    }

    /// Whether a corner is on a face turned toward `viewpoint` (laser frame).
    pub fn corner_faces(&self, idx: usize, viewpoint: &Vector3<f64>) -> bool {
        let p = self.pose.transform_point(&self.corners[idx]);
        self.corner_face_normals(idx).iter().any(|n| n.dot(&(viewpoint - p)) > 1e-9)
    }

    /// First intersection of the ray `origin + s·dir` (s > 0) with the target.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let o = self.pose.inverse_transform_point(origin);
        let d = self.pose.rotation().inverse() * dir;
        match &self.shape {
            TargetShape::Rectangle { width, height } => {
                let (s, hit) = plane_hit(&o, &d)?;
                (hit.x.abs() <= width / 2.0 && hit.y.abs() <= height / 2.0).then(|| self.flat_hit(s, &d))
            }
            TargetShape::Polygon { vertices } => {
                let (s, hit) = plane_hit(&o, &d)?;
                inside_convex(vertices, &Vector2::new(hit.x, hit.y)).then(|| self.flat_hit(s, &d))
            }
            TargetShape::Cuboid { size } => {
                let h = size / 2.0;
                let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut axis = 0;
                let mut sign = 0.0;
                for a in 0..3 {
                    if d[a].abs() < 1e-15 {
                        if o[a].abs() > h[a] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (-h[a] - o[a]) / d[a];
                    let t2 = (h[a] - o[a]) / d[a];
                    let (lo, hi, s) = if t1 < t2 { (t1, t2, -1.0) } else { (t2, t1, 1.0) };
                    if lo > t_near {
                        t_near = lo;
                        axis = a;
                        sign = s;
                    }
                    t_far = t_far.min(hi);
                }
                if t_near > t_far || t_near <= 0.0 {
                    return None;
                }
                let mut n = Vector3::zeros();
                n[axis] = sign;
                Some(Hit { distance: t_near, normal: self.pose.rotation() * n })
            }
        }
    }

    fn flat_hit(&self, s: f64, d: &Vector3<f64>) -> Hit {
        // Both faces reflect; report the normal facing the ray origin.
        let n = if d.z < 0.0 { Vector3::z() } else { -Vector3::z() };
        Hit { distance: s, normal: self.pose.rotation() * n }
    }
}

fn plane_hit(o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
    if d.z.abs() < 1e-15 {
        return None;
    }
    let s = -o.z / d.z;
    (s > 0.0).then(|| (s, o + d * s))
}

fn inside_convex(vertices: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    let n = vertices.len();
    (0..n).all(|i| {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let e = b - a;
        let w = p - a;
        e.x * w.y - e.y * w.x >= 0.0
    })
}

/// Pose whose `+z` axis (flat) or facing diagonal (box) points along `facing`,
/// centered at `center`, with an in-plane roll.
pub fn facing_pose(kind: TargetKind, center: Vector3<f64>, facing: &Vector3<f64>, roll: f64) -> RigidPose {
    let facing = Unit::new_normalize(*facing);
    let body_axis = match kind {
        TargetKind::Box => Unit::new_normalize(Vector3::repeat(1.0)),
        _ => Vector3::z_axis(),
    };
    // Keep the target's y axis as close to laser +z (upright) as possible.
    let base = if kind == TargetKind::Box {
        UnitQuaternion::rotation_between_axis(&body_axis, &facing)
            .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI))
    } else {
        let z = facing.into_inner();
        let up = Vector3::z();
        let mut x = up.cross(&z);
        if x.norm() < 1e-6 {
            x = Vector3::x().cross(&z);
        }
        let x = x.normalize();
        let y = z.cross(&x);
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_basis_unchecked(&[x, y, z]))
    };
    let roll = UnitQuaternion::from_axis_angle(&body_axis, roll);
    RigidPose::new(base * roll, center)
}

/// Regular polygon with `n` vertices of circumradius `radius`, counter-clockwise.
pub fn regular_polygon(n: usize, radius: f64) -> Vec<Vector2<f64>> {
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64 + std::f64::consts::FRAC_PI_2;
            Vector2::new(radius * a.cos(), radius * a.sin())
        })
        .collect()
}
