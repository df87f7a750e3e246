//! Planar calibration-target placement: Hessian determinants of the 2D
//! point-to-plane problem and a greedy placement heuristic.
//!
//! The 2D residual of a camera-frame point `p` against a laser line with unit
//! normal `n` and offset `d` is `nᵀ(R(θ)p + t) - d`, with parameters `(θ, t)`.

use nalgebra::{Matrix2, Matrix3, RowVector3, Vector2};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("normal must be a unit vector (norm {0})")]
    NonUnitNormal(f64),
    #[error("at least one Jacobian row is required")]
    NoRows,
    #[error("at least two targets are required, got {0}")]
    TooFewTargets(usize),
    #[error("workspace radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
}

/// Two plates seen in a planar world: plate `a` has normal `(1, 0)`, plate `b`
/// is rotated by `beta` relative to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Planar2DConfig {
    pub theta: f64,
    pub n1: Vector2<f64>,
    pub n2: Vector2<f64>,
    /// `p1`, `p2` on plate `a` and `p3` on plate `b`, camera frame.
    pub points: [Vector2<f64>; 3],
    pub beta: f64,
}

impl Planar2DConfig {
    pub fn new(theta: f64, beta: f64, points: [Vector2<f64>; 3]) -> Self {
        Planar2DConfig { theta, n1: Vector2::new(1.0, 0.0), n2: Vector2::new(beta.cos(), beta.sin()), points, beta }
    }

    /// The three Jacobian rows `(p1, n1)`, `(p2, n1)`, `(p3, n2)`.
    pub fn rows(&self) -> [RowVector3<f64>; 3] {
        let [p1, p2, p3] = self.points;
        [row(&self.n1, &p1, self.theta), row(&self.n1, &p2, self.theta), row(&self.n2, &p3, self.theta)]
    }
}

pub fn rotation_2d(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// `dR/dθ`.
pub fn rotation_2d_derivative(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(-s, -c, c, -s)
}

/// Point-to-line residual `nᵀ(R(θ)p + t) - d`.
pub fn residual_2d(n: &Vector2<f64>, d: f64, p: &Vector2<f64>, theta: f64, t: &Vector2<f64>) -> f64 {
    n.dot(&(rotation_2d(theta) * p + t)) - d
}

/// Jacobian `[nᵀR′(θ)p, n_x, n_y]` of the residual with respect to `(θ, t)`.
pub fn jacobian_2d(n: &Vector2<f64>, p: &Vector2<f64>, theta: f64) -> Result<RowVector3<f64>, PlacementError> {
    check_unit(n)?;
    Ok(row(n, p, theta))
}

/// `Σ JᵢᵀJᵢ`.
pub fn hessian_2d(rows: &[RowVector3<f64>]) -> Result<Matrix3<f64>, PlacementError> {
    if rows.is_empty() {
        return Err(PlacementError::NoRows);
    }
    Ok(rows.iter().map(|r| r.transpose() * r).sum())
}

/// `sinθ·p_x + cosθ·p_y`: minus the rotation entry of a point's Jacobian
/// row against the normal `(1, 0)`.
pub fn q(p: &Vector2<f64>, theta: f64) -> f64 {
    theta.sin() * p.x + theta.cos() * p.y
}

/// `cosθ·p_x − sinθ·p_y`, the x component of `R(θ)p`. Does not reproduce the
/// brute-force determinant; kept for comparison.
pub fn q_literal(p: &Vector2<f64>, theta: f64) -> f64 {
    theta.cos() * p.x - theta.sin() * p.y
}

/// A determinant evaluated in closed form and by assembling the Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetComparison {
    pub closed_form: f64,
    pub brute_force: f64,
}

impl DetComparison {
    /// `|closed - brute| / max(|brute|, |closed|)`; zero when both vanish.
    pub fn relative_difference(&self) -> f64 {
        let scale = self.brute_force.abs().max(self.closed_form.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.closed_form - self.brute_force).abs() / scale
        }
    }
}

/// `|H| = (Q1 − Q2)²·sin²β` for plate `a` normal `(1, 0)` and plate `b` at angle `beta`.
pub fn det_angle(p1: &Vector2<f64>, p2: &Vector2<f64>, p3: &Vector2<f64>, beta: f64, theta: f64) -> DetComparison {
    let cfg = Planar2DConfig::new(theta, beta, [*p1, *p2, *p3]);
    let closed_form = (q(p1, theta) - q(p2, theta)).powi(2) * beta.sin().powi(2);
    DetComparison { closed_form, brute_force: brute_force(&cfg.rows()) }
}

/// `|H| = ((p1x − p2x)·sinθ + (p1y − p2y)·cosθ)²` for perpendicular plates.
pub fn det_distance(p1: &Vector2<f64>, p2: &Vector2<f64>, p3: &Vector2<f64>, theta: f64) -> DetComparison {
    let cfg = Planar2DConfig::new(theta, std::f64::consts::FRAC_PI_2, [*p1, *p2, *p3]);
    let (s, c) = theta.sin_cos();
    let closed_form = ((p1.x - p2.x) * s + (p1.y - p2.y) * c).powi(2);
    DetComparison { closed_form, brute_force: brute_force(&cfg.rows()) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSweepRow {
    pub beta: f64,
    pub closed_form: f64,
    pub brute_force: f64,
}

/// `|H|` over `steps + 1` evenly spaced `β ∈ [0, π]`.
pub fn beta_sweep(points: [Vector2<f64>; 3], theta: f64, steps: usize) -> Vec<BetaSweepRow> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|i| {
            let beta = std::f64::consts::PI * i as f64 / steps as f64;
            let d = det_angle(&points[0], &points[1], &points[2], beta, theta);
            BetaSweepRow { beta, closed_form: d.closed_form, brute_force: d.brute_force }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSweepRow {
    /// Separation `p1 − p2` along the camera y axis.
    pub separation: f64,
    pub closed_form: f64,
    pub brute_force: f64,
}

/// `|H|` for perpendicular plates as `p1` moves away from `p2` along y.
pub fn distance_sweep(theta: f64, max_separation: f64, steps: usize) -> Vec<DistanceSweepRow> {
    let steps = steps.max(1);
    let p2 = Vector2::new(1.0, 0.0);
    let p3 = Vector2::new(0.0, 1.0);
    (0..=steps)
        .map(|i| {
            let separation = max_separation * i as f64 / steps as f64;
            let p1 = p2 + Vector2::new(0.0, separation);
            let d = det_distance(&p1, &p2, &p3, theta);
            DistanceSweepRow { separation, closed_form: d.closed_form, brute_force: d.brute_force }
        })
        .collect()
}

/// A plate in the plane: centre and normal direction (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatePose2D {
    pub position: Vector2<f64>,
    pub normal_angle: f64,
}

impl PlatePose2D {
    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(self.normal_angle.cos(), self.normal_angle.sin())
    }
}

/// Heuristic layout of `n` plates within `radius` of the sensor. Normal
/// angles are chosen greedily on a 1° grid over `[0°, 180°)` to maximize the
/// smallest pairwise `|sin Δ|` (ties keep the smaller angle); positions are
/// chosen greedily on a 1° grid of the circle to maximize the smallest
/// pairwise distance.
pub fn recommend_placement(n: usize, radius: f64) -> Result<Vec<PlatePose2D>, PlacementError> {
    if n < 2 {
        return Err(PlacementError::TooFewTargets(n));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(PlacementError::InvalidRadius(radius));
    }
    let grid: Vec<f64> = (0..180).map(|d| (d as f64).to_radians()).collect();
    let angles = greedy(n, &grid, |a, b| (a - b).sin().abs());
    let circle: Vec<f64> = (0..360).map(|d| (d as f64).to_radians()).collect();
    let azimuths = greedy(n, &circle, |a, b| 2.0 * ((a - b) / 2.0).sin().abs());
    Ok(angles
        .iter()
        .zip(&azimuths)
        .map(|(&normal_angle, &az)| PlatePose2D { position: Vector2::new(az.cos(), az.sin()) * radius, normal_angle })
        .collect())
}

/// Starts at `grid[0]` and repeatedly adds the grid value maximizing the
/// smallest `spread` to the values chosen so far.
fn greedy(n: usize, grid: &[f64], spread: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut chosen = vec![grid[0]];
    while chosen.len() < n {
        let mut best = (f64::NEG_INFINITY, grid[0]);
        for &g in grid {
            let score = chosen.iter().map(|&c| spread(g, c)).fold(f64::INFINITY, f64::min);
            if score > best.0 + 1e-12 {
                best = (score, g);
            }
        }
        chosen.push(best.1);
    }
    chosen
}

fn row(n: &Vector2<f64>, p: &Vector2<f64>, theta: f64) -> RowVector3<f64> {
    RowVector3::new(n.dot(&(rotation_2d_derivative(theta) * p)), n.x, n.y)
}

/// Determinant of `Σ rᵢᵀrᵢ`, assembled and expanded exactly from the f64 row
/// entries and rounded once at the end.
fn brute_force(rows: &[RowVector3<f64>]) -> f64 {
    let exact: Vec<[BigRational; 3]> =
        rows.iter().map(|r| [0, 1, 2].map(|c| BigRational::from_float(r[c]).expect("finite Jacobian entry"))).collect();
    let h = |i: usize, j: usize| -> BigRational { exact.iter().map(|r| &r[i] * &r[j]).sum() };
    let m: [[BigRational; 3]; 3] = [0, 1, 2].map(|i| [0, 1, 2].map(|j| h(i, j)));
    let minor = |a: usize, b: usize| &m[1][a] * &m[2][b] - &m[1][b] * &m[2][a];
    let det = &m[0][0] * minor(1, 2) - &m[0][1] * minor(0, 2) + &m[0][2] * minor(0, 1);
    det.to_f64().unwrap_or(f64::NAN)
}

fn check_unit(n: &Vector2<f64>) -> Result<(), PlacementError> {
    if (n.norm() - 1.0).abs() > 1e-9 {
        return Err(PlacementError::NonUnitNormal(n.norm()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_examples() {
        let n = Vector2::new(1.0, 0.0);
        assert_eq!(jacobian_2d(&n, &Vector2::zeros(), 0.0).unwrap(), RowVector3::new(0.0, 1.0, 0.0));
        assert_eq!(jacobian_2d(&n, &Vector2::new(0.0, 1.0), 0.0).unwrap(), RowVector3::new(-1.0, 1.0, 0.0));
        assert!(jacobian_2d(&Vector2::new(2.0, 0.0), &Vector2::zeros(), 0.0).is_err());
    }

    #[test]
    fn distance_examples() {
        let p = Vector2::new(0.3, 0.2);
        let p3 = Vector2::new(0.0, 1.0);
        assert_eq!(det_distance(&p, &p, &p3, 0.4).closed_form, 0.0);
        let d = det_distance(&Vector2::new(0.0, 1.0), &Vector2::zeros(), &p3, 0.0);
        assert_eq!(d.closed_form, 1.0);
        assert!((d.brute_force - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recommend_examples() {
        let two = recommend_placement(2, 3.0).unwrap();
        assert!(((two[1].normal_angle - two[0].normal_angle).abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(recommend_placement(1, 3.0).is_err());
        assert!(recommend_placement(3, 0.0).is_err());
    }
}
