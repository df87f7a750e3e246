use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{normal3, sub_rng, Scene};

/// Spinning multi-ring LiDAR at the laser-frame origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarModel {
    pub rings: usize,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
}

impl Default for LidarModel {
    /// Sixteen rings over ±15°, 0.2° azimuth steps.
    fn default() -> Self {
        LidarModel { rings: 16, min_elevation_deg: -15.0, max_elevation_deg: 15.0, azimuth_step_deg: 0.2, max_range: 12.0 }
    }
}

impl LidarModel {
    pub fn elevations(&self) -> Vec<f64> {
        if self.rings == 1 {
            return vec![0.5 * (self.min_elevation_deg + self.max_elevation_deg).to_radians()];
        }
        let step = (self.max_elevation_deg - self.min_elevation_deg) / (self.rings - 1) as f64;
        (0..self.rings).map(|i| (self.min_elevation_deg + step * i as f64).to_radians()).collect()
    }

    pub fn directions(&self) -> Vec<Vector3<f64>> {
        let n_az = (360.0 / self.azimuth_step_deg).round() as usize;
        let elev = self.elevations();
        let mut dirs = Vec::with_capacity(n_az * elev.len());
        for e in &elev {
            for a in 0..n_az {
                let az = (a as f64 * self.azimuth_step_deg).to_radians();
                dirs.push(Vector3::new(e.cos() * az.cos(), e.cos() * az.sin(), e.sin()));
            }
        }
        dirs
    }
}

/// Laser points with optional normals and per-point source labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    /// Surface normals; simulated clouds carry the true ones.
    pub normals: Vec<Vector3<f64>>,
    /// Source target id, `-1` for background. Ground truth for test oracles only.
    pub labels: Vec<i64>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        let n = points.len();
        PointCloud { points, normals: vec![Vector3::zeros(); n], labels: vec![-1; n] }
    }
}

/// Ray-casts every target from the laser origin and adds isotropic Gaussian noise.
pub fn simulate_lidar_scan(scene: &Scene, model: &LidarModel, sigma: f64, seed: u64) -> PointCloud {
    let mut rng = sub_rng(seed, 1);
    let mut cloud = PointCloud::default();
    let origin = Vector3::zeros();
    for dir in model.directions() {
        if let Some((idx, hit)) = scene.cast(&origin, &dir) {
            if hit.distance <= model.max_range {
                let p = dir * hit.distance;
                let noisy = if sigma > 0.0 { p + normal3(&mut rng) * sigma } else { p };
                cloud.points.push(noisy);
                cloud.normals.push(hit.normal);
                cloud.labels.push(scene.targets[idx].id as i64);
            }
        }
    }
    cloud
}

/// A target corner extracted from the LiDAR scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserCorner {
    pub position: Vector3<f64>,
    /// Ground truth source target and corner index, for oracles.
    pub target: usize,
    pub corner: usize,
}

/// Corners of point-type targets (polygons, boxes) seen by the LiDAR: the
/// corner lies on a face turned toward the sensor and is not occluded.
pub fn simulate_laser_corners(scene: &Scene, sigma: f64, seed: u64) -> Vec<LaserCorner> {
    let mut rng = sub_rng(seed, 2);
    let origin = Vector3::zeros();
    let mut out = Vec::new();
    for (ti, t) in scene.targets.iter().enumerate() {
        if !t.kind.uses_corners() {
            continue;
        }
        for (ci, p) in t.corners_laser().into_iter().enumerate() {
            if !t.corner_faces(ci, &origin) || scene.occluded(&origin, &p, Some(ti)) {
                continue;
            }
            let noise = normal3(&mut rng) * sigma;
            out.push(LaserCorner { position: p + noise, target: t.id, corner: ci });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_sim::{facing_pose, generate_scene, ChessboardGrid, SceneConfig, TargetKind, TargetModel};

    fn wall_scene(targets: Vec<TargetModel>) -> Scene {
        let mut s = generate_scene(&SceneConfig { target_count: 1, ..Default::default() }).unwrap();
        s.targets = targets;
        s
    }

    fn board(id: usize, center: Vector3<f64>, grid_scale: f64) -> TargetModel {
        let pose = facing_pose(TargetKind::Chessboard, center, &-center.normalize(), 0.0);
        TargetModel::chessboard(id, pose, ChessboardGrid { rows: 5, cols: 7, square: 0.075 * grid_scale }, 0.05)
    }

    #[test]
    fn noiseless_points_lie_on_plane() {
        let scene = wall_scene(vec![board(0, Vector3::new(2.0, 0.0, 0.0), 3.0)]);
        let cloud = simulate_lidar_scan(&scene, &LidarModel::default(), 0.0, 1);
        assert!(cloud.len() > 500);
        let (n, d) = scene.targets[0].plane().unwrap();
        for p in &cloud.points {
            assert!((n.dot(p) + d).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_statistics() {
        let scene = wall_scene(vec![board(0, Vector3::new(2.0, 0.0, 0.0), 3.0)]);
        let cloud = simulate_lidar_scan(&scene, &LidarModel::default(), 0.01, 5);
        let (n, d) = scene.targets[0].plane().unwrap();
        let dist: Vec<f64> = cloud.points.iter().map(|p| n.dot(p) + d).collect();
        assert!(dist.len() >= 500);
        let mean = dist.iter().sum::<f64>() / dist.len() as f64;
        let var = dist.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (dist.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((0.008..=0.012).contains(&sd), "sd {sd}");
    }

    #[test]
    fn occluded_target_gets_no_points() {
        let front = board(0, Vector3::new(2.0, 0.0, 0.0), 3.0);
        let back = board(1, Vector3::new(4.0, 0.0, 0.0), 1.0);
        let scene = wall_scene(vec![front, back]);
        let cloud = simulate_lidar_scan(&scene, &LidarModel::default(), 0.0, 1);
        assert!(cloud.labels.iter().all(|&l| l != 1));
        assert!(cloud.labels.contains(&0));
    }

    #[test]
    fn box_corners_visible_to_laser() {
        let pose = facing_pose(TargetKind::Box, Vector3::new(2.5, 0.0, 0.0), &-Vector3::x(), 0.1);
        let scene = wall_scene(vec![TargetModel::cuboid(0, pose, Vector3::new(0.5, 0.4, 0.4))]);
        let corners = simulate_laser_corners(&scene, 0.0, 3);
        // the corner facing away is hidden
        assert_eq!(corners.len(), 7);
    }
}
