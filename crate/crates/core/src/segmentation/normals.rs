use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use super::SegmentationError;
use crate::spatial::KdTree;

/// Relative eigenvalue gap below which a neighborhood has no unique normal.
pub const DEGENERATE_GAP: f64 = 1e-9;

/// Normal estimate for one laser point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEstimate {
    /// Unit normal oriented toward the sensor origin.
    pub normal: Vector3<f64>,
    /// The two smallest covariance eigenvalues coincide, so the normal is unreliable.
    pub degenerate: bool,
}

/// Principal axes of a point set: centroid, eigenvalues ascending, matching eigenvectors.
pub fn principal_axes(points: &[Vector3<f64>]) -> (Vector3<f64>, [f64; 3], [Vector3<f64>; 3]) {
    let n = points.len().max(1) as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.map(|i| eig.eigenvalues[i].max(0.0));
    let vecs = idx.map(|i| eig.eigenvectors.column(i).into_owned().normalize());
    (centroid, vals, vecs)
}

pub fn is_degenerate(eigenvalues: &[f64; 3]) -> bool {
    eigenvalues[2] <= 0.0 || eigenvalues[1] - eigenvalues[0] <= DEGENERATE_GAP * eigenvalues[2]
}

fn orient(n: Vector3<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    if n.dot(p) > 0.0 {
        -n
    } else {
        n
    }
}

/// Smallest-eigenvector normal of each point's `k`-neighborhood (the point included).
pub fn estimate_normals(points: &[Vector3<f64>], k: usize) -> Result<Vec<NormalEstimate>, SegmentationError> {
    if k < 3 {
        return Err(SegmentationError::InvalidParameter(format!("normal neighbor count must be at least 3, got {k}")));
    }
    if points.len() < k + 1 {
        return Err(SegmentationError::TooFewPoints { have: points.len(), need: k + 1 });
    }
    let tree = KdTree::new(points);
    Ok(points
        .par_iter()
        .map(|p| {
            let nbrs: Vec<Vector3<f64>> = tree.nearest(p, k).iter().map(|&(_, i)| points[i]).collect();
            neighborhood_normal(&nbrs, p)
        })
        .collect())
}

fn neighborhood_normal(nbrs: &[Vector3<f64>], p: &Vector3<f64>) -> NormalEstimate {
    let (_, vals, vecs) = principal_axes(nbrs);
    NormalEstimate { normal: orient(vecs[0], p), degenerate: is_degenerate(&vals) }
}

/// Re-estimates normals of segment members using neighbors from the same segment only.
pub fn refine_normals(
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    segments: &[Vec<usize>],
    k: usize,
) -> Vec<Vector3<f64>> {
    let mut out = normals.to_vec();
    for members in segments {
        if members.len() < 3 {
            continue;
        }
        let local: Vec<Vector3<f64>> = members.iter().map(|&i| points[i]).collect();
        let tree = KdTree::new(&local);
        let kk = k.min(local.len());
        let refined: Vec<(usize, NormalEstimate)> = members
            .par_iter()
            .enumerate()
            .map(|(li, &gi)| {
                let nbrs: Vec<Vector3<f64>> = tree.nearest(&local[li], kk).iter().map(|&(_, j)| local[j]).collect();
                (gi, neighborhood_normal(&nbrs, &points[gi]))
            })
            .collect();
        for (gi, est) in refined {
            if !est.degenerate {
                out[gi] = est.normal;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_plane_normals_face_origin() {
        let pts: Vec<Vector3<f64>> = (0..400).map(|i| Vector3::new((i % 20) as f64 * 0.05, (i / 20) as f64 * 0.05, 1.0)).collect();
        let est = estimate_normals(&pts, 8).unwrap();
        for e in est {
            assert!(!e.degenerate);
            assert!((e.normal - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn noisy_plane_mean_error_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = Normal::new(0.0, 0.005).unwrap();
        let pts: Vec<Vector3<f64>> = (0..2000)
            .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 2.0 + noise.sample(&mut rng)))
            .collect();
        let est = estimate_normals(&pts, 30).unwrap();
        let mean_err = est.iter().map(|e| e.normal.dot(&-Vector3::z()).clamp(-1.0, 1.0).acos()).sum::<f64>() / est.len() as f64;
        assert!(mean_err.to_degrees() < 5.0, "{}", mean_err.to_degrees());
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<Vector3<f64>> = (0..4).map(|i| Vector3::new(i as f64, 1.0, 2.0)).collect();
        let est = estimate_normals(&pts, 3).unwrap();
        assert!(est.iter().all(|e| e.degenerate));
    }

    #[test]
    fn parameter_checks() {
        let pts = vec![Vector3::zeros(); 5];
        assert!(matches!(estimate_normals(&pts, 2), Err(SegmentationError::InvalidParameter(_))));
        assert!(matches!(estimate_normals(&pts, 8), Err(SegmentationError::TooFewPoints { .. })));
    }
}
