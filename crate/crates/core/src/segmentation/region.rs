use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::spatial::KdTree;

/// Parameters of [`region_grow`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    /// Maximum number of seeds tried; `0` means "until every point is assigned".
    pub seed_count: usize,
    /// Neighbor radius, meters.
    pub radius: f64,
    /// Maximum angle between a member's normal and its seed's normal, degrees.
    pub angle_deg: f64,
    /// Sets smaller than this are discarded.
    pub min_points: usize,
    pub seed: u64,
}

/// Greedy region growing from random seeds over the radius graph.
///
/// Points flagged in `skip` never seed or join a region. Returned sets are
/// disjoint, sorted by index, and listed in seed order.
pub fn region_grow(
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    skip: &[bool],
    params: &GrowParams,
) -> Vec<Vec<usize>> {
    let tree = KdTree::new(points);
    let mut order: Vec<usize> = (0..points.len()).filter(|&i| !skip.get(i).copied().unwrap_or(false)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    order.shuffle(&mut rng);
    let cos_thr = params.angle_deg.to_radians().cos();
    let mut assigned = vec![false; points.len()];
    for (i, s) in skip.iter().enumerate() {
        if *s && i < assigned.len() {
            assigned[i] = true;
        }
    }
    let mut regions = Vec::new();
    let mut seeds_used = 0;
    for &seed in &order {
        if assigned[seed] {
            continue;
        }
        if params.seed_count > 0 && seeds_used >= params.seed_count {
            break;
        }
        seeds_used += 1;
        let seed_normal = normals[seed];
        let mut region = vec![seed];
        assigned[seed] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(cur) = queue.pop_front() {
            for (_, nb) in tree.within(&points[cur], params.radius) {
                if !assigned[nb] && normals[nb].dot(&seed_normal) >= cos_thr {
                    assigned[nb] = true;
                    region.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        if region.len() >= params.min_points.max(1) {
            region.sort_unstable();
            regions.push(region);
        }
    }
    regions
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn params() -> GrowParams {
        GrowParams { seed_count: 0, radius: 0.2, angle_deg: 10.0, min_points: 1, seed: 3 }
    }

    fn grid(z: f64) -> Vec<Vector3<f64>> {
        (0..400).map(|i| Vector3::new((i % 20) as f64 * 0.05, (i / 20) as f64 * 0.05, z)).collect()
    }

    #[test]
    fn parallel_planes_stay_separate() {
        let mut pts = grid(1.0);
        pts.extend(grid(3.0));
        let normals = vec![-Vector3::z(); pts.len()];
        let regions = region_grow(&pts, &normals, &vec![false; pts.len()], &params());
        assert_eq!(regions.len(), 2);
        for r in &regions {
            let z0 = pts[r[0]].z;
            assert!(r.iter().all(|&i| pts[i].z == z0));
        }
    }

    #[test]
    fn single_plane_one_region() {
        let pts = grid(1.0);
        let normals = vec![-Vector3::z(); pts.len()];
        let regions = region_grow(&pts, &normals, &vec![false; pts.len()], &params());
        assert_eq!(regions.len(), 1);
        assert!(regions[0].len() as f64 >= 0.99 * pts.len() as f64);
    }

    #[test]
    fn noise_ball_has_no_large_region() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vector3<f64>> = (0..2000)
                .map(|_| loop {
                    let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    if v.norm() <= 1.0 {
                        break v + Vector3::new(3.0, 0.0, 0.0);
                    }
                })
                .collect();
            let normals = crate::segmentation::estimate_normals(&pts, 10).unwrap();
            let n: Vec<Vector3<f64>> = normals.iter().map(|e| e.normal).collect();
            let p = GrowParams { angle_deg: 5.0, seed, ..params() };
            let regions = region_grow(&pts, &n, &vec![false; pts.len()], &p);
            assert!(regions.iter().all(|r| r.len() * 20 <= pts.len()));
        }
    }
}
