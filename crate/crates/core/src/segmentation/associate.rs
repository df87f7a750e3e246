use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PlaneSegment;
use crate::spatial::KdTree;

/// Number of nearest segment points that vote for a landmark's segment.
pub const VOTERS: usize = 5;

/// A landmark matched to three laser points of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub landmark: usize,
    pub segment: usize,
    /// Laser point indices, nearest first.
    pub neighbors: [usize; 3],
    pub points: [Vector3<f64>; 3],
    pub normals: [Vector3<f64>; 3],
    /// Sum of absolute point-to-plane distances, meters.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AssociationOutcome {
    Matched(Association),
    /// The nearest point of the voted segment is farther than the cutoff.
    NoAssociation { landmark: usize, distance: f64 },
}

/// Spatial index over the members of a set of plane segments.
pub struct SegmentIndex<'a> {
    points: &'a [Vector3<f64>],
    normals: &'a [Vector3<f64>],
    all: KdTree,
    owner: Vec<(usize, usize)>,
    per_segment: Vec<(KdTree, Vec<usize>)>,
}

impl<'a> SegmentIndex<'a> {
    pub fn new(points: &'a [Vector3<f64>], normals: &'a [Vector3<f64>], segments: &[PlaneSegment]) -> Self {
        let mut owner = Vec::new();
        let mut flat = Vec::new();
        let mut per_segment = Vec::with_capacity(segments.len());
        for (s, seg) in segments.iter().enumerate() {
            let local: Vec<Vector3<f64>> = seg.members.iter().map(|&i| points[i]).collect();
            for &i in &seg.members {
                owner.push((s, i));
                flat.push(points[i]);
            }
            per_segment.push((KdTree::new(&local), seg.members.clone()));
        }
        SegmentIndex { points, normals, all: KdTree::new(&flat), owner, per_segment }
    }

    pub fn segment_count(&self) -> usize {
        self.per_segment.len()
    }

    /// Segment holding the majority of the nearest voters (ties go to the nearer voter).
    pub fn vote(&self, q: &Vector3<f64>) -> Option<usize> {
        let voters = self.all.nearest(q, VOTERS);
        let mut counts: Vec<(usize, usize, usize)> = Vec::new();
        for (rank, &(_, fi)) in voters.iter().enumerate() {
            let s = self.owner[fi].0;
            match counts.iter_mut().find(|c| c.0 == s) {
                Some(c) => c.1 += 1,
                None => counts.push((s, 1, rank)),
            }
        }
        counts.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2))).map(|c| c.0)
    }

    /// The three nearest points of `segment` to `q`, as `(squared distance, cloud index)`.
    pub fn nearest_in(&self, segment: usize, q: &Vector3<f64>) -> Vec<(f64, usize)> {
        let (tree, members) = &self.per_segment[segment];
        tree.nearest(q, 3).into_iter().map(|(d, li)| (d, members[li])).collect()
    }

    pub fn associate_one(&self, landmark: usize, q: &Vector3<f64>, cutoff: f64) -> AssociationOutcome {
        let Some(segment) = self.vote(q) else {
            return AssociationOutcome::NoAssociation { landmark, distance: f64::INFINITY };
        };
        let nn = self.nearest_in(segment, q);
        let nearest = nn.first().map(|n| n.0.sqrt()).unwrap_or(f64::INFINITY);
        if nn.len() < 3 || nearest > cutoff {
            return AssociationOutcome::NoAssociation { landmark, distance: nearest };
        }
        let neighbors = [nn[0].1, nn[1].1, nn[2].1];
        let mut assoc = Association {
            landmark,
            segment,
            neighbors,
            points: neighbors.map(|i| self.points[i]),
            normals: neighbors.map(|i| self.normals[i]),
            score: 0.0,
        };
        assoc.score = score_association(&assoc, q);
        AssociationOutcome::Matched(assoc)
    }
}

/// Matches every landmark (laser frame) to three nearest points of its voted segment.
pub fn associate(
    landmarks: &[(usize, Vector3<f64>)],
    index: &SegmentIndex<'_>,
    cutoff: f64,
) -> Vec<AssociationOutcome> {
    landmarks.par_iter().map(|(id, p)| index.associate_one(*id, p, cutoff)).collect()
}

/// Sum of absolute distances from `p` to the three neighbor planes.
pub fn score_association(assoc: &Association, p: &Vector3<f64>) -> f64 {
    (0..3).map(|i| assoc.normals[i].dot(&(p - assoc.points[i])).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::planes::fit_plane;
    use crate::spatial::linear_nearest;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_cloud() -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>, Vec<PlaneSegment>) {
        let mut pts = Vec::new();
        for i in 0..30 {
            for j in 0..20 {
                pts.push(Vector3::new(2.0, i as f64 * 0.02, j as f64 * 0.02));
            }
        }
        let normals = vec![-Vector3::x(); pts.len()];
        let seg = fit_plane(&pts, &(0..pts.len()).collect::<Vec<_>>());
        (pts, normals, vec![seg])
    }

    #[test]
    fn self_match_is_first_neighbor() {
        let (pts, normals, segs) = plane_cloud();
        let index = SegmentIndex::new(&pts, &normals, &segs);
        match index.associate_one(0, &pts[37], 0.5) {
            AssociationOutcome::Matched(a) => {
                assert_eq!(a.neighbors[0], 37);
                assert_eq!(a.score, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn matches_linear_scan() {
        let (pts, normals, segs) = plane_cloud();
        let index = SegmentIndex::new(&pts, &normals, &segs);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let q = Vector3::new(rng.random_range(1.8..2.2), rng.random_range(-0.1..0.7), rng.random_range(-0.1..0.5));
            let AssociationOutcome::Matched(a) = index.associate_one(0, &q, 1.0) else { panic!() };
            let lin: Vec<usize> = linear_nearest(&pts, &q, 3).into_iter().map(|(_, i)| i).collect();
            assert_eq!(a.neighbors.to_vec(), lin);
        }
    }

    #[test]
    fn far_landmark_rejected() {
        let (pts, normals, segs) = plane_cloud();
        let index = SegmentIndex::new(&pts, &normals, &segs);
        assert!(matches!(
            index.associate_one(3, &Vector3::new(4.0, 0.2, 0.2), 0.5),
            AssociationOutcome::NoAssociation { landmark: 3, .. }
        ));
    }

    #[test]
    fn score_examples() {
        let (pts, normals, segs) = plane_cloud();
        let index = SegmentIndex::new(&pts, &normals, &segs);
        let q = pts[50];
        let AssociationOutcome::Matched(a) = index.associate_one(0, &q, 0.5) else { panic!() };
        assert_eq!(score_association(&a, &q), 0.0);
        let off = q + normals[50] * 0.01;
        assert!((score_association(&a, &off) - 0.03).abs() < 1e-12);
    }
}
