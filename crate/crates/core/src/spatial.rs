//! Exact k-d tree over 3D points.
//!
//! Ties are broken by point index so that results are identical to a sorted
//! linear scan.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static k-d tree. Query results are `(squared distance, point index)` sorted ascending.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    bounds: Vec<(Vector3<f64>, Vector3<f64>)>,
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
            bounds: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> &Vector3<f64> {
        &self.points[idx]
    }

    fn bbox(&self, start: usize, end: usize) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            let p = &self.points[i];
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        let (lo, hi) = self.bbox(start, end);
        self.bounds.push((lo, hi));
        let extent = hi - lo;
        if end - start <= LEAF_SIZE || extent.max() <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        self.nodes.push(Node::Leaf { start, end });
        let axis = extent.imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn box_dist2(&self, node: usize, q: &Vector3<f64>) -> f64 {
        let (lo, hi) = &self.bounds[node];
        let mut d = 0.0;
        for a in 0..3 {
            let v = if q[a] < lo[a] {
                lo[a] - q[a]
            } else if q[a] > hi[a] {
                q[a] - hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// The `k` nearest points to `q`.
    pub fn nearest(&self, q: &Vector3<f64>, k: usize) -> Vec<(f64, usize)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k == 0 || self.points.is_empty() {
            return best;
        }
        self.knn(0, q, k, &mut best);
        best
    }

    fn knn(&self, node: usize, q: &Vector3<f64>, k: usize, best: &mut Vec<(f64, usize)>) {
        if best.len() == k && self.box_dist2(node, q) > best[k - 1].0 {
            return;
        }
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d = (self.points[i] - q).norm_squared();
                    let cand = (d, i);
                    if best.len() < k || less(cand, best[k - 1]) {
                        let pos = best.partition_point(|b| less(*b, cand));
                        best.insert(pos, cand);
                        best.truncate(k);
                    }
                }
            }
            Node::Split { axis, value, left, right, .. } => {
                let (first, second) = if q[*axis] < *value { (*left, *right) } else { (*right, *left) };
                self.knn(first, q, k, best);
                self.knn(second, q, k, best);
            }
        }
    }

    /// All points within `radius` of `q`.
    pub fn within(&self, q: &Vector3<f64>, radius: f64) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        if !self.points.is_empty() {
            self.radius_search(0, q, radius * radius, &mut out);
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    fn radius_search(&self, node: usize, q: &Vector3<f64>, r2: f64, out: &mut Vec<(f64, usize)>) {
        if self.box_dist2(node, q) > r2 {
            return;
        }
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d = (self.points[i] - q).norm_squared();
                    if d <= r2 {
                        out.push((d, i));
                    }
                }
            }
            Node::Split { left, right, .. } => {
                self.radius_search(*left, q, r2, out);
                self.radius_search(*right, q, r2, out);
            }
        }
    }
}

fn less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Reference linear scan with the same ordering as [`KdTree::nearest`].
pub fn linear_nearest(points: &[Vector3<f64>], q: &Vector3<f64>, k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> =
        points.iter().enumerate().map(|(i, p)| ((p - q).norm_squared(), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}
