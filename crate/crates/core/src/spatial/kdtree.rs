//! Static balanced 2D KD-tree.
//!
//! Queries are exact: radius queries use the closed ball `d <= r`, and k-NN
//! results are ordered by `(distance, index)`, so equidistant points are
//! resolved toward the lower index. All comparisons use squared distances
//! computed as `dx*dx + dy*dy`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

pub const LEAF_SIZE: usize = 16;

#[inline]
pub fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[derive(Clone, Debug)]
struct Node {
    // bounding box of the points below this node
    lo: [f64; 2],
    hi: [f64; 2],
    kind: NodeKind,
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Split { left: usize, right: usize },
}

impl Node {
    fn min_dist2(&self, p: [f64; 2]) -> f64 {
        let mut d = 0.0;
        for a in 0..2 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Clone, Debug)]
pub struct KdTree2D {
    points: Vec<[f64; 2]>,
    // leaf-ordered point indices
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree2D {
    pub fn build(points: &[[f64; 2]]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &i in &self.order[start..end] {
            let p = self.points[i as usize];
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf { start, end },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = usize::from(hi[1] - lo[1] > hi[0] - lo[0]);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].kind = NodeKind::Split { left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        self.points[i]
    }

    /// Visits every point with `dist2 <= r2`.
    fn visit_within(&self, p: [f64; 2], r2: f64, mut f: impl FnMut(usize, f64)) {
        if self.nodes.is_empty() || r2.is_nan() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.min_dist2(p) > r2 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d2 = dist2(p, self.points[i as usize]);
                        if d2 <= r2 {
                            f(i as usize, d2);
                        }
                    }
                }
                NodeKind::Split { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }

    /// Indices within distance `r` (closed ball), ascending.
    pub fn radius_query(&self, p: [f64; 2], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_within(p, r * r, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// `(index, squared distance)` pairs within `r`, ascending by index.
    pub fn radius_query_dist2(&self, p: [f64; 2], r: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.visit_within(p, r * r, |i, d2| out.push((i, d2)));
        out.sort_unstable_by_key(|&(i, _)| i);
        out
    }

    /// Number of points within `r`.
    pub fn radius_count(&self, p: [f64; 2], r: f64) -> usize {
        let mut n = 0;
        self.visit_within(p, r * r, |_, _| n += 1);
        n
    }

    /// The `k` nearest points ordered by `(distance, index)`.
    pub fn knn_query(&self, p: [f64; 2], k: usize) -> Result<Vec<usize>> {
        self.knn_excluding(p, k, None)
            .map(|v| v.into_iter().map(|(i, _)| i).collect())
    }

    /// Like [`knn_query`](Self::knn_query) but skipping index `exclude`,
    /// returning `(index, squared distance)`.
    pub fn knn_excluding(
        &self,
        p: [f64; 2],
        k: usize,
        exclude: Option<usize>,
    ) -> Result<Vec<(usize, f64)>> {
        let available = self.len() - usize::from(exclude.is_some_and(|e| e < self.len()));
        if k > available {
            return Err(Error::KTooLarge { k, n: available });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let bound = node.min_dist2(p);
            // Equal distance can still hold a lower index, so prune strictly.
            if heap.len() == k && bound > heap.peek().expect("full heap").d2 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        if Some(i as usize) == exclude {
                            continue;
                        }
                        let c = Candidate {
                            d2: dist2(p, self.points[i as usize]),
                            index: i,
                        };
                        if heap.len() < k {
                            heap.push(c);
                        } else if c < *heap.peek().expect("full heap") {
                            heap.pop();
                            heap.push(c);
                        }
                    }
                }
                NodeKind::Split { left, right } => {
                    // Descend into the nearer child first.
                    let (near, far) = if self.nodes[left].min_dist2(p) <= self.nodes[right].min_dist2(p) {
                        (left, right)
                    } else {
                        (right, left)
                    };
                    stack.push(far);
                    stack.push(near);
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| (c.index as usize, c.d2))
            .collect())
    }

    /// Nearest point other than `exclude`: `(index, distance)`.
    pub fn nearest_excluding(&self, p: [f64; 2], exclude: Option<usize>) -> Option<(usize, f64)> {
        self.knn_excluding(p, 1, exclude)
            .ok()
            .and_then(|v| v.first().map(|&(i, d2)| (i, d2.sqrt())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_radius(points: &[[f64; 2]], p: [f64; 2], r: f64) -> Vec<usize> {
        (0..points.len()).filter(|&i| dist2(p, points[i]) <= r * r).collect()
    }

    fn brute_knn(points: &[[f64; 2]], p: [f64; 2], k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, &q)| (dist2(p, q), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn hand_example() {
        let pts = [[0.0, 0.0], [3.0, 0.0], [10.0, 0.0]];
        let t = KdTree2D::build(&pts);
        assert_eq!(t.radius_query([0.0, 0.0], 3.0), vec![0, 1]);
        assert_eq!(t.radius_query([10.0, 0.0], 0.0), vec![2]);
        assert_eq!(t.knn_query([4.0, 0.0], 2).unwrap(), vec![1, 0]);
        assert!(matches!(t.knn_query([0.0, 0.0], 4), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn duplicate_points_tie_by_index() {
        let pts: Vec<[f64; 2]> = (0..40).map(|i| [f64::from(i % 3), 0.0]).collect();
        let t = KdTree2D::build(&pts);
        assert_eq!(t.knn_query([0.0, 0.0], 40).unwrap(), brute_knn(&pts, [0.0, 0.0], 40));
        assert_eq!(t.knn_excluding([0.0, 0.0], 2, Some(0)).unwrap()[0].0, 3);
    }

    #[test]
    fn empty_tree() {
        let t = KdTree2D::build(&[]);
        assert!(t.radius_query([0.0, 0.0], 1.0).is_empty());
        assert!(t.nearest_excluding([0.0, 0.0], None).is_none());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            raw in prop::collection::vec((0i32..50, 0i32..50), 1..300),
            qx in 0i32..50, qy in 0i32..50, r in 0.0f64..20.0, k in 1usize..40,
        ) {
            // integer grid forces many exact ties and duplicates
            let pts: Vec<[f64; 2]> = raw.iter().map(|&(x, y)| [f64::from(x), f64::from(y)]).collect();
            let t = KdTree2D::build(&pts);
            let q = [f64::from(qx), f64::from(qy)];
            prop_assert_eq!(t.radius_query(q, r), brute_radius(&pts, q, r));
            let k = k.min(pts.len());
            prop_assert_eq!(t.knn_query(q, k).unwrap(), brute_knn(&pts, q, k));
        }
    }
}
