//! Exact k-nearest-neighbor search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;
/// Above this ambient dimension the tree gives up and scans.
pub const BRUTE_FORCE_DIM: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Static kd-tree over row-major points of dimension `dim`.
///
/// Falls back to a linear scan when `dim > BRUTE_FORCE_DIM`. Results are
/// ordered by `(squared distance, index)`, so ties go to the smaller index.
pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    root: Option<Node>,
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len() % dim == 0);
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        let root = if n == 0 || dim > BRUTE_FORCE_DIM {
            None
        } else {
            Some(Self::build(points, dim, &mut order, 0))
        };
        KdTree { points, dim, order, root }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(points: &[f64], dim: usize, idx: &mut [usize], offset: usize) -> Node {
        let n = idx.len();
        if n <= LEAF_SIZE {
            return Node::Leaf { start: offset, end: offset + n };
        }
        let mut best = (0, -1.0);
        for k in 0..dim {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = points[i * dim + k];
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best.1 {
                best = (k, hi - lo);
            }
        }
        let axis = best.0;
        let mid = n / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points[a * dim + axis].total_cmp(&points[b * dim + axis])
        });
        let value = points[idx[mid] * dim + axis];
        let (l, r) = idx.split_at_mut(mid);
        Node::Split {
            dim: axis,
            value,
            left: Box::new(Self::build(points, dim, l, offset)),
            right: Box::new(Self::build(points, dim, r, offset + mid)),
        }
    }

    /// The `k` nearest points to `q`, optionally skipping one index.
    ///
    /// Returns `(index, distance)` pairs sorted by ascending distance.
    pub fn nearest(&self, q: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            match &self.root {
                Some(root) => self.search(root, q, k, exclude, &mut heap),
                None => {
                    for i in 0..self.len() {
                        self.offer(i, q, k, exclude, &mut heap);
                    }
                }
            }
        }
        let mut out = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.dist2.sqrt())).collect()
    }

    #[inline]
    fn offer(&self, i: usize, q: &[f64], k: usize, exclude: Option<usize>, heap: &mut BinaryHeap<Candidate>) {
        if Some(i) == exclude {
            return;
        }
        let c = Candidate { dist2: dist2(self.point(i), q), index: i };
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().expect("heap is full") {
            heap.pop();
            heap.push(c);
        }
    }

    fn search(&self, node: &Node, q: &[f64], k: usize, exclude: Option<usize>, heap: &mut BinaryHeap<Candidate>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    self.offer(i, q, k, exclude, heap);
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[*dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, heap);
                // equality must still be explored to honor the index tie-break
                if heap.len() < k || diff * diff <= heap.peek().map_or(f64::INFINITY, |c| c.dist2) {
                    self.search(far, q, k, exclude, heap);
                }
            }
        }
    }
}

/// Reference O(N) scan with the same ordering as [`KdTree::nearest`].
pub fn brute_force_nearest(points: &[f64], dim: usize, q: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
    let n = points.len() / dim;
    let mut all: Vec<Candidate> = (0..n)
        .filter(|&i| Some(i) != exclude)
        .map(|i| Candidate { dist2: dist2(&points[i * dim..(i + 1) * dim], q), index: i })
        .collect();
    all.sort();
    all.truncate(k);
    all.into_iter().map(|c| (c.index, c.dist2.sqrt())).collect()
}
