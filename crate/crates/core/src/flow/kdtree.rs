//! Static k-d tree for exact k-nearest-neighbour queries in low to moderate
//! dimension. Results are ordered by `(squared distance, point index)`, so
//! ties resolve the same way on every run.

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f32>,
    order: Vec<u32>,
    split: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f32,
}

impl Neighbor {
    #[inline]
    fn before(&self, other: &Neighbor) -> bool {
        self.dist_sq < other.dist_sq || (self.dist_sq == other.dist_sq && self.index < other.index)
    }
}

impl KdTree {
    /// Builds a tree over `points.len() / dim` points stored contiguously.
    ///
    /// # Panics
    /// If `dim` is zero, larger than 255, or does not divide `points.len()`.
    pub fn new(dim: usize, points: Vec<f32>) -> Self {
        assert!(
            dim > 0 && dim <= u8::MAX as usize,
            "unsupported dimension {dim}"
        );
        assert_eq!(
            points.len() % dim,
            0,
            "point buffer is not a multiple of dim"
        );
        let n = points.len() / dim;
        let mut tree = Self {
            dim,
            points,
            order: (0..n as u32).collect(),
            split: vec![0; n],
        };
        tree.build(0, n);
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    #[inline]
    pub fn point(&self, index: usize) -> &[f32] {
        &self.points[index * self.dim..(index + 1) * self.dim]
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let dim = self.widest_dim(lo, hi);
        let mid = lo + (hi - lo) / 2;
        let (d, pts) = (self.dim, &self.points);
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            let va = pts[a as usize * d + dim];
            let vb = pts[b as usize * d + dim];
            va.total_cmp(&vb).then(a.cmp(&b))
        });
        self.split[mid] = dim as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    fn widest_dim(&self, lo: usize, hi: usize) -> usize {
        let mut best = (0, f32::NEG_INFINITY);
        for k in 0..self.dim {
            let (mut mn, mut mx) = (f32::INFINITY, f32::NEG_INFINITY);
            for &i in &self.order[lo..hi] {
                let v = self.points[i as usize * self.dim + k];
                mn = mn.min(v);
                mx = mx.max(v);
            }
            if mx - mn > best.1 {
                best = (k, mx - mn);
            }
        }
        best.0
    }

    /// The `k` nearest points to `query`, closest first.
    pub fn nearest(&self, query: &[f32], k: usize) -> Vec<Neighbor> {
        assert_eq!(query.len(), self.dim);
        let mut heap = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(query, k, 0, self.order.len(), &mut heap);
        }
        heap
    }

    fn offer(&self, query: &[f32], index: usize, k: usize, heap: &mut Vec<Neighbor>) {
        let dist_sq = squared_distance(query, self.point(index));
        let cand = Neighbor { index, dist_sq };
        if heap.len() == k && !cand.before(&heap[k - 1]) {
            return;
        }
        let pos = heap.partition_point(|n| n.before(&cand));
        heap.insert(pos, cand);
        heap.truncate(k);
    }

    fn search(&self, query: &[f32], k: usize, lo: usize, hi: usize, heap: &mut Vec<Neighbor>) {
        if hi - lo <= LEAF_SIZE {
            for i in lo..hi {
                self.offer(query, self.order[i] as usize, k, heap);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let pivot = self.order[mid] as usize;
        self.offer(query, pivot, k, heap);
        let dim = self.split[mid] as usize;
        let diff = query[dim] - self.point(pivot)[dim];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(query, k, near.0, near.1, heap);
        if heap.len() < k || diff * diff <= heap[k - 1].dist_sq {
            self.search(query, k, far.0, far.1, heap);
        }
    }
}

#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[f32], dim: usize, q: &[f32], k: usize) -> Vec<(usize, f32)> {
        let mut all: Vec<(usize, f32)> = points
            .chunks_exact(dim)
            .enumerate()
            .map(|(i, p)| (i, squared_distance(q, p)))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn two_points_k_one() {
        let t = KdTree::new(2, vec![0.0, 0.0, 1.0, 0.0]);
        let n = t.nearest(&[0.9, 0.0], 1);
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].index, 1);
        assert_eq!(t.nearest(&[0.0, 0.0], 5).len(), 2);
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let pts: Vec<f32> = (0..40).flat_map(|_| [3.0, 3.0]).collect();
        let t = KdTree::new(2, pts);
        let idx: Vec<usize> = t.nearest(&[3.0, 3.0], 4).iter().map(|n| n.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            dim in 1usize..6,
            raw in proptest::collection::vec(-4i8..4, 6..300),
            q in proptest::collection::vec(-5.0f32..5.0, 6),
            k in 1usize..12,
        ) {
            let n = raw.len() / dim;
            let points: Vec<f32> = raw[..n * dim].iter().map(|&v| v as f32).collect();
            let tree = KdTree::new(dim, points.clone());
            let got: Vec<(usize, f32)> = tree.nearest(&q[..dim], k).iter().map(|n| (n.index, n.dist_sq)).collect();
            prop_assert_eq!(got, brute(&points, dim, &q[..dim], k));
        }
    }
}
