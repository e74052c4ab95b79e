//! Metric-space primitives: points of the unit hypercube under the sup-norm,
//! pooled source/target samples, and exact nearest-neighbor search.
//!
//! Neighbor queries are exact and fully deterministic: ties in distance are
//! broken by the smaller stable index, and the kd-tree accelerator is required
//! (and tested) to agree bit-for-bit with a brute-force scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// Binary class label, 0 or 1.
pub type Label = u8;

/// The ambient space `[0,1]^d` with the sup-norm metric. Diameter is 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetricSpace {
    dim: usize,
}

impl MetricSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam {
                name: "dim",
                reason: "ambient dimension must be positive".into(),
            });
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Diameter of the unit hypercube under the sup-norm.
    pub fn diameter(&self) -> f64 {
        1.0
    }
}

/// A point of the unit hypercube. Coordinates must be finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()), "non-finite coordinate");
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Sup-norm distance between two points of equal dimension.
pub fn linf_distance(a: &Point, b: &Point) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(linf(a.coords(), b.coords()))
}

pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = (x - y).abs();
        if d > best {
            best = d;
        }
    }
    best
}

/// Labeled source points, labeled target points, and an unlabeled target pool,
/// with stable indices: source occupies `[0, n_P)` and target (labeled block
/// first, then unlabeled) occupies `[n_P, n_P + n_Q)`.
#[derive(Clone, Debug)]
pub struct TransferSample {
    space: MetricSpace,
    source: Vec<(Point, Label)>,
    target_labeled: Vec<(Point, Label)>,
    target_unlabeled: Vec<Point>,
}

impl TransferSample {
    pub fn new(
        space: MetricSpace,
        source: Vec<(Point, Label)>,
        target_labeled: Vec<(Point, Label)>,
        target_unlabeled: Vec<Point>,
    ) -> Result<Self> {
        let n_q = target_labeled.len() + target_unlabeled.len();
        if source.is_empty() && n_q == 0 {
            return Err(Error::EmptySample);
        }
        let check_dim = |p: &Point| -> Result<()> {
            if p.dim() != space.dim() {
                return Err(Error::DimensionMismatch {
                    left: p.dim(),
                    right: space.dim(),
                });
            }
            Ok(())
        };
        for (p, y) in source.iter().chain(target_labeled.iter()) {
            check_dim(p)?;
            if *y > 1 {
                return Err(Error::InvalidParam {
                    name: "label",
                    reason: format!("labels are binary, got {y}"),
                });
            }
        }
        for p in &target_unlabeled {
            check_dim(p)?;
        }
        Ok(Self {
            space,
            source,
            target_labeled,
            target_unlabeled,
        })
    }

    pub fn space(&self) -> MetricSpace {
        self.space
    }

    pub fn n_p(&self) -> usize {
        self.source.len()
    }

    pub fn n_q(&self) -> usize {
        self.target_labeled.len() + self.target_unlabeled.len()
    }

    pub fn len(&self) -> usize {
        self.n_p() + self.n_q()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn source(&self) -> &[(Point, Label)] {
        &self.source
    }

    pub fn target_labeled(&self) -> &[(Point, Label)] {
        &self.target_labeled
    }

    pub fn target_unlabeled(&self) -> &[Point] {
        &self.target_unlabeled
    }

    pub fn is_target_index(&self, idx: usize) -> bool {
        idx >= self.n_p() && idx < self.len()
    }

    /// Pooled feature list in stable-index order.
    pub fn pooled_points(&self) -> Vec<Point> {
        let mut pts = Vec::with_capacity(self.len());
        pts.extend(self.source.iter().map(|(p, _)| p.clone()));
        pts.extend(self.target_labeled.iter().map(|(p, _)| p.clone()));
        pts.extend(self.target_unlabeled.iter().cloned());
        pts
    }
}

const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Split { left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    kind: NodeKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Neighbor {
    dist: f64,
    id: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        // distances are finite by construction
        self.dist
            .partial_cmp(&other.dist)
            .unwrap()
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact nearest-neighbor index over a fixed point set.
///
/// Queries return neighbors sorted by `(distance, stable id)` ascending, so
/// identical inputs always produce identical outputs. The index is immutable
/// after construction and safe for concurrent read-only queries.
#[derive(Clone, Debug)]
pub struct NnIndex {
    dim: usize,
    coords: Vec<f64>,
    ids: Vec<usize>,
    perm: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

impl NnIndex {
    /// Index `points` with stable ids `0..n`.
    pub fn build(points: &[Point]) -> Result<Self> {
        let ids: Vec<usize> = (0..points.len()).collect();
        Self::build_with_ids(points, &ids)
    }

    /// Index `points` carrying caller-supplied stable ids (used for subsets
    /// of a pooled sample, where ties must still break on the original index).
    pub fn build_with_ids(points: &[Point], ids: &[usize]) -> Result<Self> {
        assert_eq!(points.len(), ids.len());
        let dim = points.first().map_or(1, Point::dim);
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: p.dim(),
                    right: dim,
                });
            }
            coords.extend_from_slice(p.coords());
        }
        let mut index = Self {
            dim,
            coords,
            ids: ids.to_vec(),
            perm: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
            root: 0,
        };
        if !points.is_empty() {
            let n = points.len();
            let mut scratch: Vec<u32> = (0..n as u32).collect();
            index.root = index.build_node(&mut scratch, 0);
            index.perm = scratch;
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn slot_coords(&self, slot: u32) -> &[f64] {
        let s = slot as usize * self.dim;
        &self.coords[s..s + self.dim]
    }

    /// Coordinates of the point at `pos` in the original build order.
    pub fn input_coords(&self, pos: usize) -> &[f64] {
        let s = pos * self.dim;
        &self.coords[s..s + self.dim]
    }

    fn build_node(&mut self, slots: &mut [u32], offset: usize) -> usize {
        let (mut lo, mut hi) = (vec![f64::INFINITY; self.dim], vec![f64::NEG_INFINITY; self.dim]);
        for &s in slots.iter() {
            for (j, &c) in self.slot_coords(s).iter().enumerate() {
                lo[j] = lo[j].min(c);
                hi[j] = hi[j].max(c);
            }
        }
        if slots.len() <= LEAF_SIZE {
            self.nodes.push(Node {
                lo,
                hi,
                kind: NodeKind::Leaf {
                    start: offset,
                    end: offset + slots.len(),
                },
            });
            return self.nodes.len() - 1;
        }
        // split the widest dimension at the median
        let split_dim = (0..self.dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap())
            .unwrap();
        let mid = slots.len() / 2;
        let coords = &self.coords;
        let dim = self.dim;
        let key = |s: &u32| coords[*s as usize * dim + split_dim];
        slots.select_nth_unstable_by(mid, |a, b| key(a).partial_cmp(&key(b)).unwrap());
        let (left_slots, right_slots) = slots.split_at_mut(mid);
        let left = self.build_node(left_slots, offset);
        let right = self.build_node(right_slots, offset + mid);
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Split { left, right },
        });
        self.nodes.len() - 1
    }

    fn box_min_dist(&self, node: usize, x: &[f64]) -> f64 {
        let n = &self.nodes[node];
        let mut best = 0.0f64;
        for ((&lo, &hi), &xi) in n.lo.iter().zip(&n.hi).zip(x) {
            let gap = (lo - xi).max(xi - hi).max(0.0);
            if gap > best {
                best = gap;
            }
        }
        best
    }

    fn box_max_dist(&self, node: usize, x: &[f64]) -> f64 {
        let n = &self.nodes[node];
        let mut worst = 0.0f64;
        for ((&lo, &hi), &xi) in n.lo.iter().zip(&n.hi).zip(x) {
            let gap = (hi - xi).max(xi - lo).max(0.0);
            if gap > worst {
                worst = gap;
            }
        }
        worst
    }

    fn check_query(&self, x: &Point) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: x.dim(),
                right: self.dim,
            });
        }
        Ok(())
    }

    /// The `k` nearest indexed points to `x`, as `(distance, id)` sorted by
    /// `(distance, id)` ascending.
    pub fn knn(&self, x: &Point, k: usize) -> Result<Vec<(f64, usize)>> {
        self.check_query(x)?;
        if k == 0 || k > self.len() {
            return Err(Error::KOutOfRange { k, max: self.len() });
        }
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        self.knn_node(self.root, x.coords(), k, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_vec();
        out.sort_unstable();
        Ok(out.into_iter().map(|n| (n.dist, n.id)).collect())
    }

    fn knn_node(&self, node: usize, x: &[f64], k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node].kind {
            NodeKind::Leaf { start, end } => {
                for &slot in &self.perm[start..end] {
                    let cand = Neighbor {
                        dist: linf(x, self.slot_coords(slot)),
                        id: self.ids[slot as usize],
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            NodeKind::Split { left, right } => {
                let (dl, dr) = (self.box_min_dist(left, x), self.box_min_dist(right, x));
                let order = if dl <= dr { [(left, dl), (right, dr)] } else { [(right, dr), (left, dl)] };
                for (child, d) in order {
                    // ties at the current worst distance can still improve the
                    // id-based ordering, so prune on strict inequality only
                    if heap.len() == k && d > heap.peek().unwrap().dist {
                        continue;
                    }
                    self.knn_node(child, x, k, heap);
                }
            }
        }
    }

    /// Number of indexed points within closed sup-norm distance `r` of `x`.
    pub fn ball_count(&self, x: &Point, r: f64) -> Result<usize> {
        self.check_query(x)?;
        assert!(r >= 0.0, "ball radius must be nonnegative");
        if self.is_empty() {
            return Ok(0);
        }
        Ok(self.count_node(self.root, x.coords(), r))
    }

    fn count_node(&self, node: usize, x: &[f64], r: f64) -> usize {
        if self.box_min_dist(node, x) > r {
            return 0;
        }
        match self.nodes[node].kind {
            NodeKind::Leaf { start, end } => {
                if self.box_max_dist(node, x) <= r {
                    return end - start;
                }
                self.perm[start..end]
                    .iter()
                    .filter(|&&s| linf(x, self.slot_coords(s)) <= r)
                    .count()
            }
            NodeKind::Split { left, right } => {
                if self.box_max_dist(node, x) <= r {
                    let (s, e) = self.node_span(node);
                    return e - s;
                }
                self.count_node(left, x, r) + self.count_node(right, x, r)
            }
        }
    }

    fn node_span(&self, node: usize) -> (usize, usize) {
        match self.nodes[node].kind {
            NodeKind::Leaf { start, end } => (start, end),
            NodeKind::Split { left, right } => {
                let (s, _) = self.node_span(left);
                let (_, e) = self.node_span(right);
                (s, e)
            }
        }
    }

    /// All `(distance, id)` pairs within closed distance `r`, sorted by
    /// `(distance, id)`.
    pub fn ball_members(&self, x: &Point, r: f64) -> Result<Vec<(f64, usize)>> {
        self.check_query(x)?;
        assert!(r >= 0.0, "ball radius must be nonnegative");
        let mut out = Vec::new();
        if !self.is_empty() {
            self.members_node(self.root, x.coords(), r, &mut out);
        }
        out.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(out)
    }

    fn members_node(&self, node: usize, x: &[f64], r: f64, out: &mut Vec<(f64, usize)>) {
        if self.box_min_dist(node, x) > r {
            return;
        }
        match self.nodes[node].kind {
            NodeKind::Leaf { start, end } => {
                for &slot in &self.perm[start..end] {
                    let d = linf(x, self.slot_coords(slot));
                    if d <= r {
                        out.push((d, self.ids[slot as usize]));
                    }
                }
            }
            NodeKind::Split { left, right } => {
                self.members_node(left, x, r, out);
                self.members_node(right, x, r, out);
            }
        }
    }
}

/// Indices of the `k` nearest indexed points to `x`, ties broken by smaller
/// stable index.
pub fn knn_indices(index: &NnIndex, x: &Point, k: usize) -> Result<Vec<usize>> {
    Ok(index.knn(x, k)?.into_iter().map(|(_, id)| id).collect())
}

/// Number of indexed points in the closed ball of radius `r` around `x`.
pub fn ball_count(index: &NnIndex, x: &Point, r: f64) -> Result<usize> {
    index.ball_count(x, r)
}
