use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::store::FeatureStore;
use crate::subset::FeatureSubset;

use super::QueryBox;

pub const DEFAULT_LEAF_SIZE: u32 = 64;

pub(crate) const LEAF: u32 = u32::MAX;

/// One tree node. Every node owns the contiguous slice `ids[start..end]`;
/// internal nodes additionally split it at `split_value` along local
/// dimension `split_dim` (left: `x <= split_value`, right: `x > split_value`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Node {
    pub split_dim: u32,
    pub split_value: f32,
    pub left: u32,
    pub right: u32,
    pub start: u32,
    pub end: u32,
}

impl Node {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.split_dim == LEAF
    }
}

/// Counters collected during a range query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RangeStats {
    pub nodes_visited: u64,
    /// Leaves whose points were tested one by one.
    pub leaves_scanned: u64,
    /// Points tested one by one.
    pub ids_inspected: u64,
    /// Points reported through whole-subtree containment without a test.
    pub ids_bulk: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u64,
    pub distance: f64,
}

/// Balanced k-d tree over the projection of a store onto one feature subset.
///
/// Nodes carry the tight bounding box of their points, which drives both
/// pruning and whole-subtree reporting. Point coordinates are read from the
/// store on demand; the index itself only holds structure and ids.
pub struct KdIndex {
    pub(crate) store: Arc<FeatureStore>,
    pub(crate) subset: FeatureSubset,
    pub(crate) leaf_size: u32,
    pub(crate) nodes: Vec<Node>,
    /// Per node: `d` minima followed by `d` maxima.
    pub(crate) bounds: Vec<f32>,
    pub(crate) ids: Vec<u32>,
}

impl std::fmt::Debug for KdIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KdIndex")
            .field("subset", &self.subset)
            .field("leaf_size", &self.leaf_size)
            .field("nodes", &self.nodes.len())
            .field("points", &self.ids.len())
            .finish()
    }
}

struct Builder<'a> {
    points: &'a Matrix,
    leaf_size: usize,
    nodes: Vec<Node>,
    bounds: Vec<f32>,
}

impl Builder<'_> {
    fn build(&mut self, perm: &mut [u32], offset: usize) -> u32 {
        let d = self.points.n_cols();
        let (mins, maxs) = self.bounds_of(perm);
        let node_id = self.nodes.len() as u32;
        self.bounds.extend_from_slice(&mins);
        self.bounds.extend_from_slice(&maxs);
        self.nodes.push(Node {
            split_dim: LEAF,
            split_value: 0.0,
            left: 0,
            right: 0,
            start: offset as u32,
            end: (offset + perm.len()) as u32,
        });

        if perm.len() <= self.leaf_size {
            return node_id;
        }
        // Widest spread; ties go to the lowest dimension.
        let mut dim = 0;
        let mut best = f32::NEG_INFINITY;
        for j in 0..d {
            let spread = maxs[j] - mins[j];
            if spread > best {
                best = spread;
                dim = j;
            }
        }
        if !(best > 0.0) {
            return node_id;
        }

        let (mid, split_value) = self.partition(perm, dim, maxs[dim]);
        let (lo, hi) = perm.split_at_mut(mid);
        let left = self.build(lo, offset);
        let right = self.build(hi, offset + mid);
        let node = &mut self.nodes[node_id as usize];
        node.split_dim = dim as u32;
        node.split_value = split_value;
        node.left = left;
        node.right = right;
        node_id
    }

    fn bounds_of(&self, perm: &[u32]) -> (Vec<f32>, Vec<f32>) {
        let d = self.points.n_cols();
        let mut mins = vec![f32::INFINITY; d];
        let mut maxs = vec![f32::NEG_INFINITY; d];
        for &i in perm {
            for (j, &x) in self.points.row(i as usize).iter().enumerate() {
                mins[j] = mins[j].min(x);
                maxs[j] = maxs[j].max(x);
            }
        }
        (mins, maxs)
    }

    /// Median split with ties sent left. Returns the size of the left part
    /// and the split value; both parts are non-empty.
    fn partition(&self, perm: &mut [u32], dim: usize, max: f32) -> (usize, f32) {
        let key = |i: u32| self.points.get(i as usize, dim);
        let k = (perm.len() - 1) / 2;
        perm.select_nth_unstable_by(k, |&a, &b| key(a).total_cmp(&key(b)));
        let median = key(perm[k]);
        if median < max {
            // Everything right of k is >= median; pull the equal ones left.
            let mut mid = k + 1;
            for i in k + 1..perm.len() {
                if key(perm[i]) == median {
                    perm.swap(i, mid);
                    mid += 1;
                }
            }
            (mid, median)
        } else {
            // More than half the points sit at the maximum: split just below it.
            let mut mid = 0;
            for i in 0..perm.len() {
                if key(perm[i]) < max {
                    perm.swap(i, mid);
                    mid += 1;
                }
            }
            let below = perm[..mid].iter().map(|&i| key(i)).fold(f32::NEG_INFINITY, f32::max);
            (mid, below)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    id: u64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdIndex {
    /// Builds an index over every row of `store` projected to `subset`.
    pub fn build(store: Arc<FeatureStore>, subset: FeatureSubset, leaf_size: u32) -> Result<Self> {
        if leaf_size == 0 {
            return Err(Error::InvalidRequest("leaf_size must be at least 1".into()));
        }
        let n = store.n_rows();
        if n > u32::MAX as u64 {
            return Err(Error::InvalidRequest(format!("{n} rows exceed the 32-bit id range of an index")));
        }
        let points = store.project_columns(subset.dims(), None)?;
        let mut perm: Vec<u32> = (0..n as u32).collect();
        let mut builder = Builder {
            points: &points,
            leaf_size: leaf_size as usize,
            nodes: Vec::new(),
            bounds: Vec::new(),
        };
        builder.build(&mut perm, 0);
        let Builder { nodes, bounds, .. } = builder;
        Ok(KdIndex { store, subset, leaf_size, nodes, bounds, ids: perm })
    }

    pub fn subset(&self) -> &FeatureSubset {
        &self.subset
    }

    pub fn store(&self) -> &Arc<FeatureStore> {
        &self.store
    }

    pub fn leaf_size(&self) -> u32 {
        self.leaf_size
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: u32) -> usize {
            let n = &nodes[i as usize];
            if n.is_leaf() {
                0
            } else {
                1 + go(nodes, n.left).max(go(nodes, n.right))
            }
        }
        go(&self.nodes, 0)
    }

    /// `(local split dimension, split value)` of the root, `None` for a single leaf.
    pub fn root_split(&self) -> Option<(u32, f32)> {
        let root = &self.nodes[0];
        (!root.is_leaf()).then_some((root.split_dim, root.split_value))
    }

    /// Leaf buckets as id lists, in tree order.
    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| &self.ids[n.start as usize..n.end as usize])
    }

    #[inline]
    fn node_bounds(&self, node: usize) -> (&[f32], &[f32]) {
        let d = self.subset.len();
        let b = &self.bounds[node * 2 * d..(node + 1) * 2 * d];
        b.split_at(d)
    }

    /// Leaves whose point bounds intersect `qbox`.
    pub fn leaves_intersecting(&self, qbox: &QueryBox) -> usize {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_leaf())
            .filter(|&i| {
                let (mins, maxs) = self.node_bounds(i);
                !disjoint(mins, maxs, qbox)
            })
            .count()
    }

    fn check_box(&self, qbox: &QueryBox) -> Result<()> {
        if qbox.subset() != &self.subset {
            return Err(Error::IndexMismatch(format!(
                "box over subset {} queried against index over {}",
                qbox.subset(),
                self.subset
            )));
        }
        Ok(())
    }

    /// Ids `i` with `lower < x_i <= upper` on every subset dimension, ascending.
    pub fn range_query(&self, qbox: &QueryBox) -> Result<Vec<u64>> {
        self.range_query_with_stats(qbox).map(|(ids, _)| ids)
    }

    pub fn range_query_with_stats(&self, qbox: &QueryBox) -> Result<(Vec<u64>, RangeStats)> {
        let mut out = Vec::new();
        let stats = self.range_query_into(qbox, |id| out.push(id))?;
        out.sort_unstable();
        Ok((out, stats))
    }

    /// Streams matching ids, unordered, to `emit`.
    pub fn range_query_into(&self, qbox: &QueryBox, mut emit: impl FnMut(u64)) -> Result<RangeStats> {
        self.check_box(qbox)?;
        let mut stats = RangeStats::default();
        if qbox.is_empty() || self.nodes.is_empty() {
            return Ok(stats);
        }
        let dims = self.subset.dims();
        let mut stack = vec![0u32];
        while let Some(i) = stack.pop() {
            stats.nodes_visited += 1;
            let node = &self.nodes[i as usize];
            let (mins, maxs) = self.node_bounds(i as usize);
            if disjoint(mins, maxs, qbox) {
                continue;
            }
            let ids = &self.ids[node.start as usize..node.end as usize];
            if contained(mins, maxs, qbox) {
                stats.ids_bulk += ids.len() as u64;
                ids.iter().for_each(|&id| emit(id as u64));
                continue;
            }
            if node.is_leaf() {
                stats.leaves_scanned += 1;
                stats.ids_inspected += ids.len() as u64;
                for &id in ids {
                    let row = self.store.row(id as u64);
                    let inside = dims
                        .iter()
                        .zip(qbox.lower().iter().zip(qbox.upper()))
                        .all(|(&d, (&l, &u))| {
                            let x = row[d as usize];
                            l < x && x <= u
                        });
                    if inside {
                        emit(id as u64);
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        Ok(stats)
    }

    fn min_dist2(&self, node: usize, point: &[f32]) -> f64 {
        let (mins, maxs) = self.node_bounds(node);
        let mut acc = 0.0;
        for ((&q, &lo), &hi) in point.iter().zip(mins).zip(maxs) {
            let diff = if q < lo {
                lo as f64 - q as f64
            } else if q > hi {
                q as f64 - hi as f64
            } else {
                0.0
            };
            acc += diff * diff;
        }
        acc
    }

    /// The `k` nearest points by Euclidean distance on the subset
    /// dimensions, ascending by `(distance, id)`. Returns every point when
    /// `k` exceeds the index size.
    pub fn knn_query(&self, point: &[f32], k: u32) -> Result<Vec<Neighbor>> {
        if point.len() != self.subset.len() {
            return Err(Error::IndexMismatch(format!(
                "query point has {} dimensions, index subset has {}",
                point.len(),
                self.subset.len()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidRequest("k must be at least 1".into()));
        }
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRequest("query point must be finite".into()));
        }
        let k = (k as usize).min(self.ids.len());
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.knn_visit(0, point, k, &mut heap);
        }
        let mut out = heap.into_sorted_vec();
        out.truncate(k);
        Ok(out
            .into_iter()
            .map(|c| Neighbor { id: c.id, distance: c.dist2.sqrt() })
            .collect())
    }

    fn knn_visit(&self, i: u32, point: &[f32], k: usize, heap: &mut BinaryHeap<Candidate>) {
        let node = &self.nodes[i as usize];
        if node.is_leaf() {
            let dims = self.subset.dims();
            for &id in &self.ids[node.start as usize..node.end as usize] {
                let row = self.store.row(id as u64);
                let dist2 = dims
                    .iter()
                    .zip(point)
                    .map(|(&d, &q)| {
                        let diff = row[d as usize] as f64 - q as f64;
                        diff * diff
                    })
                    .sum();
                let cand = Candidate { dist2, id: id as u64 };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        let dl = self.min_dist2(node.left as usize, point);
        let dr = self.min_dist2(node.right as usize, point);
        let order = if dl <= dr {
            [(node.left, dl), (node.right, dr)]
        } else {
            [(node.right, dr), (node.left, dl)]
        };
        for (child, d) in order {
            if heap.len() < k || d <= heap.peek().unwrap().dist2 {
                self.knn_visit(child, point, k, heap);
            }
        }
    }
}

#[inline]
fn disjoint(mins: &[f32], maxs: &[f32], qbox: &QueryBox) -> bool {
    mins.iter()
        .zip(maxs)
        .zip(qbox.lower().iter().zip(qbox.upper()))
        .any(|((&lo, &hi), (&l, &u))| hi <= l || lo > u)
}

#[inline]
fn contained(mins: &[f32], maxs: &[f32], qbox: &QueryBox) -> bool {
    mins.iter()
        .zip(maxs)
        .zip(qbox.lower().iter().zip(qbox.upper()))
        .all(|((&lo, &hi), (&l, &u))| lo > l && hi <= u)
}
