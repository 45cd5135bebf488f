//! Fully grown CART trees on binary labels.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;
use crate::subset::FeatureSubset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    /// Points with `x[dim] <= threshold` go to `left`, the rest to `right`.
    Split { dim: u32, threshold: f32, left: u32, right: u32 },
    Leaf { positive: bool },
}

/// Binary decision tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TreeParams {
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl TreeModel {
    /// Wraps a node table. Children must come after their parent, which
    /// rules out cycles.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Model("a tree needs at least one node".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if let TreeNode::Split { left, right, threshold, .. } = *n {
                let ok = |c: u32| (c as usize) > i && (c as usize) < nodes.len();
                if !ok(left) || !ok(right) || left == right || threshold.is_nan() {
                    return Err(Error::Model(format!("node {i} has invalid children or threshold")));
                }
            }
        }
        Ok(TreeModel { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Prediction for a row indexed by the tree's split dimensions.
    #[inline]
    pub fn predict(&self, row: &[f32]) -> bool {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { positive } => return positive,
                TreeNode::Split { dim, threshold, left, right } => {
                    i = if row[dim as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn positive_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { positive: true })).count()
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Largest split dimension plus one, i.e. the minimum row width the tree reads.
    pub fn min_width(&self) -> u32 {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { dim, .. } => Some(dim + 1),
                TreeNode::Leaf { .. } => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Rewrites local split dimensions `j` to the global columns `subset[j]`.
    pub fn remap_dims(&mut self, subset: &FeatureSubset) -> Result<()> {
        for n in &mut self.nodes {
            if let TreeNode::Split { dim, .. } = n {
                *dim = *subset.dims().get(*dim as usize).ok_or_else(|| {
                    Error::Model(format!("split dimension {dim} outside subset {subset}"))
                })?;
            }
        }
        Ok(())
    }
}

/// Trains on every feature; the tree is a deterministic function of the data.
pub fn train_tree(x: &Matrix, y: &[bool], seed: u64) -> Result<TreeModel> {
    train_tree_with(x, y, &TreeParams { max_features: None, seed })
}

pub fn train_tree_with(x: &Matrix, y: &[bool], params: &TreeParams) -> Result<TreeModel> {
    if x.n_rows() != y.len() {
        return Err(Error::Train(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    if x.n_rows() < 2 {
        return Err(Error::Train("at least two samples are required".into()));
    }
    if x.n_cols() == 0 {
        return Err(Error::Train("samples have no features".into()));
    }
    let n_pos = y.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::Train("both positive and negative samples are required".into()));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Train("training features must be finite".into()));
    }
    let mut grower = Grower {
        x,
        y,
        max_features: params.max_features.map(|k| k.clamp(1, x.n_cols())),
        rng: seed::rng(params.seed),
        nodes: Vec::new(),
        scratch: Vec::with_capacity(x.n_rows()),
    };
    let mut idx: Vec<usize> = (0..x.n_rows()).collect();
    grower.grow(&mut idx);
    Ok(TreeModel { nodes: grower.nodes })
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [bool],
    max_features: Option<usize>,
    rng: rand_chacha::ChaCha8Rng,
    nodes: Vec<TreeNode>,
    scratch: Vec<(f32, bool)>,
}

#[derive(Clone, Copy)]
struct Split {
    dim: usize,
    threshold: f32,
    score: f64,
}

/// Threshold strictly between `a < b`, at the midpoint when representable.
fn midpoint(a: f32, b: f32) -> f32 {
    let m = ((a as f64 + b as f64) / 2.0) as f32;
    if a <= m && m < b {
        m
    } else {
        a
    }
}

/// Sum of squared class counts over size; maximizing it minimizes weighted Gini.
#[inline]
fn purity(pos: f64, neg: f64) -> f64 {
    let n = pos + neg;
    (pos * pos + neg * neg) / n
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize]) -> u32 {
        let id = self.nodes.len() as u32;
        let n_pos = idx.iter().filter(|&&i| self.y[i]).count();
        let n_neg = idx.len() - n_pos;
        // Majority label; ties go negative.
        self.nodes.push(TreeNode::Leaf { positive: n_pos > n_neg });
        if n_pos == 0 || n_neg == 0 {
            return id;
        }
        let Some(split) = self.best_split(idx, n_pos, n_neg) else {
            return id;
        };
        let mut mid = 0;
        for k in 0..idx.len() {
            if self.x.get(idx[k], split.dim) <= split.threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        debug_assert!(mid > 0 && mid < idx.len());
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.grow(lo);
        let right = self.grow(hi);
        self.nodes[id as usize] =
            TreeNode::Split { dim: split.dim as u32, threshold: split.threshold, left, right };
        id
    }

    fn best_split(&mut self, idx: &[usize], n_pos: usize, n_neg: usize) -> Option<Split> {
        let d = self.x.n_cols();
        let order: Vec<usize> = match self.max_features {
            Some(_) => {
                let mut o: Vec<usize> = (0..d).collect();
                o.shuffle(&mut self.rng);
                o
            }
            None => (0..d).collect(),
        };
        let budget = self.max_features.unwrap_or(d);
        let mut best: Option<Split> = None;
        for (examined, &dim) in order.iter().enumerate() {
            // Past the budget, keep looking only until some valid split exists.
            if examined >= budget && best.is_some() {
                break;
            }
            if let Some(s) = self.best_split_on(idx, dim, n_pos, n_neg) {
                if best.is_none_or(|b| s.score > b.score) {
                    best = Some(s);
                }
            }
        }
        best
    }

    fn best_split_on(&mut self, idx: &[usize], dim: usize, n_pos: usize, n_neg: usize) -> Option<Split> {
        self.scratch.clear();
        self.scratch.extend(idx.iter().map(|&i| (self.x.get(i, dim), self.y[i])));
        self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let (tp, tn) = (n_pos as f64, n_neg as f64);
        let mut lp = 0.0;
        let mut ln = 0.0;
        let mut best: Option<Split> = None;
        for k in 0..self.scratch.len() - 1 {
            if self.scratch[k].1 {
                lp += 1.0;
            } else {
                ln += 1.0;
            }
            let (a, b) = (self.scratch[k].0, self.scratch[k + 1].0);
            if a == b {
                continue;
            }
            let score = purity(lp, ln) + purity(tp - lp, tn - ln);
            if best.is_none_or(|s| score > s.score) {
                best = Some(Split { dim, threshold: midpoint(a, b), score });
            }
        }
        best
    }
}
