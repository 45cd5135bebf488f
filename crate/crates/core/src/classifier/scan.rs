//! Scan-based models and full-pass inference.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;
use crate::store::FeatureStore;

use super::branch::bootstrap_sample;
use super::tree::{train_tree, train_tree_with, TreeModel, TreeParams};
use super::LabeledSample;

pub const DEFAULT_FOREST_SIZE: u32 = 25;

/// Anything that can classify a full-width feature row.
pub trait ScanPredict {
    /// Minimum row width the model reads.
    fn min_width(&self) -> u32;

    /// Positive-vote count for a row; zero means negative.
    fn score(&self, row: &[f32]) -> u32;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKind {
    DecisionTree,
    RandomForest,
}

/// Tree or forest over the full feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanModel {
    kind: ScanKind,
    n_dims: u32,
    trees: Vec<TreeModel>,
}

impl ScanModel {
    pub fn kind(&self) -> ScanKind {
        self.kind
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    /// Wraps trees trained elsewhere. Every tree must read at most `n_dims` columns.
    pub fn from_trees(kind: ScanKind, n_dims: u32, trees: Vec<TreeModel>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Model("a scan model needs at least one tree".into()));
        }
        if kind == ScanKind::DecisionTree && trees.len() != 1 {
            return Err(Error::Model("a decision tree model holds exactly one tree".into()));
        }
        if trees.iter().any(|t| t.min_width() > n_dims) {
            return Err(Error::Model(format!("a tree reads beyond {n_dims} dimensions")));
        }
        Ok(ScanModel { kind, n_dims, trees })
    }

    /// Number of trees voting positive.
    pub fn votes(&self, row: &[f32]) -> u32 {
        self.trees.iter().filter(|t| t.predict(row)).count() as u32
    }
}

impl ScanPredict for ScanModel {
    fn min_width(&self) -> u32 {
        self.n_dims
    }

    /// Forest: votes when a strict majority is positive, else zero.
    #[inline]
    fn score(&self, row: &[f32]) -> u32 {
        let v = self.votes(row);
        if 2 * v as usize > self.trees.len() {
            v
        } else {
            0
        }
    }
}

fn full_rows(samples: &[LabeledSample], store: &FeatureStore) -> Result<(Matrix, Vec<bool>)> {
    let ids: Vec<u64> = samples.iter().map(|s| s.id).collect();
    let rows = store.get_rows(&ids)?;
    let x = Matrix::from_rows(&rows).expect("store rows share one width");
    let y = samples.iter().map(|s| s.label.is_positive()).collect();
    Ok((x, y))
}

/// Single fully grown tree on all features.
pub fn train_decision_tree(samples: &[LabeledSample], store: &FeatureStore, seed: u64) -> Result<ScanModel> {
    let (x, y) = full_rows(samples, store)?;
    let tree = train_tree(&x, &y, seed)?;
    ScanModel::from_trees(ScanKind::DecisionTree, store.n_dims(), vec![tree])
}

/// Bagged trees with `floor(sqrt(D))` features examined per split.
pub fn train_random_forest(
    samples: &[LabeledSample],
    store: &FeatureStore,
    n_trees: u32,
    seed: u64,
) -> Result<ScanModel> {
    if n_trees == 0 {
        return Err(Error::Train("a forest needs at least one tree".into()));
    }
    let max_features = ((store.n_dims() as f64).sqrt().floor() as usize).max(1);
    let trees = (0..n_trees)
        .map(|i| {
            let ts = seed::derive_seed(seed, i as u64);
            let boot = bootstrap_sample(samples, ts)?;
            let (x, y) = full_rows(&boot, store)?;
            train_tree_with(&x, &y, &TreeParams { max_features: Some(max_features), seed: ts })
        })
        .collect::<Result<Vec<_>>>()?;
    ScanModel::from_trees(ScanKind::RandomForest, store.n_dims(), trees)
}

/// Classifies every row of the store; returns `(id, score)` for positive rows, ascending by id.
pub fn predict_scan(model: &impl ScanPredict, store: &FeatureStore) -> Result<Vec<(u64, u32)>> {
    let width = model.min_width();
    if width > store.n_dims() {
        return Err(Error::Model(format!(
            "model reads {width} dimensions, store has {}",
            store.n_dims()
        )));
    }
    let d = store.n_dims() as usize;
    Ok(store
        .data()
        .chunks_exact(d)
        .enumerate()
        .filter_map(|(id, row)| {
            let s = model.score(row);
            (s > 0).then_some((id as u64, s))
        })
        .collect())
}
