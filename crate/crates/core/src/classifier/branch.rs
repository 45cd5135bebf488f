//! Index-aware decision branches.
//!
//! A branch model is a tree trained on the projection of the labeled rows
//! onto one catalog subset. Its positive leaves become boxes over exactly
//! that subset, so inference is a handful of range queries against the
//! matching pre-built index.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::{IndexCatalog, QueryBox};
use crate::seed;
use crate::store::FeatureStore;
use crate::subset::FeatureSubset;

use super::boxes::extract_boxes;
use super::tree::{train_tree, TreeModel};
use super::{LabeledSample, ScanPredict};

pub const DEFAULT_ENSEMBLE_SIZE: u32 = 25;
pub const DEFAULT_CANDIDATE_SUBSETS: u32 = 10;

/// Confusion counts on the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainingFit {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl TrainingFit {
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    /// Exact F1 comparison by cross-multiplication.
    fn cmp_f1(&self, other: &TrainingFit) -> Ordering {
        let da = (2 * self.tp + self.fp + self.fn_) as u128;
        let db = (2 * other.tp + other.fp + other.fn_) as u128;
        let na = (2 * self.tp) as u128;
        let nb = (2 * other.tp) as u128;
        match (da, db) {
            (0, 0) => Ordering::Equal,
            (0, _) => 0.cmp(&nb),
            (_, 0) => na.cmp(&0),
            _ => (na * db).cmp(&(nb * da)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchModel {
    subset: FeatureSubset,
    catalog_position: usize,
    tree: TreeModel,
    boxes: Vec<QueryBox>,
    fit: TrainingFit,
}

impl BranchModel {
    pub fn subset(&self) -> &FeatureSubset {
        &self.subset
    }

    /// Position of the bound subset within the catalog the model was trained against.
    pub fn catalog_position(&self) -> usize {
        self.catalog_position
    }

    /// The tree, with splits on global feature columns.
    pub fn tree(&self) -> &TreeModel {
        &self.tree
    }

    pub fn boxes(&self) -> &[QueryBox] {
        &self.boxes
    }

    pub fn training_fit(&self) -> TrainingFit {
        self.fit
    }

    /// Tree prediction on a full-width feature row.
    #[inline]
    pub fn predict_row(&self, row: &[f32]) -> bool {
        self.tree.predict(row)
    }

    /// Number of boxes containing a full-width feature row.
    pub fn box_hits(&self, row: &[f32]) -> usize {
        self.boxes.iter().filter(|b| b.contains_row(row)).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: Vec<BranchModel>,
    seed: u64,
}

impl EnsembleModel {
    pub fn members(&self) -> &[BranchModel] {
        &self.members
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Members whose tree predicts the row positive.
    pub fn votes(&self, row: &[f32]) -> u32 {
        self.members.iter().filter(|m| m.predict_row(row)).count() as u32
    }

    pub fn n_boxes(&self) -> usize {
        self.members.iter().map(|m| m.boxes.len()).sum()
    }
}

fn check_samples(samples: &[LabeledSample], store: &FeatureStore) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| s.id >= store.n_rows()) {
        return Err(Error::NotFound { id: s.id });
    }
    let n_pos = samples.iter().filter(|s| s.label.is_positive()).count();
    if n_pos == 0 || n_pos == samples.len() {
        return Err(Error::Train("labeled samples must contain both positives and negatives".into()));
    }
    Ok(())
}

fn candidate_positions(catalog: &IndexCatalog, n_candidates: u32, seed: u64) -> Result<Vec<usize>> {
    if catalog.is_empty() {
        return Err(Error::Train("the index catalog is empty".into()));
    }
    if n_candidates == 0 {
        return Err(Error::Train("at least one candidate subset is required".into()));
    }
    let n = catalog.len();
    if n_candidates as usize >= n {
        return Ok((0..n).collect());
    }
    let mut picked = index::sample(&mut seed::rng(seed), n, n_candidates as usize).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Trains a branch model bound to one catalog subset.
///
/// Trees are fitted on up to `n_candidate_subsets` catalog subsets drawn
/// from `seed`; the subset whose tree has the best training F1 wins, ties
/// going to fewer boxes and then to the earlier catalog entry. Repeated ids
/// in `samples` act as sample weights.
pub fn train_branch_model(
    samples: &[LabeledSample],
    store: &FeatureStore,
    catalog: &IndexCatalog,
    n_candidate_subsets: u32,
    seed: u64,
) -> Result<BranchModel> {
    check_samples(samples, store)?;
    let positions = candidate_positions(catalog, n_candidate_subsets, seed)?;
    let ids: Vec<u64> = samples.iter().map(|s| s.id).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.label.is_positive()).collect();

    let fitted = positions
        .par_iter()
        .map(|&pos| {
            let subset = &catalog.entries()[pos].subset;
            let x = store.project_columns(subset.dims(), Some(&ids))?;
            let tree = train_tree(&x, &labels, seed)?;
            let mut fit = TrainingFit::default();
            for (row, &label) in x.rows().zip(&labels) {
                match (tree.predict(row), label) {
                    (true, true) => fit.tp += 1,
                    (true, false) => fit.fp += 1,
                    (false, true) => fit.fn_ += 1,
                    (false, false) => fit.tn += 1,
                }
            }
            Ok((pos, tree, fit))
        })
        .collect::<Result<Vec<_>>>()?;

    let (pos, mut tree, fit) = fitted
        .into_iter()
        .reduce(|best, cand| {
            let by_f1 = cand.2.cmp_f1(&best.2);
            let better = by_f1 == Ordering::Greater
                || (by_f1 == Ordering::Equal && cand.1.positive_leaves() < best.1.positive_leaves());
            if better {
                cand
            } else {
                best
            }
        })
        .expect("at least one candidate");

    let subset = catalog.entries()[pos].subset.clone();
    tree.remap_dims(&subset)?;
    let boxes = extract_boxes(&tree, &subset)?;
    Ok(BranchModel { subset, catalog_position: pos, tree, boxes, fit })
}

/// Seed of ensemble member `i`.
pub fn member_seed(seed: u64, i: u32) -> u64 {
    seed::derive_seed(seed, i as u64)
}

/// Bootstrap resample of `samples` (same size, with replacement), redrawn
/// until both classes are present.
pub fn bootstrap_sample(samples: &[LabeledSample], seed: u64) -> Result<Vec<LabeledSample>> {
    let n_pos = samples.iter().filter(|s| s.label.is_positive()).count();
    if n_pos == 0 || n_pos == samples.len() {
        return Err(Error::Train("labeled samples must contain both positives and negatives".into()));
    }
    let mut rng = seed::rng(seed);
    loop {
        let draw: Vec<LabeledSample> =
            (0..samples.len()).map(|_| samples[rng.random_range(0..samples.len())]).collect();
        let pos = draw.iter().filter(|s| s.label.is_positive()).count();
        if pos > 0 && pos < draw.len() {
            return Ok(draw);
        }
    }
}

/// Trains `n_members` branch models, member `i` on a bootstrap of the
/// samples with its own candidate-subset draw, both seeded by
/// [`member_seed`]`(seed, i)`.
pub fn train_ensemble(
    samples: &[LabeledSample],
    store: &FeatureStore,
    catalog: &IndexCatalog,
    n_members: u32,
    n_candidate_subsets: u32,
    seed: u64,
) -> Result<EnsembleModel> {
    if n_members == 0 {
        return Err(Error::Train("an ensemble needs at least one member".into()));
    }
    check_samples(samples, store)?;
    let members = (0..n_members)
        .into_par_iter()
        .map(|i| {
            let ms = member_seed(seed, i);
            let boot = bootstrap_sample(samples, ms)?;
            train_branch_model(&boot, store, catalog, n_candidate_subsets, ms)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel { members, seed })
}

impl ScanPredict for BranchModel {
    fn min_width(&self) -> u32 {
        self.subset.dims().last().map_or(0, |d| d + 1)
    }

    #[inline]
    fn score(&self, row: &[f32]) -> u32 {
        self.predict_row(row) as u32
    }
}

impl ScanPredict for EnsembleModel {
    fn min_width(&self) -> u32 {
        self.members.iter().map(ScanPredict::min_width).max().unwrap_or(0)
    }

    #[inline]
    fn score(&self, row: &[f32]) -> u32 {
        self.votes(row)
    }
}

/// Runs every box of every model through the catalog index bound to its
/// subset and accumulates, per id, the number of boxes containing it.
pub fn indexed_hits<'a>(
    models: impl IntoIterator<Item = &'a BranchModel>,
    catalog: &IndexCatalog,
) -> Result<(HashMap<u64, u32>, u32)> {
    let mut counts: HashMap<u64, u32> = HashMap::new();
    let mut n_queries = 0;
    for model in models {
        let index = catalog
            .index(model.catalog_position)
            .filter(|idx| idx.subset() == &model.subset)
            .ok_or_else(|| {
                Error::IndexMismatch(format!("no catalog index over subset {}", model.subset))
            })?;
        for qbox in &model.boxes {
            index.range_query_into(qbox, |id| *counts.entry(id).or_insert(0) += 1)?;
            n_queries += 1;
        }
    }
    Ok((counts, n_queries))
}
