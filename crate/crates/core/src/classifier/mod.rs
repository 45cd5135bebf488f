//! The search models: decision branches (single and ensemble), scan-based
//! tree and forest, and the indexed nearest-neighbor baseline.

mod boxes;
mod branch;
mod descriptor;
mod knn;
mod scan;
mod tree;

use serde::{Deserialize, Serialize};

pub use boxes::extract_boxes;
pub use branch::{
    bootstrap_sample, indexed_hits, member_seed, train_branch_model, train_ensemble, BranchModel,
    EnsembleModel, TrainingFit, DEFAULT_CANDIDATE_SUBSETS, DEFAULT_ENSEMBLE_SIZE,
};
pub use descriptor::{BoxDescriptor, MemberDescriptor, ModelDescriptor};
pub use knn::{knn_baseline, positive_centroid, DEFAULT_KNN_K};
pub use scan::{
    predict_scan, train_decision_tree, train_random_forest, ScanKind, ScanModel, ScanPredict,
    DEFAULT_FOREST_SIZE,
};
pub use tree::{train_tree, train_tree_with, TreeModel, TreeNode, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: u64,
    pub label: Label,
}

impl LabeledSample {
    pub fn positive(id: u64) -> Self {
        LabeledSample { id, label: Label::Positive }
    }

    pub fn negative(id: u64) -> Self {
        LabeledSample { id, label: Label::Negative }
    }
}
