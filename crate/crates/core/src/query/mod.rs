//! One search end to end: label augmentation, training, indexed or scan
//! inference, confidence ranking and timing.

mod engine;
mod session;

pub use engine::{
    augment_negatives, execute_search, rank_results, EngineConfig, QueryStats, RankedResult,
    SearchError, SearchResponse, Stage,
};
pub use session::{export_session, import_session, ImportedSession, QuerySession, SESSION_VERSION};

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classifier::LabeledSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dbranch,
    DbranchEns,
    Dtree,
    Rforest,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Dbranch, ModelKind::DbranchEns, ModelKind::Dtree, ModelKind::Rforest, ModelKind::Knn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dbranch => "dbranch",
            ModelKind::DbranchEns => "dbranch_ens",
            ModelKind::Dtree => "dtree",
            ModelKind::Rforest => "rforest",
            ModelKind::Knn => "knn",
        }
    }

    /// Whether inference runs through the pre-built indexes.
    pub fn is_indexed(self) -> bool {
        matches!(self, ModelKind::Dbranch | ModelKind::DbranchEns | ModelKind::Knn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidRequest(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub positives: Vec<u64>,
    #[serde(default)]
    pub negatives: Vec<u64>,
    #[serde(alias = "model")]
    pub model_kind: ModelKind,
    #[serde(default)]
    pub n_random_negatives: u32,
    #[serde(default)]
    pub seed: u64,
}

impl SearchRequest {
    pub fn new(positives: Vec<u64>, negatives: Vec<u64>, model_kind: ModelKind) -> Self {
        SearchRequest { positives, negatives, model_kind, n_random_negatives: 0, seed: 0 }
    }

    /// Checks ids against the store size and the label invariants.
    pub fn validate(&self, n_rows: u64) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::Train("at least one positive sample is required".into()));
        }
        let mut seen = HashSet::with_capacity(self.positives.len() + self.negatives.len());
        for &id in self.positives.iter().chain(&self.negatives) {
            if id >= n_rows {
                return Err(Error::InvalidRequest(format!("id {id} is outside the dataset (n_rows = {n_rows})")));
            }
            if !seen.insert(id) {
                return Err(Error::InvalidRequest(format!(
                    "id {id} is labeled more than once or as both positive and negative"
                )));
            }
        }
        Ok(())
    }

    pub fn labeled_ids(&self) -> HashSet<u64> {
        self.positives.iter().chain(&self.negatives).copied().collect()
    }

    pub fn samples(&self) -> Vec<LabeledSample> {
        self.positives
            .iter()
            .map(|&id| LabeledSample::positive(id))
            .chain(self.negatives.iter().map(|&id| LabeledSample::negative(id)))
            .collect()
    }
}
