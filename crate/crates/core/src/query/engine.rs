use std::collections::HashSet;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{
    indexed_hits, knn_baseline, predict_scan, train_branch_model, train_decision_tree, train_ensemble,
    train_random_forest, DEFAULT_CANDIDATE_SUBSETS, DEFAULT_ENSEMBLE_SIZE, DEFAULT_FOREST_SIZE, DEFAULT_KNN_K,
};
use crate::error::{Error, Result};
use crate::index::IndexCatalog;
use crate::store::{FeatureStore, PatchRecord};

use super::{ModelKind, SearchRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub knn_k: u32,
    pub ensemble_size: u32,
    pub n_candidate_subsets: u32,
    pub forest_size: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            knn_k: DEFAULT_KNN_K,
            ensemble_size: DEFAULT_ENSEMBLE_SIZE,
            n_candidate_subsets: DEFAULT_CANDIDATE_SUBSETS,
            forest_size: DEFAULT_FOREST_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub id: u64,
    pub confidence: u32,
    pub geo_x: f64,
    pub geo_y: f64,
    pub in_training: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryStats {
    pub n_results: u64,
    pub train_ms: f64,
    pub infer_ms: f64,
    pub total_ms: f64,
    pub n_boxes: u32,
    pub n_range_queries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<RankedResult>,
    pub stats: QueryStats,
}

impl SearchResponse {
    pub fn ids(&self) -> Vec<u64> {
        self.results.iter().map(|r| r.id).collect()
    }
}

/// Pipeline stage a search failed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Augment,
    Train,
    Infer,
    Rank,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Augment => "augment",
            Stage::Train => "train",
            Stage::Infer => "infer",
            Stage::Rank => "rank",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage: {error}", stage = .stage.as_str())]
pub struct SearchError {
    pub stage: Stage,
    #[source]
    pub error: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, SearchError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> Result<T, SearchError> {
        self.map_err(|error| SearchError { stage, error })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Adds `n_random_negatives` ids drawn from the unlabeled rows with the request seed.
pub fn augment_negatives(request: &SearchRequest, store: &FeatureStore) -> Result<SearchRequest> {
    let mut out = request.clone();
    if request.n_random_negatives == 0 {
        return Ok(out);
    }
    let exclude = request.labeled_ids();
    let drawn = store.sample_ids(request.n_random_negatives, &exclude, request.seed)?;
    out.negatives.extend(drawn);
    Ok(out)
}

/// Orders hits by `(count desc, id asc)` and attaches geolocation.
pub fn rank_results(
    hits: &[(u64, u32)],
    records: &[PatchRecord],
    training: &HashSet<u64>,
) -> Result<Vec<RankedResult>> {
    let mut sorted = hits.to_vec();
    sorted.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted
        .into_iter()
        .map(|(id, count)| {
            if count == 0 {
                return Err(Error::InvalidRequest(format!("hit {id} has zero confidence")));
            }
            let r = records.get(id as usize).ok_or(Error::NotFound { id })?;
            Ok(RankedResult { id, confidence: count, geo_x: r.geo_x, geo_y: r.geo_y, in_training: training.contains(&id) })
        })
        .collect()
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Runs one search against a shared store and catalog.
pub fn execute_search(
    request: &SearchRequest,
    store: &FeatureStore,
    catalog: &IndexCatalog,
    config: &EngineConfig,
) -> Result<SearchResponse, SearchError> {
    let start = Instant::now();
    request.validate(store.n_rows()).at(Stage::Validate)?;
    if catalog.store_fingerprint() != store.fingerprint() {
        return Err(Error::IndexMismatch("catalog was built over a different store".into())).at(Stage::Validate);
    }
    let request = augment_negatives(request, store).at(Stage::Augment)?;
    let samples = request.samples();
    let mut stats = QueryStats::default();

    let hits: Vec<(u64, u32)> = match request.model_kind {
        ModelKind::Dbranch => {
            let t = Instant::now();
            let model = train_branch_model(&samples, store, catalog, config.n_candidate_subsets, request.seed)
                .at(Stage::Train)?;
            stats.train_ms = ms(t);
            let t = Instant::now();
            let (counts, n_queries) = indexed_hits([&model], catalog).at(Stage::Infer)?;
            stats.infer_ms = ms(t);
            stats.n_boxes = model.boxes().len() as u32;
            stats.n_range_queries = n_queries;
            counts.into_iter().collect()
        }
        ModelKind::DbranchEns => {
            let t = Instant::now();
            let model = train_ensemble(
                &samples,
                store,
                catalog,
                config.ensemble_size,
                config.n_candidate_subsets,
                request.seed,
            )
            .at(Stage::Train)?;
            stats.train_ms = ms(t);
            let t = Instant::now();
            let (counts, n_queries) = indexed_hits(model.members(), catalog).at(Stage::Infer)?;
            stats.infer_ms = ms(t);
            stats.n_boxes = model.n_boxes() as u32;
            stats.n_range_queries = n_queries;
            counts.into_iter().collect()
        }
        ModelKind::Dtree | ModelKind::Rforest => {
            let t = Instant::now();
            let model = if request.model_kind == ModelKind::Dtree {
                train_decision_tree(&samples, store, request.seed)
            } else {
                train_random_forest(&samples, store, config.forest_size, request.seed)
            }
            .at(Stage::Train)?;
            stats.train_ms = ms(t);
            let t = Instant::now();
            let hits = predict_scan(&model, store).at(Stage::Infer)?;
            stats.infer_ms = ms(t);
            hits
        }
        ModelKind::Knn => {
            let t = Instant::now();
            let neighbors = knn_baseline(&samples, store, catalog, config.knn_k).at(Stage::Infer)?;
            stats.infer_ms = ms(t);
            neighbors
                .iter()
                .enumerate()
                .map(|(rank, n)| (n.id, config.knn_k - rank as u32))
                .collect()
        }
    };

    let results = rank_results(&hits, store.records(), &request.labeled_ids()).at(Stage::Rank)?;
    stats.n_results = results.len() as u64;
    stats.total_ms = ms(start);
    Ok(SearchResponse { results, stats })
}
