//! Scan-versus-index timing over planted-class queries.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index;

use crate::classifier::{indexed_hits, predict_scan, train_branch_model};
use crate::error::{Error, Result};
use crate::index::{IndexCatalog, QueryBox};
use crate::query::{augment_negatives, execute_search, EngineConfig, ModelKind, SearchRequest};
use crate::seed;
use crate::store::FeatureStore;
use crate::synth::GroundTruth;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchParams {
    pub queries: u32,
    pub selectivities: Vec<f64>,
    pub seed: u64,
    pub repetitions: u32,
    pub n_positives: u32,
    pub n_negatives: u32,
    pub n_random_negatives: u32,
    pub models: Vec<ModelKind>,
    pub config: EngineConfig,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            queries: 1,
            selectivities: vec![0.001, 1.0],
            seed: 0,
            repetitions: 5,
            n_positives: 20,
            n_negatives: 100,
            n_random_negatives: 200,
            models: ModelKind::ALL.to_vec(),
            config: EngineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub model: String,
    pub n: u64,
    pub selectivity: f64,
    pub class: Option<u32>,
    pub train_ms: f64,
    pub infer_ms: f64,
    pub total_ms: f64,
    pub n_results: u64,
    /// Whether the indexed result set equals its scan counterpart.
    pub agreement: Option<bool>,
}

pub const TSV_HEADER: &str = "model\tn\tselectivity\tclass\ttrain_ms\tinfer_ms\ttotal_ms\tn_results\tagreement";

impl BenchRow {
    pub fn tsv(&self) -> String {
        let class = self.class.map_or("-".to_string(), |c| c.to_string());
        let agreement = match self.agreement {
            Some(true) => "exact",
            Some(false) => "mismatch",
            None => "-",
        };
        format!(
            "{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{}\t{}",
            self.model, self.n, self.selectivity, class, self.train_ms, self.infer_ms, self.total_ms, self.n_results,
            agreement
        )
    }
}

pub fn to_tsv(rows: &[BenchRow]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.tsv());
    }
    out
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64() * 1e3))
}

/// Labeled request for one planted class: positives from the class,
/// negatives from background patches.
pub fn planted_request(
    truth: &GroundTruth,
    class: u32,
    params: &BenchParams,
    model_kind: ModelKind,
    query_seed: u64,
) -> Result<SearchRequest> {
    let c = truth
        .classes
        .iter()
        .find(|c| c.class == class)
        .ok_or_else(|| Error::InvalidRequest(format!("no planted class {class}")))?;
    let mut rng = seed::rng(query_seed);
    let n_pos = (params.n_positives as usize).min(c.ids.len());
    let mut positives: Vec<u64> =
        index::sample(&mut rng, c.ids.len(), n_pos).into_iter().map(|i| c.ids[i]).collect();
    positives.sort_unstable();
    let planted: HashSet<u64> = truth.classes.iter().flat_map(|c| c.ids.iter().copied()).collect();
    let background = truth.n_patches - planted.len() as u64;
    let n_neg = (params.n_negatives as u64).min(background);
    let mut negatives = Vec::with_capacity(n_neg as usize);
    let mut seen = HashSet::new();
    while (negatives.len() as u64) < n_neg {
        let id = rand::Rng::random_range(&mut rng, 0..truth.n_patches);
        if !planted.contains(&id) && seen.insert(id) {
            negatives.push(id);
        }
    }
    negatives.sort_unstable();
    let free = truth.n_patches - (positives.len() + negatives.len()) as u64;
    Ok(SearchRequest {
        positives,
        negatives,
        model_kind,
        n_random_negatives: (params.n_random_negatives as u64).min(free) as u32,
        seed: query_seed,
    })
}

fn universal_rows(store: &FeatureStore, catalog: &IndexCatalog, params: &BenchParams, s: f64) -> Result<Vec<BenchRow>> {
    let entry = &catalog.entries()[0];
    let qbox = QueryBox::universal(entry.subset.clone());
    let (mut idx_ms, mut scan_ms) = (Vec::new(), Vec::new());
    let mut agree = true;
    let mut n_results = 0;
    for _ in 0..params.repetitions.max(1) {
        let (hits, ms) = timed(|| entry.index.range_query(&qbox))?;
        idx_ms.push(ms);
        let (scan, ms) = timed(|| {
            Ok((0..store.n_rows()).filter(|&id| qbox.contains_row(store.row(id))).collect::<Vec<u64>>())
        })?;
        scan_ms.push(ms);
        agree &= hits == scan;
        n_results = hits.len() as u64;
    }
    let row = |model: &str, ms: f64| BenchRow {
        model: model.into(),
        n: store.n_rows(),
        selectivity: s,
        class: None,
        train_ms: 0.0,
        infer_ms: ms,
        total_ms: ms,
        n_results,
        agreement: Some(agree),
    };
    Ok(vec![row("universal_index", median(&mut idx_ms)), row("universal_scan", median(&mut scan_ms))])
}

fn branch_rows(
    request: &SearchRequest,
    store: &FeatureStore,
    catalog: &IndexCatalog,
    params: &BenchParams,
    s: f64,
    class: u32,
) -> Result<Vec<BenchRow>> {
    let (mut train, mut idx, mut scan) = (Vec::new(), Vec::new(), Vec::new());
    let mut agree = true;
    let mut n_results = 0;
    for _ in 0..params.repetitions.max(1) {
        let augmented = augment_negatives(request, store)?;
        let samples = augmented.samples();
        let (model, ms) = timed(|| {
            train_branch_model(&samples, store, catalog, params.config.n_candidate_subsets, request.seed)
        })?;
        train.push(ms);
        let ((counts, _), ms) = timed(|| indexed_hits([&model], catalog))?;
        idx.push(ms);
        let (scanned, ms) = timed(|| predict_scan(&model, store))?;
        scan.push(ms);
        let mut a: Vec<u64> = counts.into_keys().collect();
        a.sort_unstable();
        let b: Vec<u64> = scanned.iter().map(|h| h.0).collect();
        agree &= a == b;
        n_results = a.len() as u64;
    }
    let train_ms = median(&mut train);
    let row = |model: &str, infer_ms: f64| BenchRow {
        model: model.into(),
        n: store.n_rows(),
        selectivity: s,
        class: Some(class),
        train_ms,
        infer_ms,
        total_ms: train_ms + infer_ms,
        n_results,
        agreement: Some(agree),
    };
    Ok(vec![row("dbranch", median(&mut idx)), row("dbranch_scan", median(&mut scan))])
}

/// Runs every (query, selectivity, model) cell and reports medians over
/// `params.repetitions` runs.
///
/// A selectivity of 1 or more runs the universal box through one index and
/// through a scan. Smaller selectivities query the planted class closest in
/// size; `dbranch` is reported twice, once with indexed inference and once
/// scanning with the identical model.
pub fn run_bench(
    store: &FeatureStore,
    catalog: &IndexCatalog,
    truth: &GroundTruth,
    params: &BenchParams,
) -> Result<Vec<BenchRow>> {
    if truth.n_patches != store.n_rows() {
        return Err(Error::InvalidRequest("ground truth does not describe this store".into()));
    }
    let mut rows = Vec::new();
    for q in 0..params.queries {
        for &s in &params.selectivities {
            if s >= 1.0 {
                rows.extend(universal_rows(store, catalog, params, s)?);
                continue;
            }
            let Some(class) = truth.closest_class(s) else {
                continue;
            };
            let query_seed = seed::derive_seed(params.seed, q as u64);
            for &kind in &params.models {
                let request = planted_request(truth, class.class, params, kind, query_seed)?;
                if kind == ModelKind::Dbranch {
                    rows.extend(branch_rows(&request, store, catalog, params, s, class.class)?);
                    continue;
                }
                let (mut train, mut infer, mut total) = (Vec::new(), Vec::new(), Vec::new());
                let mut n_results = 0;
                for _ in 0..params.repetitions.max(1) {
                    let resp = execute_search(&request, store, catalog, &params.config).map_err(|e| e.error)?;
                    train.push(resp.stats.train_ms);
                    infer.push(resp.stats.infer_ms);
                    total.push(resp.stats.total_ms);
                    n_results = resp.stats.n_results;
                }
                rows.push(BenchRow {
                    model: kind.to_string(),
                    n: store.n_rows(),
                    selectivity: s,
                    class: Some(class.class),
                    train_ms: median(&mut train),
                    infer_ms: median(&mut infer),
                    total_ms: median(&mut total),
                    n_results,
                    agreement: None,
                });
            }
        }
    }
    Ok(rows)
}
