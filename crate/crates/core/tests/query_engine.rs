mod common;

use std::collections::HashSet;
use std::sync::{Arc, OnceLock};

use boxsearch::classifier::{predict_scan, train_branch_model};
use boxsearch::error::Error;
use boxsearch::index::{CatalogParams, IndexCatalog};
use boxsearch::query::*;
use boxsearch::store::{FeatureStore, Fingerprint};
use boxsearch::synth::SynthDataset;
use common::*;

struct Fixture {
    ds: SynthDataset,
    store: Arc<FeatureStore>,
    catalog: IndexCatalog,
}

/// 10,000 patches with one planted class of 500.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let ds = boxsearch::synth::generate(&boxsearch::synth::SynthParams {
            n_patches: 10_000,
            n_dims: 32,
            n_planted_classes: 1,
            planted_fractions: vec![0.05],
            seed: 21,
            ..Default::default()
        })
        .unwrap();
        let store = synth_store(&ds);
        let catalog =
            IndexCatalog::build(&store, CatalogParams { n_indexes: 20, subset_size: 4, seed: 3, leaf_size: 32 })
                .unwrap();
        Fixture { ds, store, catalog }
    })
}

fn labeled_request(kind: ModelKind, n_pos: usize, n_neg: usize, seed: u64) -> SearchRequest {
    let f = fixture();
    let mut r = rng(seed);
    SearchRequest {
        positives: sample_distinct(&mut r, &f.ds.ground_truth.classes[0].ids, n_pos),
        negatives: sample_distinct(&mut r, &background_ids(&f.ds), n_neg),
        model_kind: kind,
        n_random_negatives: 0,
        seed,
    }
}

#[test]
fn augment_negatives_contract() {
    let f = fixture();
    let req = labeled_request(ModelKind::Dbranch, 5, 5, 1);
    assert_eq!(augment_negatives(&req, &f.store).unwrap(), req);
    let more = SearchRequest { n_random_negatives: 5, ..req.clone() };
    let a = augment_negatives(&more, &f.store).unwrap();
    assert_eq!(a.negatives.len(), req.negatives.len() + 5);
    let pos: HashSet<u64> = a.positives.iter().copied().collect();
    assert!(a.negatives.iter().all(|n| !pos.contains(n)));
    assert_eq!(a.negatives.iter().collect::<HashSet<_>>().len(), a.negatives.len());
    assert_eq!(augment_negatives(&more, &f.store).unwrap(), a);
    let too_many = SearchRequest { n_random_negatives: 10_000, ..req };
    assert!(matches!(augment_negatives(&too_many, &f.store), Err(Error::Sample(_))));
}

#[test]
fn dbranch_recovers_planted_region() {
    let f = fixture();
    let req = labeled_request(ModelKind::Dbranch, 50, 200, 2);
    let resp = execute_search(&req, &f.store, &f.catalog, &EngineConfig::default()).unwrap();
    let ids: HashSet<u64> = resp.ids().into_iter().collect();
    let planted = &f.ds.ground_truth.classes[0].ids;
    assert!(planted.iter().all(|p| ids.contains(p)), "missed planted ids");
    assert!(req.negatives.iter().all(|n| !ids.contains(n)));
    assert_eq!(resp.stats.n_results as usize, resp.results.len());
    assert_eq!(resp.stats.n_boxes, resp.stats.n_range_queries);
    for w in resp.results.windows(2) {
        assert!((w[0].confidence, std::cmp::Reverse(w[0].id)) >= (w[1].confidence, std::cmp::Reverse(w[1].id)));
    }
    let pos: HashSet<u64> = req.positives.iter().copied().collect();
    assert!(resp.results.iter().all(|r| r.in_training == pos.contains(&r.id)));

    // Indexed path and scan path agree.
    let samples = augment_negatives(&req, &f.store).unwrap().samples();
    let model = train_branch_model(&samples, &f.store, &f.catalog, 10, req.seed).unwrap();
    let scan: Vec<u64> = predict_scan(&model, &f.store).unwrap().into_iter().map(|h| h.0).collect();
    let mut got = resp.ids();
    got.sort_unstable();
    assert_eq!(got, scan);
}

#[test]
fn refinement_is_deterministic() {
    let f = fixture();
    for kind in ModelKind::ALL {
        let req = SearchRequest { n_random_negatives: 30, ..labeled_request(kind, 10, 40, 5) };
        let cfg = EngineConfig { ensemble_size: 5, forest_size: 5, knn_k: 100, ..EngineConfig::default() };
        let a = execute_search(&req, &f.store, &f.catalog, &cfg).unwrap();
        let b = execute_search(&req, &f.store, &f.catalog, &cfg).unwrap();
        assert_eq!(a.results, b.results, "{kind}");
        assert_eq!(a.stats.n_results, b.stats.n_results);
        assert!(a.stats.train_ms >= 0.0 && a.stats.infer_ms >= 0.0 && a.stats.total_ms >= 0.0);
        if !matches!(kind, ModelKind::Dbranch | ModelKind::DbranchEns) {
            assert_eq!((a.stats.n_boxes, a.stats.n_range_queries), (0, 0));
        }
    }
}

#[test]
fn ensemble_counts_queries_per_box() {
    let f = fixture();
    let req = labeled_request(ModelKind::DbranchEns, 20, 100, 6);
    let resp = execute_search(&req, &f.store, &f.catalog, &EngineConfig::default()).unwrap();
    assert_eq!(resp.stats.n_boxes, resp.stats.n_range_queries);
    assert!(resp.stats.n_boxes >= 25);
    assert!(resp.results.iter().all(|r| r.confidence >= 1 && r.confidence <= resp.stats.n_boxes));
}

#[test]
fn knn_returns_k_unlabeled_neighbors() {
    let f = fixture();
    let req = labeled_request(ModelKind::Knn, 5, 5, 7);
    let resp = execute_search(&req, &f.store, &f.catalog, &EngineConfig::default()).unwrap();
    assert_eq!(resp.results.len(), 1000);
    assert_eq!(resp.results[0].confidence, 1000);
    assert_eq!(resp.results[999].confidence, 1);
    assert!(resp.results.iter().all(|r| !r.in_training));
    let cfg = EngineConfig { knn_k: 20_000, ..EngineConfig::default() };
    let all = execute_search(&req, &f.store, &f.catalog, &cfg).unwrap();
    assert_eq!(all.results.len(), 10_000 - 10);
}

#[test]
fn errors_carry_their_stage() {
    let f = fixture();
    let cfg = EngineConfig::default();
    let empty = SearchRequest::new(vec![], vec![1], ModelKind::Dbranch);
    let e = execute_search(&empty, &f.store, &f.catalog, &cfg).unwrap_err();
    assert_eq!(e.stage, Stage::Validate);
    assert!(matches!(e.error, Error::Train(_)));

    let overlap = SearchRequest::new(vec![1], vec![1], ModelKind::Dbranch);
    let e = execute_search(&overlap, &f.store, &f.catalog, &cfg).unwrap_err();
    assert!(matches!(e.error, Error::InvalidRequest(_)));

    let no_neg = SearchRequest::new(vec![1], vec![], ModelKind::Dbranch);
    let e = execute_search(&no_neg, &f.store, &f.catalog, &cfg).unwrap_err();
    assert_eq!(e.stage, Stage::Train);

    let other = store_from(uniform_points(100, 32, 0));
    let e = execute_search(&labeled_request(ModelKind::Dbranch, 1, 1, 0), &other, &f.catalog, &cfg);
    assert!(e.is_err());
}

#[test]
fn full_width_subset_matches_tree_scan() {
    // With a single catalog subset covering every column, dtree and dbranch
    // train the same tree and must return the same ids.
    let ds = synth(3000, 6, 0.05, 4);
    let store = synth_store(&ds);
    let catalog =
        IndexCatalog::build(&store, CatalogParams { n_indexes: 1, subset_size: 6, seed: 0, leaf_size: 16 }).unwrap();
    let mut r = rng(3);
    let req = SearchRequest {
        positives: sample_distinct(&mut r, &ds.ground_truth.classes[0].ids, 20),
        negatives: sample_distinct(&mut r, &background_ids(&ds), 100),
        model_kind: ModelKind::Dbranch,
        n_random_negatives: 50,
        seed: 9,
    };
    let cfg = EngineConfig::default();
    let a = execute_search(&req, &store, &catalog, &cfg).unwrap();
    let b = execute_search(&SearchRequest { model_kind: ModelKind::Dtree, ..req }, &store, &catalog, &cfg).unwrap();
    let (mut x, mut y) = (a.ids(), b.ids());
    x.sort_unstable();
    y.sort_unstable();
    assert_eq!(x, y);
}

#[test]
fn sessions() {
    let fp = Fingerprint(0x1234);
    let minimal = r#"{"positives":[0],"negatives":[],"model":"dbranch","n_random_negatives":0,"seed":1}"#;
    let s = import_session(minimal, 10, fp).unwrap();
    assert_eq!(s.session.positives, vec![0]);
    assert_eq!(s.session.version, SESSION_VERSION);

    let req = SearchRequest { n_random_negatives: 7, seed: 99, ..SearchRequest::new(vec![5, 2], vec![8], ModelKind::Rforest) };
    let session = QuerySession::from_request(&req, Some(fp));
    let doc = export_session(&session);
    let v: serde_json::Value = serde_json::from_str(&doc).unwrap();
    let keys: HashSet<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    let expected: HashSet<&str> =
        ["version", "dataset_fingerprint", "positives", "negatives", "model_kind", "n_random_negatives", "seed"].into();
    assert_eq!(keys, expected);
    let back = import_session(&doc, 10, fp).unwrap();
    assert_eq!(back.session, session);
    assert!(back.warnings.is_empty());
    assert_eq!(import_session(&doc, 10, Fingerprint(1)).unwrap().warnings.len(), 1);
    assert!(matches!(import_session(&doc, 8, fp), Err(Error::Format(_))));
    assert!(matches!(import_session("[]", 10, fp), Err(Error::Format(_))));
}

#[test]
fn ranking_examples() {
    let recs = records(10);
    let none = HashSet::new();
    let order = |hits: &[(u64, u32)]| rank_results(hits, &recs, &none).unwrap().iter().map(|r| r.id).collect::<Vec<_>>();
    assert_eq!(order(&[(7, 1), (3, 2)]), vec![3, 7]);
    assert_eq!(order(&[(9, 1), (4, 1)]), vec![4, 9]);
    assert!(order(&[]).is_empty());
    assert!(matches!(rank_results(&[(11, 1)], &recs, &none), Err(Error::NotFound { id: 11 })));
}
