//! Acceptance gate: one PASS/FAIL line per primary criterion.
//! Runs without the test harness so the lines always reach stdout.

mod common;

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Instant;

use boxsearch::bench::{median, planted_request, BenchParams};
use boxsearch::classifier::*;
use boxsearch::index::{CatalogParams, IndexCatalog, KdIndex, QueryBox};
use boxsearch::matrix::Matrix;
use boxsearch::query::*;
use boxsearch::store::{FeatureStore, Fingerprint};
use boxsearch::subset::FeatureSubset;
use boxsearch::synth::{self, GroundTruth, SynthParams};
use common::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { name, pass, detail }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

// ---------------------------------------------------------------- range

/// Uniform values with a third of the coordinates snapped to a 1/16 lattice.
fn tie_heavy_points(r: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let data = (0..n * d)
        .map(|_| if r.random_bool(0.33) { r.random_range(0..17) as f32 / 16.0 } else { r.random::<f32>() })
        .collect();
    Matrix::new(data, n, d)
}

fn random_box(r: &mut ChaCha8Rng, d: usize, p_bounded: f64) -> (Vec<f32>, Vec<f32>) {
    let mut lower = vec![f32::NEG_INFINITY; d];
    let mut upper = vec![f32::INFINITY; d];
    for j in 0..d {
        if r.random_bool(p_bounded) {
            let c: f32 = r.random();
            let w: f32 = r.random_range(0.2..1.2);
            lower[j] = c - w / 2.0;
            upper[j] = c + w / 2.0;
        }
    }
    (lower, upper)
}

/// Bounds drawn from stored coordinates, their float neighbours, lattice
/// values, infinities and degenerate sides.
fn boundary_box(r: &mut ChaCha8Rng, store: &FeatureStore, dims: &[u32]) -> (Vec<f32>, Vec<f32>) {
    let n = store.n_rows();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for &d in dims {
        let pick = |r: &mut ChaCha8Rng| -> f32 {
            let v = store.value(r.random_range(0..n), d);
            match r.random_range(0..6) {
                0 => v.next_up(),
                1 => v.next_down(),
                2 => r.random_range(0..17) as f32 / 16.0,
                _ => v,
            }
        };
        let (mut a, mut b) = (pick(r), pick(r));
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        match r.random_range(0..10) {
            0 => a = f32::NEG_INFINITY,
            1 => b = f32::INFINITY,
            2 => b = a,
            3 if dims.len() > 2 => {
                a = f32::NEG_INFINITY;
                b = f32::INFINITY;
            }
            _ => {}
        }
        lower.push(a);
        upper.push(b);
    }
    (lower, upper)
}

fn range_exactness() -> Outcome {
    let t = Instant::now();
    let mut r = rng(0xa11);
    let store = store_from(tie_heavy_points(&mut r, 100_000, 16));
    let subsets = [FeatureSubset::full(16), FeatureSubset::new(vec![1, 4, 7, 9, 12, 15], 16).unwrap()];
    let (mut checked, mut mismatches, mut nonempty) = (0, 0, 0);
    for subset in subsets {
        let index = KdIndex::build(store.clone(), subset.clone(), 32).unwrap();
        let dims = subset.dims().to_vec();
        let p = if dims.len() > 8 { 0.3 } else { 0.6 };
        for i in 0..1100 {
            let (lower, upper) =
                if i < 1000 { random_box(&mut r, dims.len(), p) } else { boundary_box(&mut r, &store, &dims) };
            let qbox = QueryBox::new(subset.clone(), lower.clone(), upper.clone()).unwrap();
            let got = index.range_query(&qbox).unwrap();
            let want = brute_range(&store, &dims, &lower, &upper);
            checked += 1;
            nonempty += !want.is_empty() as u32;
            mismatches += (got != want) as u32;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        "range-query exactness",
        mismatches == 0 && secs < 60.0,
        format!("{checked} boxes ({nonempty} non-empty) on 1e5 x 16, {mismatches} mismatches, {secs:.1} s (limit 60 s)"),
    )
}

// ---------------------------------------------------------------- knn

fn knn_exactness() -> Outcome {
    let mut r = rng(0xc0ffee);
    let n = 10_000;
    let d = 8;
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && r.random_bool(0.2) {
            let src = rows[r.random_range(0..i)].clone();
            rows.push(src);
        } else {
            rows.push((0..d).map(|j| if j % 2 == 0 { r.random_range(0..5) as f32 / 4.0 } else { r.random() }).collect());
        }
    }
    let store = store_from(Matrix::from_rows(&rows).unwrap());
    let subsets = [FeatureSubset::full(8), FeatureSubset::new(vec![0, 2, 4], 8).unwrap()];
    let (mut checked, mut mismatches) = (0, 0);
    for subset in subsets {
        let index = KdIndex::build(store.clone(), subset.clone(), 16).unwrap();
        let dims = subset.dims().to_vec();
        for k in [1u32, 10, 1000] {
            for q in 0..40 {
                let point: Vec<f32> = if q % 2 == 0 {
                    let row = store.row(r.random_range(0..n as u64));
                    dims.iter().map(|&j| row[j as usize]).collect()
                } else {
                    dims.iter().map(|_| r.random_range(0..9) as f32 / 8.0).collect()
                };
                let got: Vec<(u64, f64)> =
                    index.knn_query(&point, k).unwrap().into_iter().map(|nb| (nb.id, nb.distance)).collect();
                checked += 1;
                mismatches += (got != brute_knn(&store, &dims, &point, k as usize)) as u32;
            }
        }
    }
    outcome(
        "kNN exactness",
        mismatches == 0,
        format!("{checked} queries, k in {{1, 10, 1000}}, 1e4 points with ~20% duplicates, {mismatches} mismatches"),
    )
}

// ---------------------------------------------------------------- fig. 2

fn figure_two_boxes() -> Outcome {
    let split = |dim, threshold, left, right| TreeNode::Split { dim, threshold, left, right };
    let leaf = |positive| TreeNode::Leaf { positive };
    let tree = TreeModel::from_nodes(vec![
        split(2, 3.1, 1, 8),
        split(2, 2.4, 2, 7),
        split(1, 3.4, 3, 4),
        leaf(false),
        split(2, 2.1, 5, 6),
        leaf(true),
        leaf(false),
        leaf(true),
        leaf(false),
    ])
    .unwrap();
    let s = FeatureSubset::new(vec![1, 2], 3).unwrap();
    let boxes = extract_boxes(&tree, &s).unwrap();
    let inf = f32::INFINITY;
    let b1 = QueryBox::new(s.clone(), vec![-inf, 2.4], vec![inf, 3.1]).unwrap();
    let b2 = QueryBox::new(s.clone(), vec![3.4, -inf], vec![inf, 2.1]).unwrap();
    let pass = boxes.len() == 2 && boxes.contains(&b1) && boxes.contains(&b2);
    let shown: Vec<String> = boxes.iter().map(|b| b.to_sql()).collect();
    outcome("Fig. 2 box extraction", pass, format!("{shown:?}"))
}

// ---------------------------------------------------------------- path/box

fn path_box_equivalence() -> Outcome {
    let mut r = rng(0xb0c5);
    let (n, d) = (100_000usize, 12usize);
    let store = store_from(Matrix::new((0..n * d).map(|_| r.random_range(0..9) as f32 * 0.5).collect(), n, d));
    let catalog =
        IndexCatalog::build(&store, CatalogParams { n_indexes: 20, subset_size: 4, seed: 1, leaf_size: 32 }).unwrap();
    let (mut trees, mut evaluated, mut mismatches, mut overlaps, mut boxes) = (0, 0u64, 0u64, 0u64, 0usize);
    for t in 0..100u64 {
        let m = r.random_range(20..200);
        let ids = sample_distinct(&mut r, &(0..n as u64).collect::<Vec<_>>(), m);
        let p = r.random_range(0.1..0.6);
        let mut samples: Vec<LabeledSample> = ids
            .iter()
            .map(|&id| if r.random_bool(p) { LabeledSample::positive(id) } else { LabeledSample::negative(id) })
            .collect();
        samples[0] = LabeledSample::positive(ids[0]);
        samples[1] = LabeledSample::negative(ids[1]);
        let model = train_branch_model(&samples, &store, &catalog, 3, t).unwrap();
        trees += 1;
        boxes += model.boxes().len();
        let mut row = vec![0f32; d];
        for _ in 0..100_000 {
            for v in row.iter_mut() {
                *v = r.random_range(-1..18) as f32 * 0.25;
            }
            let hits = model.box_hits(&row);
            evaluated += 1;
            overlaps += (hits > 1) as u64;
            mismatches += (model.predict_row(&row) != (hits == 1)) as u64;
        }
    }
    outcome(
        "path/box equivalence",
        mismatches == 0 && overlaps == 0,
        format!("{trees} trees ({boxes} boxes), {evaluated} points, {mismatches} mismatches, {overlaps} overlaps"),
    )
}

// ---------------------------------------------------------------- desk-scale corpus

struct Desk {
    store: Arc<FeatureStore>,
    catalog: IndexCatalog,
    truth: GroundTruth,
}

/// 10^6 patches x 64 dims, four planted classes of 1,000 (0.1%), 50 indexes of d' = 6.
fn desk_corpus() -> Desk {
    let t = Instant::now();
    let ds = synth::generate(&SynthParams {
        n_patches: 1_000_000,
        n_dims: 64,
        planted_fractions: vec![0.001],
        seed: 2024,
        ..SynthParams::default()
    })
    .unwrap();
    let store = Arc::new(FeatureStore::from_matrix(ds.features, ds.records).unwrap());
    let gen_ms = ms_since(t);
    let t = Instant::now();
    let catalog =
        IndexCatalog::build(&store, CatalogParams { n_indexes: 50, subset_size: 6, seed: 7, leaf_size: 32 }).unwrap();
    println!("desk corpus: generated in {:.1} s, 50 indexes built in {:.1} s", gen_ms / 1e3, ms_since(t) / 1e3);
    Desk { store, catalog, truth: ds.ground_truth }
}

fn sorted(mut v: Vec<u64>) -> Vec<u64> {
    v.sort_unstable();
    v
}

fn indexed_equals_scan(desk: &Desk) -> Outcome {
    let cfg = EngineConfig::default();
    let (mut checked, mut mismatches, mut largest) = (0, 0, 0usize);
    let mut check = |req: &SearchRequest, store: &FeatureStore, catalog: &IndexCatalog| {
        let resp = execute_search(req, store, catalog, &cfg).unwrap();
        let samples = augment_negatives(req, store).unwrap().samples();
        let model = train_branch_model(&samples, store, catalog, cfg.n_candidate_subsets, req.seed).unwrap();
        let scan: Vec<u64> = predict_scan(&model, store).unwrap().into_iter().map(|h| h.0).collect();
        let (hits, _) = indexed_hits([&model], catalog).unwrap();
        let indexed = sorted(hits.into_keys().collect());
        checked += 1;
        largest = largest.max(scan.len());
        mismatches += (sorted(resp.ids()) != scan || indexed != scan) as u32;
    };

    for &n in &[1_000u64, 10_000, 100_000] {
        let ds = synth(n, 32, 0.01, n);
        let store = synth_store(&ds);
        let catalog =
            IndexCatalog::build(&store, CatalogParams { n_indexes: 10, subset_size: 4, seed: 3, leaf_size: 32 }).unwrap();
        let mut r = rng(n);
        for q in 0..8u64 {
            let req = if q % 2 == 0 {
                let class = &ds.ground_truth.classes[(q / 2) as usize].ids;
                SearchRequest {
                    n_random_negatives: 50,
                    seed: q,
                    ..SearchRequest::new(sample_distinct(&mut r, class, 8), sample_distinct(&mut r, &background_ids(&ds), 40), ModelKind::Dbranch)
                }
            } else {
                random_label_request(&mut r, n, q)
            };
            check(&req, &store, &catalog);
        }
    }
    let params = BenchParams::default();
    for c in 0..4u32 {
        for s in 0..2u64 {
            let req = planted_request(&desk.truth, c, &params, ModelKind::Dbranch, 100 + s).unwrap();
            check(&req, &desk.store, &desk.catalog);
        }
    }
    let mut r = rng(77);
    for q in 0..4 {
        check(&random_label_request(&mut r, desk.store.n_rows(), q), &desk.store, &desk.catalog);
    }
    outcome(
        "indexed-vs-scan equivalence",
        mismatches == 0,
        format!("{checked} dbranch searches on N in {{1e3, 1e4, 1e5, 1e6}}, largest result {largest}, {mismatches} mismatches"),
    )
}

/// Labels with no structure, so trees grow many boxes.
fn random_label_request(r: &mut ChaCha8Rng, n: u64, seed: u64) -> SearchRequest {
    let ids = sample_distinct(r, &(0..n).collect::<Vec<_>>(), 60);
    let (pos, neg): (Vec<u64>, Vec<u64>) = ids.iter().partition(|_| r.random_bool(0.3));
    let (pos, neg) = if pos.is_empty() { (neg[..1].to_vec(), neg[1..].to_vec()) } else { (pos, neg) };
    let neg = if neg.is_empty() { vec![(0..n).find(|i| !pos.contains(i)).unwrap()] } else { neg };
    SearchRequest { n_random_negatives: 20, seed, ..SearchRequest::new(pos, neg, ModelKind::Dbranch) }
}

fn index_awareness() -> Outcome {
    let mut r = rng(0x1dea);
    let mut stores = Vec::new();
    for (seed, d) in [(1u64, 24u32), (2, 40)] {
        let ds = synth(3000, d, 0.02, seed);
        let store = synth_store(&ds);
        let catalog = IndexCatalog::build(&store, CatalogParams { n_indexes: 12, subset_size: 4, seed, leaf_size: 16 })
            .unwrap();
        stores.push((ds, store, catalog));
    }
    let (mut runs, mut models, mut violations) = (0, 0, 0);
    for run in 0..1000u64 {
        let (ds, store, catalog) = &stores[(run % 2) as usize];
        let subsets: HashSet<&FeatureSubset> = catalog.subsets().collect();
        let req = if run % 3 == 0 {
            random_label_request(&mut r, store.n_rows(), run)
        } else {
            let class = &ds.ground_truth.classes[r.random_range(0..4)].ids;
            let (n_pos, n_neg) = (r.random_range(1..15), r.random_range(1..40));
            let pos = sample_distinct(&mut r, class, n_pos);
            let neg = sample_distinct(&mut r, &background_ids(ds), n_neg);
            SearchRequest {
                n_random_negatives: r.random_range(0..60),
                seed: run,
                ..SearchRequest::new(pos, neg, ModelKind::Dbranch)
            }
        };
        let samples = augment_negatives(&req, store).unwrap().samples();
        let candidates = r.random_range(1..=12);
        let trained: Vec<BranchModel> = if run % 2 == 0 {
            vec![train_branch_model(&samples, store, catalog, candidates, run).unwrap()]
        } else {
            train_ensemble(&samples, store, catalog, 5, candidates, run).unwrap().members().to_vec()
        };
        runs += 1;
        for m in &trained {
            models += 1;
            let bound = &catalog.entries()[m.catalog_position()].subset;
            let ok = subsets.contains(m.subset())
                && bound == m.subset()
                && m.boxes().iter().all(|b| b.subset() == m.subset());
            violations += !ok as u32;
        }
    }
    outcome(
        "index-awareness",
        violations == 0 && runs == 1000,
        format!("{runs} training runs, {models} branch models, {violations} bound to a non-catalog subset"),
    )
}

fn speed(desk: &Desk) -> Outcome {
    let cfg = EngineConfig::default();
    let params = BenchParams::default();
    let mut worst_total: f64 = 0.0;
    let mut worst_ratio = f64::INFINITY;
    let mut lines = Vec::new();
    for c in 0..4u32 {
        let req = planted_request(&desk.truth, c, &params, ModelKind::Dbranch, 500 + c as u64).unwrap();
        let (mut total, mut idx, mut scan) = (Vec::new(), Vec::new(), Vec::new());
        let mut n_results = 0;
        for _ in 0..5 {
            let resp = execute_search(&req, &desk.store, &desk.catalog, &cfg).unwrap();
            total.push(resp.stats.total_ms);
            n_results = resp.results.len();
            let samples = augment_negatives(&req, &desk.store).unwrap().samples();
            let model =
                train_branch_model(&samples, &desk.store, &desk.catalog, cfg.n_candidate_subsets, req.seed).unwrap();
            let t = Instant::now();
            let hits = indexed_hits([&model], &desk.catalog).unwrap();
            idx.push(ms_since(t));
            let t = Instant::now();
            let scanned = predict_scan(&model, &desk.store).unwrap();
            scan.push(ms_since(t));
            assert_eq!(hits.0.len(), scanned.len());
        }
        let (total, idx, scan) = (median(&mut total), median(&mut idx), median(&mut scan));
        let ratio = scan / idx.max(1e-6);
        let selectivity = n_results as f64 / desk.store.n_rows() as f64;
        worst_total = worst_total.max(total);
        worst_ratio = worst_ratio.min(ratio);
        lines.push(format!(
            "class {c}: selectivity {:.3}%, end-to-end {total:.1} ms, indexed {idx:.2} ms vs scan {scan:.1} ms ({ratio:.0}x)",
            selectivity * 100.0
        ));
        if selectivity > 0.001 {
            worst_ratio = 0.0;
        }
    }
    for l in &lines {
        println!("    {l}");
    }
    outcome(
        "speed",
        worst_total <= 2000.0 && worst_ratio >= 10.0,
        format!("N=1e6, D=64, 50 indexes of d'=6: worst end-to-end {worst_total:.1} ms (limit 2000), worst indexed speedup {worst_ratio:.1}x (limit 10x), medians of 5"),
    )
}

fn ensemble_quality(desk: &Desk) -> Outcome {
    let cfg = EngineConfig::default();
    let params = BenchParams::default();
    let (mut min_recall, mut min_precision) = (1.0f64, 1.0f64);
    let mut queries = 0;
    for c in 0..4u32 {
        let planted: HashSet<u64> = desk.truth.classes[c as usize].ids.iter().copied().collect();
        for s in 0..3u64 {
            let req = planted_request(&desk.truth, c, &params, ModelKind::DbranchEns, 900 + 10 * c as u64 + s).unwrap();
            assert_eq!((req.positives.len(), req.negatives.len(), req.n_random_negatives), (20, 100, 200));
            let resp = execute_search(&req, &desk.store, &desk.catalog, &cfg).unwrap();
            let found = resp.results.iter().filter(|r| planted.contains(&r.id)).count() as f64;
            let recall = found / planted.len() as f64;
            let precision = if resp.results.is_empty() { 0.0 } else { found / resp.results.len() as f64 };
            min_recall = min_recall.min(recall);
            min_precision = min_precision.min(precision);
            queries += 1;
        }
    }
    outcome(
        "ensemble retrieval quality",
        min_recall >= 0.95 && min_precision >= 0.95,
        format!("{queries} dbranch_ens queries (25 members; 20 pos + 100 neg + 200 random): min recall {:.2}%, min precision {:.2}% (limit 95%)", min_recall * 100.0, min_precision * 100.0),
    )
}

// ---------------------------------------------------------------- sessions

fn session_round_trip() -> Outcome {
    let mut r = rng(0x5e55);
    let n_rows = 1_000_000u64;
    let mut failures = 0;
    for _ in 0..100 {
        let k = r.random_range(1..80);
        let ids = sample_distinct(&mut r, &(0..5000u64).map(|i| i * 199 % n_rows).collect::<Vec<_>>(), k);
        let split = r.random_range(1..=ids.len());
        let mut positives = ids[..split].to_vec();
        let mut negatives = ids[split..].to_vec();
        positives.reverse();
        if r.random_bool(0.5) {
            negatives.reverse();
        }
        let fingerprint = r.random_bool(0.8).then(|| Fingerprint(r.random()));
        let req = SearchRequest {
            positives,
            negatives,
            model_kind: ModelKind::ALL[r.random_range(0..5)],
            n_random_negatives: r.random(),
            seed: r.random(),
        };
        let session = QuerySession::from_request(&req, fingerprint);
        let back = import_session(&export_session(&session), n_rows, fingerprint.unwrap_or(Fingerprint(0)));
        if !matches!(back, Ok(ref b) if b.session == session && b.session.to_request() == req) {
            failures += 1;
        }
    }
    outcome("session round-trip", failures == 0, format!("100 random sessions, {failures} differ after import(export(s))"))
}

fn main() {
    let mut results = vec![
        range_exactness(),
        knn_exactness(),
        figure_two_boxes(),
        path_box_equivalence(),
    ];
    let desk = desk_corpus();
    results.push(indexed_equals_scan(&desk));
    results.push(index_awareness());
    results.push(speed(&desk));
    results.push(ensemble_quality(&desk));
    results.push(session_round_trip());

    let failed: Vec<String> = results.iter().filter(|o| !o.pass).map(|o| format!("{}: {}", o.name, o.detail)).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:#?}");
        std::process::exit(1);
    }
}
