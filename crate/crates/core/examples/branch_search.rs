//! Train a single index-aware branch model and answer it with range queries.

use std::collections::HashSet;
use std::sync::Arc;

use boxsearch::classifier::{indexed_hits, predict_scan, train_branch_model, LabeledSample};
use boxsearch::index::{CatalogParams, IndexCatalog};
use boxsearch::store::FeatureStore;
use boxsearch::synth::{generate, SynthParams};

fn main() -> boxsearch::error::Result<()> {
    let ds = generate(&SynthParams { n_patches: 100_000, n_dims: 64, planted_fractions: vec![0.002], seed: 5, ..SynthParams::default() })?;
    let planted: HashSet<u64> = ds.ground_truth.classes[0].ids.iter().copied().collect();
    let store = Arc::new(FeatureStore::from_matrix(ds.features, ds.records)?);
    let catalog = IndexCatalog::build(&store, CatalogParams { n_indexes: 20, subset_size: 6, seed: 1, leaf_size: 32 })?;

    let mut samples: Vec<LabeledSample> = ds.ground_truth.classes[0].ids[..15].iter().map(|&id| LabeledSample::positive(id)).collect();
    samples.extend(ds.labels.iter().enumerate().filter(|(_, l)| l.is_none()).take(80).map(|(id, _)| LabeledSample::negative(id as u64)));

    let model = train_branch_model(&samples, &store, &catalog, 10, 7)?;
    let fit = model.training_fit();
    println!("bound to catalog index {} over {}, training F1 {:.3}", model.catalog_position(), model.subset(), fit.f1());
    for b in model.boxes() {
        println!("  {}", b.to_sql());
    }

    let (hits, n_queries) = indexed_hits([&model], &catalog)?;
    let found = hits.keys().filter(|id| planted.contains(id)).count();
    println!("{} results from {n_queries} range queries; {found} of {} planted patches found", hits.len(), planted.len());

    let scan = predict_scan(&model, &store)?;
    println!("full scan with the same model returns {} ids", scan.len());
    Ok(())
}
