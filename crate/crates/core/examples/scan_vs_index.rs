//! Time every model on one planted-class query, and compare indexed inference
//! with a full scan of the same branch model.

use std::sync::Arc;

use boxsearch::bench::{run_bench, to_tsv, BenchParams};
use boxsearch::index::{CatalogParams, IndexCatalog};
use boxsearch::store::FeatureStore;
use boxsearch::synth::{generate, SynthParams};

fn main() -> boxsearch::error::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200_000);
    let ds = generate(&SynthParams { n_patches: n, n_dims: 64, planted_fractions: vec![0.001], seed: 3, ..SynthParams::default() })?;
    let store = Arc::new(FeatureStore::from_matrix(ds.features, ds.records)?);
    let catalog = IndexCatalog::build(&store, CatalogParams { n_indexes: 50, subset_size: 6, seed: 0, leaf_size: 32 })?;
    let rows = run_bench(&store, &catalog, &ds.ground_truth, &BenchParams { repetitions: 3, ..BenchParams::default() })?;
    print!("{}", to_tsv(&rows));
    Ok(())
}
