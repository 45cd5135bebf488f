//! Search with a bootstrap ensemble of branch models and rank by vote count.

use std::collections::HashSet;
use std::sync::Arc;

use boxsearch::index::{CatalogParams, IndexCatalog};
use boxsearch::query::{execute_search, EngineConfig, ModelKind, SearchRequest};
use boxsearch::store::FeatureStore;
use boxsearch::synth::{generate, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SynthParams { n_patches: 100_000, n_dims: 64, planted_fractions: vec![0.001], seed: 11, ..SynthParams::default() })?;
    let planted: HashSet<u64> = ds.ground_truth.classes[2].ids.iter().copied().collect();
    let negatives: Vec<u64> = (0..100_000).filter(|i| ds.labels[*i as usize].is_none()).step_by(997).take(100).collect();
    let store = Arc::new(FeatureStore::from_matrix(ds.features, ds.records)?);
    let catalog = IndexCatalog::build(&store, CatalogParams { n_indexes: 30, subset_size: 6, seed: 2, leaf_size: 32 })?;

    let request = SearchRequest {
        n_random_negatives: 200,
        seed: 4,
        ..SearchRequest::new(ds.ground_truth.classes[2].ids[..20].to_vec(), negatives, ModelKind::DbranchEns)
    };
    let response = execute_search(&request, &store, &catalog, &EngineConfig::default())?;
    let s = &response.stats;
    println!(
        "{} results, {} boxes, train {:.1} ms, infer {:.1} ms, total {:.1} ms",
        s.n_results, s.n_boxes, s.train_ms, s.infer_ms, s.total_ms
    );
    for r in response.results.iter().take(8) {
        println!(
            "  id {:>6}  votes {:>3}  geo ({:.0}, {:.0})  planted {}  labeled {}",
            r.id,
            r.confidence,
            r.geo_x,
            r.geo_y,
            planted.contains(&r.id),
            r.in_training
        );
    }
    let hits = response.results.iter().filter(|r| planted.contains(&r.id)).count();
    println!("recall {:.3}, precision {:.3}", hits as f64 / planted.len() as f64, hits as f64 / response.results.len().max(1) as f64);
    Ok(())
}
