use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::index::{IndexCatalog, Neighbor};
use crate::store::FeatureStore;

use super::LabeledSample;

pub const DEFAULT_KNN_K: u32 = 1000;

/// Centroid of the positive samples on the first catalog subset.
pub fn positive_centroid(samples: &[LabeledSample], store: &FeatureStore, catalog: &IndexCatalog) -> Result<Vec<f32>> {
    let entry = catalog.entries().first().ok_or_else(|| Error::Train("the index catalog is empty".into()))?;
    let positives: Vec<u64> = samples.iter().filter(|s| s.label.is_positive()).map(|s| s.id).collect();
    if positives.is_empty() {
        return Err(Error::Train("the nearest-neighbor baseline needs a positive sample".into()));
    }
    let x = store.project_columns(entry.subset.dims(), Some(&positives))?;
    let mut sum = vec![0.0f64; x.n_cols()];
    for row in x.rows() {
        for (s, &v) in sum.iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    Ok(sum.into_iter().map(|s| (s / positives.len() as f64) as f32).collect())
}

/// The `k` unlabeled points nearest to the positive centroid, ascending by `(distance, id)`.
pub fn knn_baseline(
    samples: &[LabeledSample],
    store: &FeatureStore,
    catalog: &IndexCatalog,
    k: u32,
) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(Error::InvalidRequest("k must be at least 1".into()));
    }
    let query = positive_centroid(samples, store, catalog)?;
    let labeled: HashSet<u64> = samples.iter().map(|s| s.id).collect();
    let fetch = (k as u64 + labeled.len() as u64).min(store.n_rows()).min(u32::MAX as u64) as u32;
    let index = &catalog.entries()[0].index;
    let mut out: Vec<Neighbor> = index
        .knn_query(&query, fetch)?
        .into_iter()
        .filter(|n| !labeled.contains(&n.id))
        .collect();
    out.truncate(k as usize);
    Ok(out)
}
