#![allow(dead_code)]

use std::sync::Arc;

use boxsearch::matrix::Matrix;
use boxsearch::store::{FeatureStore, PatchRecord};
use boxsearch::synth::{generate, SynthDataset, SynthParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn records(n: usize) -> Vec<PatchRecord> {
    (0..n as u64)
        .map(|id| PatchRecord {
            id,
            grid_row: (id / 100) as i64,
            grid_col: (id % 100) as i64,
            geo_x: id as f64,
            geo_y: 0.0,
            image_ref: String::new(),
        })
        .collect()
}

pub fn store_from(matrix: Matrix) -> Arc<FeatureStore> {
    let n = matrix.n_rows();
    Arc::new(FeatureStore::from_matrix(matrix, records(n)).unwrap())
}

/// Points on a coarse lattice so that coordinate ties are frequent.
pub fn lattice_points(n: usize, d: usize, levels: u32, seed: u64) -> Matrix {
    let mut r = rng(seed);
    let data = (0..n * d).map(|_| r.random_range(0..levels) as f32 / 4.0).collect();
    Matrix::new(data, n, d)
}

pub fn uniform_points(n: usize, d: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    let data = (0..n * d).map(|_| r.random::<f32>()).collect();
    Matrix::new(data, n, d)
}

/// Ids `i` with `lower[j] < x[i][dims[j]] <= upper[j]` for all `j`, by exhaustive scan.
pub fn brute_range(store: &FeatureStore, dims: &[u32], lower: &[f32], upper: &[f32]) -> Vec<u64> {
    let mut out = Vec::new();
    for id in 0..store.n_rows() {
        let row = store.row(id);
        let mut inside = true;
        for j in 0..dims.len() {
            let x = row[dims[j] as usize];
            if !(lower[j] < x && x <= upper[j]) {
                inside = false;
                break;
            }
        }
        if inside {
            out.push(id);
        }
    }
    out
}

/// All ids sorted by `(squared distance, id)`, truncated to `k`.
pub fn brute_knn(store: &FeatureStore, dims: &[u32], point: &[f32], k: usize) -> Vec<(u64, f64)> {
    let mut all: Vec<(f64, u64)> = (0..store.n_rows())
        .map(|id| {
            let row = store.row(id);
            let d2: f64 = dims
                .iter()
                .zip(point)
                .map(|(&d, &q)| (row[d as usize] as f64 - q as f64).powi(2))
                .sum();
            (d2, id)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all.into_iter().map(|(d2, id)| (id, d2.sqrt())).collect()
}

pub fn synth(n: u64, d: u32, fraction: f64, seed: u64) -> SynthDataset {
    generate(&SynthParams {
        n_patches: n,
        n_dims: d,
        planted_fractions: vec![fraction],
        seed,
        ..SynthParams::default()
    })
    .unwrap()
}

pub fn synth_store(ds: &SynthDataset) -> Arc<FeatureStore> {
    Arc::new(FeatureStore::from_matrix(ds.features.clone(), ds.records.clone()).unwrap())
}

pub fn sample_distinct(r: &mut ChaCha8Rng, pool: &[u64], k: usize) -> Vec<u64> {
    let idx = rand::seq::index::sample(r, pool.len(), k.min(pool.len()));
    let mut v: Vec<u64> = idx.into_iter().map(|i| pool[i]).collect();
    v.sort_unstable();
    v
}

/// Background ids (no planted class).
pub fn background_ids(ds: &SynthDataset) -> Vec<u64> {
    ds.labels.iter().enumerate().filter(|(_, l)| l.is_none()).map(|(i, _)| i as u64).collect()
}
