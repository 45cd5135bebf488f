//! Write a store to disk, reopen it memory-mapped and read from it.

use std::collections::HashSet;

use boxsearch::store::{write_store, FeatureStore};
use boxsearch::synth::{generate, SynthParams};

fn main() -> boxsearch::error::Result<()> {
    let ds = generate(&SynthParams { n_patches: 5_000, n_dims: 32, seed: 1, ..SynthParams::default() })?;
    let dir = tempfile::tempdir()?;
    let manifest = write_store(&ds.features, &ds.records, dir.path())?;
    println!("wrote {} x {} (fingerprint {})", manifest.n_rows, manifest.n_dims, manifest.fingerprint);

    let store = FeatureStore::open(dir.path())?;
    println!("reopened: {} rows, {} dims, fingerprint {}", store.n_rows(), store.n_dims(), store.fingerprint());

    let r = store.record(42)?;
    println!("patch 42 at grid ({}, {}), geo ({:.0}, {:.0}), image {}", r.grid_row, r.grid_col, r.geo_x, r.geo_y, r.image_ref);
    println!("patch 42 first features: {:?}", &store.row(42)[..4]);

    let cols = store.project_columns(&[3, 7, 11], Some(&[0, 1, 2]))?;
    for (id, row) in cols.rows().enumerate() {
        println!("rows {id} on columns [3, 7, 11]: {row:?}");
    }

    let exclude: HashSet<u64> = (0..100).collect();
    let sample = store.sample_ids(5, &exclude, 9)?;
    println!("5 random ids outside 0..100: {sample:?}");
    Ok(())
}
