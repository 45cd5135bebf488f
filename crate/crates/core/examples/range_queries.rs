//! Range and nearest-neighbour queries on a k-d tree over a feature subset.

use std::sync::Arc;

use boxsearch::index::{KdIndex, QueryBox};
use boxsearch::matrix::Matrix;
use boxsearch::store::FeatureStore;
use boxsearch::subset::FeatureSubset;
use boxsearch::synth::grid_records;
use rand::{Rng, SeedableRng};

fn main() -> boxsearch::error::Result<()> {
    let (n, d) = (200_000usize, 16usize);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let data: Vec<f32> = (0..n * d).map(|_| rng.random()).collect();
    let store = Arc::new(FeatureStore::from_matrix(Matrix::new(data, n, d), grid_records(n as u64, 500))?);

    let subset = FeatureSubset::new(vec![2, 5, 9, 11, 13, 14], d as u32)?;
    let index = KdIndex::build(store.clone(), subset.clone(), 32)?;
    println!("index over {subset}: {} nodes, {} leaves, depth {}", index.node_count(), index.leaf_count(), index.depth());

    // 0.2 < f2 <= 0.4 and f9 <= 0.1; other sides open.
    let inf = f32::INFINITY;
    let qbox = QueryBox::new(
        subset.clone(),
        vec![0.2, -inf, -inf, -inf, -inf, -inf],
        vec![0.4, inf, 0.1, inf, inf, inf],
    )?;
    println!("{}", qbox.to_sql());
    let (ids, stats) = index.range_query_with_stats(&qbox)?;
    let scanned = (0..store.n_rows()).filter(|&id| qbox.contains_row(store.row(id))).count();
    println!(
        "{} hits (scan agrees: {}), {} nodes visited, {} points tested, {} reported in bulk",
        ids.len(),
        scanned == ids.len(),
        stats.nodes_visited,
        stats.ids_inspected,
        stats.ids_bulk
    );

    let point = [0.5f32; 6];
    for nb in index.knn_query(&point, 5)? {
        println!("neighbour {:>6} at distance {:.4}", nb.id, nb.distance);
    }
    Ok(())
}
