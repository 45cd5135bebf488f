//! Exact k-d tree indexes over feature subsets and the catalog of pre-built indexes.

mod catalog;
mod io;
mod kdtree;
mod query_box;

pub use catalog::{draw_subsets, CatalogEntry, CatalogParams, IndexCatalog, CATALOG_MANIFEST};
pub use io::INDEX_MAGIC;
pub use kdtree::{KdIndex, Neighbor, RangeStats, DEFAULT_LEAF_SIZE};
pub use query_box::QueryBox;
