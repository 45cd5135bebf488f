use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::store::{FeatureStore, Fingerprint};
use crate::subset::FeatureSubset;

use super::{KdIndex, DEFAULT_LEAF_SIZE};

pub const CATALOG_MANIFEST: &str = "catalog.toml";
const CATALOG_VERSION: u32 = 1;

/// Below this many possible subsets, draws enumerate them all and shuffle.
const ENUMERATION_LIMIT: u128 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogParams {
    pub n_indexes: u32,
    pub subset_size: u32,
    pub seed: u64,
    pub leaf_size: u32,
}

impl Default for CatalogParams {
    fn default() -> Self {
        CatalogParams { n_indexes: 50, subset_size: 6, seed: 0, leaf_size: DEFAULT_LEAF_SIZE }
    }
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub subset: FeatureSubset,
    pub index: Arc<KdIndex>,
}

/// Pre-built indexes over pairwise-distinct feature subsets of one store.
#[derive(Debug, Clone)]
pub struct IndexCatalog {
    entries: Vec<CatalogEntry>,
    params: CatalogParams,
    fingerprint: Fingerprint,
    build_times: Vec<Duration>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    dims: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    store_fingerprint: String,
    seed: u64,
    subset_size: u32,
    leaf_size: u32,
    indexes: Vec<ManifestEntry>,
}

fn binomial(n: u32, k: u32) -> u128 {
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
        if acc > u64::MAX as u128 {
            return acc;
        }
    }
    acc
}

fn combinations(n: u32, k: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k as usize).rev().find(|&i| cur[i] < n - k + i as u32) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k as usize {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Draws `n` pairwise-distinct sorted subsets of `subset_size` dims out of `n_dims`.
pub fn draw_subsets(n_dims: u32, subset_size: u32, n: u32, seed: u64) -> Result<Vec<FeatureSubset>> {
    if n == 0 {
        return Err(Error::Catalog("at least one index is required".into()));
    }
    if subset_size == 0 || subset_size > n_dims {
        return Err(Error::Catalog(format!(
            "subset size {subset_size} must be in 1..={n_dims}"
        )));
    }
    let available = binomial(n_dims, subset_size);
    if (n as u128) > available {
        return Err(Error::Catalog(format!(
            "{n} distinct subsets of size {subset_size} requested, only {available} exist over {n_dims} dimensions"
        )));
    }
    let mut rng = seed::rng(seed);
    let subsets = if available <= ENUMERATION_LIMIT {
        let mut all = combinations(n_dims, subset_size);
        all.shuffle(&mut rng);
        all.truncate(n as usize);
        all
    } else {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(n as usize);
        while out.len() < n as usize {
            let mut dims: Vec<u32> = index::sample(&mut rng, n_dims as usize, subset_size as usize)
                .into_iter()
                .map(|d| d as u32)
                .collect();
            dims.sort_unstable();
            if seen.insert(dims.clone()) {
                out.push(dims);
            }
        }
        out
    };
    subsets.into_iter().map(|dims| FeatureSubset::new(dims, n_dims)).collect()
}

impl IndexCatalog {
    /// Draws subsets from `params.seed` and builds one index per subset.
    pub fn build(store: &Arc<FeatureStore>, params: CatalogParams) -> Result<Self> {
        let subsets = draw_subsets(store.n_dims(), params.subset_size, params.n_indexes, params.seed)?;
        Self::build_with_subsets(store, subsets, params)
    }

    /// Builds indexes over explicitly chosen subsets.
    pub fn build_with_subsets(
        store: &Arc<FeatureStore>,
        subsets: Vec<FeatureSubset>,
        params: CatalogParams,
    ) -> Result<Self> {
        if subsets.is_empty() {
            return Err(Error::Catalog("at least one index is required".into()));
        }
        let distinct: HashSet<_> = subsets.iter().collect();
        if distinct.len() != subsets.len() {
            return Err(Error::Catalog("catalog subsets must be pairwise distinct".into()));
        }
        let entries = subsets
            .into_par_iter()
            .map(|subset| {
                let t = Instant::now();
                let index = KdIndex::build(store.clone(), subset.clone(), params.leaf_size)?;
                Ok((CatalogEntry { subset, index: Arc::new(index) }, t.elapsed()))
            })
            .collect::<Result<Vec<_>>>()?;
        let (entries, build_times) = entries.into_iter().unzip();
        Ok(IndexCatalog { entries, params, fingerprint: store.fingerprint(), build_times })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn params(&self) -> CatalogParams {
        self.params
    }

    pub fn store_fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    /// Per-entry build durations; empty for a loaded catalog.
    pub fn build_times(&self) -> &[Duration] {
        &self.build_times
    }

    pub fn subsets(&self) -> impl Iterator<Item = &FeatureSubset> {
        self.entries.iter().map(|e| &e.subset)
    }

    pub fn position(&self, subset: &FeatureSubset) -> Option<usize> {
        self.entries.iter().position(|e| &e.subset == subset)
    }

    pub fn index(&self, position: usize) -> Option<&Arc<KdIndex>> {
        self.entries.get(position).map(|e| &e.index)
    }

    pub fn find(&self, subset: &FeatureSubset) -> Option<&Arc<KdIndex>> {
        self.position(subset).and_then(|p| self.index(p))
    }

    /// Writes one index file per entry plus `catalog.toml` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut indexes = Vec::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            let file = format!("index_{i:03}.kdi");
            e.index.save(dir.join(&file))?;
            indexes.push(ManifestEntry { file, dims: e.subset.dims().to_vec() });
        }
        let manifest = Manifest {
            version: CATALOG_VERSION,
            store_fingerprint: self.fingerprint.to_string(),
            seed: self.params.seed,
            subset_size: self.params.subset_size,
            leaf_size: self.params.leaf_size,
            indexes,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join(CATALOG_MANIFEST), text)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, store: &Arc<FeatureStore>) -> Result<Self> {
        let dir = dir.as_ref();
        if dir.as_os_str().is_empty() {
            return Err(Error::Format("empty catalog path".into()));
        }
        let text = fs::read_to_string(dir.join(CATALOG_MANIFEST))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::Format(format!("{CATALOG_MANIFEST}: {e}")))?;
        if manifest.version != CATALOG_VERSION {
            return Err(Error::Format(format!("unsupported catalog version {}", manifest.version)));
        }
        let fingerprint: Fingerprint = manifest.store_fingerprint.parse()?;
        if fingerprint != store.fingerprint() {
            return Err(Error::Format(format!(
                "catalog built over store {fingerprint}, not {}",
                store.fingerprint()
            )));
        }
        if manifest.indexes.is_empty() {
            return Err(Error::Format("catalog lists no indexes".into()));
        }
        let mut entries = Vec::with_capacity(manifest.indexes.len());
        for m in &manifest.indexes {
            let index = KdIndex::load(dir.join(&m.file), store.clone())?;
            if index.subset().dims() != m.dims.as_slice() {
                return Err(Error::Format(format!("{} does not index dims {:?}", m.file, m.dims)));
            }
            entries.push(CatalogEntry { subset: index.subset().clone(), index: Arc::new(index) });
        }
        let distinct: HashSet<_> = entries.iter().map(|e| &e.subset).collect();
        if distinct.len() != entries.len() {
            return Err(Error::Format("catalog lists duplicate subsets".into()));
        }
        let params = CatalogParams {
            n_indexes: entries.len() as u32,
            subset_size: manifest.subset_size,
            seed: manifest.seed,
            leaf_size: manifest.leaf_size,
        };
        Ok(IndexCatalog { entries, params, fingerprint, build_times: Vec::new() })
    }
}
