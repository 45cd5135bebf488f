//! Binary index file.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "BSKDIDX\0" | version u32 | store fingerprint u64 | store n_dims u32
//! | d u32 | dims u32 * d | leaf_size u32 | n_points u64 | n_nodes u32
//! | nodes (split_dim u32, split_value f32, left u32, right u32, start u32, end u32) * n_nodes
//! | bounds f32 * (n_nodes * 2d) | ids u32 * n_points
//! ```
//!
//! Leaf buckets are the `ids[start..end]` slices of leaf nodes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::store::FeatureStore;
use crate::subset::FeatureSubset;

use super::kdtree::{KdIndex, Node, LEAF};

pub const INDEX_MAGIC: &[u8; 8] = b"BSKDIDX\0";
const INDEX_VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("index file is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl KdIndex {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if path.as_os_str().is_empty() {
            return Err(Error::Format("empty index path".into()));
        }
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&self.store.fingerprint().0.to_le_bytes())?;
        w.write_all(&self.store.n_dims().to_le_bytes())?;
        w.write_all(&(self.subset.len() as u32).to_le_bytes())?;
        for d in self.subset.dims() {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&self.leaf_size.to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        w.write_all(&(self.nodes.len() as u32).to_le_bytes())?;
        for n in &self.nodes {
            for v in [n.split_dim, n.split_value.to_bits(), n.left, n.right, n.start, n.end] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for b in &self.bounds {
            w.write_all(&b.to_le_bytes())?;
        }
        for id in &self.ids {
            w.write_all(&id.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads an index and binds it to `store`, which must be the store it was built over.
    pub fn load(path: impl AsRef<Path>, store: Arc<FeatureStore>) -> Result<Self> {
        let path = path.as_ref();
        if path.as_os_str().is_empty() {
            return Err(Error::Format("empty index path".into()));
        }
        let buf = fs::read(path)?;
        let mut r = Reader { buf: &buf, pos: 0 };
        if r.take(8)? != INDEX_MAGIC {
            return Err(Error::Format(format!("{}: bad magic", path.display())));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(Error::Format(format!("unsupported index version {version}")));
        }
        let fingerprint = r.u64()?;
        if fingerprint != store.fingerprint().0 {
            return Err(Error::Format(format!(
                "index built over store {fingerprint:016x}, not {}",
                store.fingerprint()
            )));
        }
        let n_dims = r.u32()?;
        if n_dims != store.n_dims() {
            return Err(Error::Format(format!("index expects {n_dims} store dimensions")));
        }
        let d = r.u32()? as usize;
        let dims = (0..d).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let subset = FeatureSubset::new(dims, n_dims).map_err(|e| Error::Format(e.to_string()))?;
        let leaf_size = r.u32()?;
        let n_points = r.u64()?;
        if n_points != store.n_rows() {
            return Err(Error::Format(format!(
                "index holds {n_points} points, store has {}",
                store.n_rows()
            )));
        }
        let n_nodes = r.u32()? as usize;
        if n_nodes == 0 || leaf_size == 0 {
            return Err(Error::Format("index has no nodes or zero leaf size".into()));
        }
        let mut nodes = Vec::with_capacity(n_nodes.min(buf.len() / 24));
        for _ in 0..n_nodes {
            let split_dim = r.u32()?;
            let split_value = r.f32()?;
            let left = r.u32()?;
            let right = r.u32()?;
            let start = r.u32()?;
            let end = r.u32()?;
            let node = Node { split_dim, split_value, left, right, start, end };
            let bad_range = start > end || end as u64 > n_points;
            let bad_links = !node.is_leaf()
                && (split_dim as usize >= d || left as usize >= n_nodes || right as usize >= n_nodes);
            if bad_range || bad_links || (split_dim != LEAF && split_value.is_nan()) {
                return Err(Error::Format("index node table is inconsistent".into()));
            }
            nodes.push(node);
        }
        let bounds = (0..n_nodes * 2 * d).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let ids = (0..n_points).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if r.pos != buf.len() {
            return Err(Error::Format("trailing bytes after index payload".into()));
        }
        if ids.iter().any(|&id| id as u64 >= n_points) {
            return Err(Error::Format("index references ids outside the store".into()));
        }
        Ok(KdIndex { store, subset, leaf_size, nodes, bounds, ids })
    }
}
