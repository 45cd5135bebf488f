//! Persistent feature store.
//!
//! A store is a directory holding three files:
//!
//! * `features.bin`: a 64-byte header (magic `BSFEATS\0`, format version,
//!   row count, dimensionality) followed by the row-major little-endian
//!   `f32` payload.
//! * `records.tsv`: one tab-separated [`PatchRecord`] per line.
//! * `manifest.toml`: human-readable summary including the dataset
//!   fingerprint.
//!
//! Row ids are dense: the id of a row is its position in the payload.
//! Opened stores memory-map the payload, so rows are read by offset and the
//! file is never copied into working memory as a whole.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use memmap2::Mmap;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;
use crate::subset::validate_dims;

#[cfg(target_endian = "big")]
compile_error!("the feature payload is mapped directly and requires a little-endian target");

pub const FEATURES_FILE: &str = "features.bin";
pub const RECORDS_FILE: &str = "records.tsv";
pub const MANIFEST_FILE: &str = "manifest.toml";

pub const MAGIC: &[u8; 8] = b"BSFEATS\0";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

/// Geometry and image location of one patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub id: u64,
    pub grid_row: i64,
    pub grid_col: i64,
    pub geo_x: f64,
    pub geo_y: f64,
    pub image_ref: String,
}

/// 64-bit digest identifying one exact store content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub u64);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Fingerprint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 16 {
            return Err(Error::Format(format!("fingerprint {s:?} is not 16 hex digits")));
        }
        u64::from_str_radix(s, 16)
            .map(Fingerprint)
            .map_err(|_| Error::Format(format!("fingerprint {s:?} is not hexadecimal")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub version: u32,
    pub n_rows: u64,
    pub n_dims: u32,
    pub fingerprint: String,
    pub features_file: String,
    pub records_file: String,
}

enum Payload {
    Mapped(Mmap),
    Owned(Vec<f32>),
}

/// Immutable, thread-safe handle to a feature matrix and its patch records.
pub struct FeatureStore {
    n_rows: u64,
    n_dims: u32,
    payload: Payload,
    records: Vec<PatchRecord>,
    fingerprint: Fingerprint,
    root: Option<PathBuf>,
}

impl fmt::Debug for FeatureStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureStore")
            .field("n_rows", &self.n_rows)
            .field("n_dims", &self.n_dims)
            .field("fingerprint", &self.fingerprint)
            .field("root", &self.root)
            .finish()
    }
}

fn header_bytes(n_rows: u64, n_dims: u32) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..8].copy_from_slice(MAGIC);
    h[8..12].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[12..20].copy_from_slice(&n_rows.to_le_bytes());
    h[20..24].copy_from_slice(&n_dims.to_le_bytes());
    h
}

fn record_line(r: &PatchRecord) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\n",
        r.id, r.grid_row, r.grid_col, r.geo_x, r.geo_y, r.image_ref
    )
}

fn compute_fingerprint(n_rows: u64, n_dims: u32, payload: &[f32], records: &[PatchRecord]) -> Fingerprint {
    let mut hasher = Sha256::new();
    hasher.update(header_bytes(n_rows, n_dims));
    hasher.update(bytemuck::cast_slice::<f32, u8>(payload));
    for r in records {
        hasher.update(record_line(r).as_bytes());
    }
    let digest = hasher.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    Fingerprint(u64::from_le_bytes(first))
}

fn check_ingest(matrix: &Matrix, records: &[PatchRecord]) -> Result<()> {
    if matrix.n_rows() == 0 || matrix.n_cols() == 0 {
        return Err(Error::Ingest(format!(
            "store needs at least one row and one dimension, got {}x{}",
            matrix.n_rows(),
            matrix.n_cols()
        )));
    }
    if u32::try_from(matrix.n_cols()).is_err() {
        return Err(Error::Ingest(format!("{} dimensions exceed u32", matrix.n_cols())));
    }
    if matrix.n_rows() != records.len() {
        return Err(Error::Ingest(format!(
            "matrix has {} rows but {} records were given",
            matrix.n_rows(),
            records.len()
        )));
    }
    for (row, values) in matrix.rows().enumerate() {
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: row as u64, col: col as u32 });
        }
    }
    for (i, r) in records.iter().enumerate() {
        if r.id != i as u64 {
            return Err(Error::Ingest(format!("record at line {i} has id {}, expected {i}", r.id)));
        }
        if r.image_ref.contains(['\t', '\n', '\r']) {
            return Err(Error::Ingest(format!("image_ref of record {i} contains a tab or newline")));
        }
        if !r.geo_x.is_finite() || !r.geo_y.is_finite() {
            return Err(Error::Ingest(format!("record {i} has non-finite geolocation")));
        }
    }
    Ok(())
}

/// Writes a store directory at `dir` and returns its manifest.
pub fn write_store(matrix: &Matrix, records: &[PatchRecord], dir: impl AsRef<Path>) -> Result<StoreManifest> {
    check_ingest(matrix, records)?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let n_rows = matrix.n_rows() as u64;
    let n_dims = matrix.n_cols() as u32;

    let mut out = BufWriter::new(File::create(dir.join(FEATURES_FILE))?);
    out.write_all(&header_bytes(n_rows, n_dims))?;
    out.write_all(bytemuck::cast_slice::<f32, u8>(matrix.as_slice()))?;
    out.into_inner().map_err(|e| e.into_error())?.sync_all()?;

    let mut out = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
    for r in records {
        out.write_all(record_line(r).as_bytes())?;
    }
    out.flush()?;

    let manifest = StoreManifest {
        version: FORMAT_VERSION,
        n_rows,
        n_dims,
        fingerprint: compute_fingerprint(n_rows, n_dims, matrix.as_slice(), records).to_string(),
        features_file: FEATURES_FILE.into(),
        records_file: RECORDS_FILE.into(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

fn parse_record(line: &str, lineno: usize) -> Result<PatchRecord> {
    let bad = |what: &str| Error::CorruptStore(format!("{RECORDS_FILE} line {}: {what}", lineno + 1));
    let mut fields = line.split('\t');
    let mut next = |name: &str| fields.next().ok_or_else(|| bad(&format!("missing field {name}")));
    let id = next("id")?.parse().map_err(|_| bad("bad id"))?;
    let grid_row = next("grid_row")?.parse().map_err(|_| bad("bad grid_row"))?;
    let grid_col = next("grid_col")?.parse().map_err(|_| bad("bad grid_col"))?;
    let geo_x = next("geo_x")?.parse().map_err(|_| bad("bad geo_x"))?;
    let geo_y = next("geo_y")?.parse().map_err(|_| bad("bad geo_y"))?;
    let image_ref = next("image_ref")?.to_string();
    if fields.next().is_some() {
        return Err(bad("too many fields"));
    }
    Ok(PatchRecord { id, grid_row, grid_col, geo_x, geo_y, image_ref })
}

/// Parses a text feature matrix: one row per line, values separated by
/// commas or whitespace. Blank lines and lines starting with `#` are skipped.
pub fn parse_feature_text(text: &str) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = data.len();
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f32 = tok
                .parse()
                .map_err(|_| Error::Ingest(format!("line {}: {tok:?} is not a number", lineno + 1)))?;
            data.push(v);
        }
        let width = data.len() - before;
        match n_cols {
            None => n_cols = Some(width),
            Some(w) if w != width => {
                return Err(Error::Ingest(format!("line {} has {width} values, expected {w}", lineno + 1)))
            }
            Some(_) => {}
        }
        n_rows += 1;
    }
    Ok(Matrix::new(data, n_rows, n_cols.unwrap_or(0)))
}

/// Reads a record table, checking that ids are dense.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<PatchRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let r = parse_record(&line, lineno)?;
        if r.id != records.len() as u64 {
            return Err(Error::CorruptStore(format!(
                "{RECORDS_FILE} line {}: id {} breaks the dense id sequence",
                lineno + 1,
                r.id
            )));
        }
        records.push(r);
    }
    Ok(records)
}

impl FeatureStore {
    /// Opens a store directory written by [`write_store`].
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if dir.as_os_str().is_empty() {
            return Err(Error::Format("empty store path".into()));
        }
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: StoreManifest =
            toml::from_str(&text).map_err(|e| Error::Format(format!("{MANIFEST_FILE}: {e}")))?;
        let fingerprint: Fingerprint = manifest.fingerprint.parse()?;

        let mut file = File::open(dir.join(&manifest.features_file))?;
        let mut header = [0u8; HEADER_LEN];
        file.read_exact(&mut header)
            .map_err(|_| Error::CorruptStore("feature file shorter than its header".into()))?;
        if &header[0..8] != MAGIC {
            return Err(Error::Format("bad magic in feature file".into()));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported feature file version {version}")));
        }
        let n_rows = u64::from_le_bytes(header[12..20].try_into().unwrap());
        let n_dims = u32::from_le_bytes(header[20..24].try_into().unwrap());
        if n_rows == 0 || n_dims == 0 {
            return Err(Error::CorruptStore(format!("header declares {n_rows}x{n_dims} store")));
        }
        if manifest.n_rows != n_rows || manifest.n_dims != n_dims {
            return Err(Error::CorruptStore(format!(
                "manifest says {}x{}, header says {n_rows}x{n_dims}",
                manifest.n_rows, manifest.n_dims
            )));
        }
        let expected = n_rows
            .checked_mul(n_dims as u64)
            .and_then(|v| v.checked_mul(4))
            .and_then(|v| v.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| Error::CorruptStore("header dimensions overflow".into()))?;
        let actual = file.metadata()?.len();
        if actual != expected {
            return Err(Error::CorruptStore(format!(
                "feature file is {actual} bytes, expected {expected}"
            )));
        }
        // SAFETY: the store is immutable after write; no writer coexists with readers.
        let mmap = unsafe { Mmap::map(&file)? };

        let records = read_records(dir.join(&manifest.records_file))?;
        if records.len() as u64 != n_rows {
            return Err(Error::CorruptStore(format!(
                "{} records for {n_rows} rows",
                records.len()
            )));
        }

        Ok(FeatureStore {
            n_rows,
            n_dims,
            payload: Payload::Mapped(mmap),
            records,
            fingerprint,
            root: Some(dir.to_path_buf()),
        })
    }

    /// Builds a store held entirely in memory, validated like [`write_store`].
    pub fn from_matrix(matrix: Matrix, records: Vec<PatchRecord>) -> Result<Self> {
        check_ingest(&matrix, &records)?;
        let n_rows = matrix.n_rows() as u64;
        let n_dims = matrix.n_cols() as u32;
        let fingerprint = compute_fingerprint(n_rows, n_dims, matrix.as_slice(), &records);
        Ok(FeatureStore {
            n_rows,
            n_dims,
            payload: Payload::Owned(matrix.into_vec()),
            records,
            fingerprint,
            root: None,
        })
    }

    pub fn n_rows(&self) -> u64 {
        self.n_rows
    }

    pub fn n_dims(&self) -> u32 {
        self.n_dims
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    /// Directory the store was opened from, if any.
    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn records(&self) -> &[PatchRecord] {
        &self.records
    }

    pub fn record(&self, id: u64) -> Result<&PatchRecord> {
        self.records.get(id as usize).filter(|_| id < self.n_rows).ok_or(Error::NotFound { id })
    }

    /// The whole payload, row-major.
    #[inline]
    pub fn data(&self) -> &[f32] {
        match &self.payload {
            Payload::Mapped(m) => bytemuck::cast_slice(&m[HEADER_LEN..]),
            Payload::Owned(v) => v,
        }
    }

    /// Row `id`. Panics if out of range; use [`FeatureStore::get_rows`] for checked access.
    #[inline]
    pub fn row(&self, id: u64) -> &[f32] {
        let d = self.n_dims as usize;
        let start = id as usize * d;
        &self.data()[start..start + d]
    }

    #[inline]
    pub fn value(&self, id: u64, dim: u32) -> f32 {
        self.data()[id as usize * self.n_dims as usize + dim as usize]
    }

    fn check_id(&self, id: u64) -> Result<()> {
        if id < self.n_rows {
            Ok(())
        } else {
            Err(Error::NotFound { id })
        }
    }

    /// Copies the requested rows in the order given.
    pub fn get_rows(&self, ids: &[u64]) -> Result<Vec<Vec<f32>>> {
        ids.iter()
            .map(|&id| {
                self.check_id(id)?;
                Ok(self.row(id).to_vec())
            })
            .collect()
    }

    /// Restricts rows (all rows when `ids` is `None`) to the columns in `dims`.
    pub fn project_columns(&self, dims: &[u32], ids: Option<&[u64]>) -> Result<Matrix> {
        validate_dims(dims, self.n_dims)?;
        let n = ids.map_or(self.n_rows as usize, <[u64]>::len);
        let mut data = Vec::with_capacity(n * dims.len());
        let mut push_row = |row: &[f32]| data.extend(dims.iter().map(|&d| row[d as usize]));
        match ids {
            Some(ids) => {
                for &id in ids {
                    self.check_id(id)?;
                    push_row(self.row(id));
                }
            }
            None => {
                for id in 0..self.n_rows {
                    push_row(self.row(id));
                }
            }
        }
        Ok(Matrix::new(data, n, dims.len()))
    }

    /// Draws `n` distinct ids uniformly from the ids not in `exclude`, sorted ascending.
    pub fn sample_ids(&self, n: u32, exclude: &HashSet<u64>, seed: u64) -> Result<Vec<u64>> {
        let excluded = exclude.iter().filter(|&&id| id < self.n_rows).count() as u64;
        let available = self.n_rows - excluded;
        let n = n as u64;
        if n > available {
            return Err(Error::Sample(format!(
                "requested {n} ids but only {available} are available"
            )));
        }
        let mut rng = seed::rng(seed);
        let mut out: Vec<u64> = if n * 2 <= available {
            let mut chosen = HashSet::with_capacity(n as usize);
            let mut out = Vec::with_capacity(n as usize);
            while (out.len() as u64) < n {
                let id = rng.random_range(0..self.n_rows);
                if !exclude.contains(&id) && chosen.insert(id) {
                    out.push(id);
                }
            }
            out
        } else {
            let candidates: Vec<u64> = (0..self.n_rows).filter(|id| !exclude.contains(id)).collect();
            index::sample(&mut rng, candidates.len(), n as usize)
                .into_iter()
                .map(|i| candidates[i])
                .collect()
        };
        out.sort_unstable();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize) -> Vec<PatchRecord> {
        (0..n)
            .map(|i| PatchRecord {
                id: i as u64,
                grid_row: 0,
                grid_col: i as i64,
                geo_x: 100.0 * i as f64,
                geo_y: 0.5,
                image_ref: format!("patches/{i}.png"),
            })
            .collect()
    }

    fn tiny() -> Matrix {
        Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap()
    }

    #[test]
    fn write_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_store(&tiny(), &records(3), dir.path()).unwrap();
        assert_eq!((manifest.n_rows, manifest.n_dims), (3, 2));
        let store = FeatureStore::open(dir.path()).unwrap();
        assert_eq!((store.n_rows(), store.n_dims()), (3, 2));
        assert_eq!(store.get_rows(&[1]).unwrap(), vec![vec![1.0, 1.0]]);
        assert_eq!(store.fingerprint().to_string(), manifest.fingerprint);
        assert_eq!(store.records(), &records(3)[..]);
        let len = fs::metadata(dir.path().join(FEATURES_FILE)).unwrap().len();
        assert_eq!(len, HEADER_LEN as u64 + 3 * 2 * 4);
    }

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        write_store(&tiny(), &records(3), dir.path()).unwrap();
        let bytes = fs::read(dir.path().join(FEATURES_FILE)).unwrap();
        assert_eq!(&bytes[0..8], b"BSFEATS\0");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 2);
        assert!(bytes[24..64].iter().all(|&b| b == 0));
        assert_eq!(f32::from_le_bytes(bytes[64 + 8..64 + 12].try_into().unwrap()), 1.0);
    }

    #[test]
    fn rejects_nan_with_position() {
        let mut m = Matrix::zeros(6, 4);
        m.row_mut(5)[3] = f32::NAN;
        let err = FeatureStore::from_matrix(m, records(6)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 5, col: 3 }), "{err:?}");
    }

    #[test]
    fn rejects_length_mismatch() {
        let err = FeatureStore::from_matrix(tiny(), records(2)).unwrap_err();
        assert!(matches!(err, Error::Ingest(_)));
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_store(&tiny(), &records(3), dir.path()).unwrap();
        let path = dir.path().join(FEATURES_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(FeatureStore::open(dir.path()), Err(Error::CorruptStore(_))));
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        write_store(&tiny(), &records(3), dir.path()).unwrap();
        let path = dir.path().join(FEATURES_FILE);
        let good = fs::read(&path).unwrap();

        let mut bytes = good.clone();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(FeatureStore::open(dir.path()), Err(Error::Format(_))));

        let mut bytes = good;
        bytes[8] = 9;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(FeatureStore::open(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn get_rows_order_and_errors() {
        let store = FeatureStore::from_matrix(tiny(), records(3)).unwrap();
        assert_eq!(store.get_rows(&[0]).unwrap(), vec![vec![0.0, 0.0]]);
        assert_eq!(store.get_rows(&[2, 0]).unwrap(), vec![vec![2.0, 2.0], vec![0.0, 0.0]]);
        assert!(matches!(store.get_rows(&[3]), Err(Error::NotFound { id: 3 })));
    }

    #[test]
    fn projection() {
        let store = FeatureStore::from_matrix(tiny(), records(3)).unwrap();
        let p = store.project_columns(&[1], None).unwrap();
        assert_eq!(p.as_slice(), &[0.0, 1.0, 2.0]);
        assert_eq!(store.project_columns(&[0, 1], None).unwrap(), tiny());
        assert!(matches!(store.project_columns(&[1, 0], None), Err(Error::Subset(_))));
        let p = store.project_columns(&[0], Some(&[2, 1])).unwrap();
        assert_eq!(p.as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn sampling() {
        let store = FeatureStore::from_matrix(tiny(), records(3)).unwrap();
        let none = HashSet::new();
        assert_eq!(store.sample_ids(3, &none, 1).unwrap(), vec![0, 1, 2]);
        let ex: HashSet<u64> = [0, 1].into();
        assert_eq!(store.sample_ids(1, &ex, 99).unwrap(), vec![2]);
        assert!(matches!(store.sample_ids(2, &ex, 1), Err(Error::Sample(_))));
        assert_eq!(store.sample_ids(1, &none, 5).unwrap(), store.sample_ids(1, &none, 5).unwrap());
    }

    #[test]
    fn fingerprint_parse() {
        let f = Fingerprint(0x00ab_cdef_0123_4567);
        assert_eq!(f.to_string().parse::<Fingerprint>().unwrap(), f);
        assert!("xyz".parse::<Fingerprint>().is_err());
    }
}
