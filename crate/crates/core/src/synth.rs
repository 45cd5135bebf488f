//! Synthetic patch corpora with planted classes.
//!
//! Background patches come from Gaussian clusters whose values stay inside
//! `[0, 1]`. Each planted class owns a few dimensions of its own, where its
//! members sit outside the unit interval by at least `gap`; on every other
//! dimension a planted patch looks like some background cluster. A single
//! threshold on any owned dimension therefore separates a class from
//! everything else, with margin `gap`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;
use crate::store::{write_store, PatchRecord, StoreManifest};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const IMAGE_SIZE: u32 = 32;

const ORIGIN_X: f64 = 440_000.0;
const ORIGIN_Y: f64 = 6_400_000.0;
const CELL_METERS: f64 = 25.0;
const SIGMA: f64 = 0.04;
const TRUNCATE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motif {
    Stripes,
    Square,
    Checker,
    Cross,
}

impl Motif {
    const ALL: [Motif; 4] = [Motif::Stripes, Motif::Square, Motif::Checker, Motif::Cross];

    fn covers(self, x: u32, y: u32) -> bool {
        let s = IMAGE_SIZE;
        match self {
            Motif::Stripes => (x / 4) % 2 == 0,
            Motif::Square => (8..s - 8).contains(&x) && (8..s - 8).contains(&y),
            Motif::Checker => (x / 8 + y / 8) % 2 == 0,
            Motif::Cross => (s / 2 - 3..s / 2 + 3).contains(&x) || (s / 2 - 3..s / 2 + 3).contains(&y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_patches: u64,
    pub n_dims: u32,
    /// Grid width; `None` uses the smallest square grid that fits.
    pub grid_cols: Option<u64>,
    pub n_clusters: u32,
    pub n_planted_classes: u32,
    /// Fraction of patches per planted class, cycled over the classes.
    pub planted_fractions: Vec<f64>,
    pub gap: f32,
    pub width: f32,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_patches: 10_000,
            n_dims: 384,
            grid_cols: None,
            n_clusters: 8,
            n_planted_classes: 4,
            planted_fractions: vec![0.001],
            gap: 0.5,
            width: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedClass {
    pub class: u32,
    pub motif: Motif,
    pub owned_dims: Vec<u32>,
    pub ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub n_patches: u64,
    pub n_dims: u32,
    pub seed: u64,
    pub gap: f32,
    pub classes: Vec<PlantedClass>,
}

impl GroundTruth {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{GROUND_TRUTH_FILE}: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    /// Class whose size is closest to `selectivity * n_patches`.
    pub fn closest_class(&self, selectivity: f64) -> Option<&PlantedClass> {
        let target = selectivity * self.n_patches as f64;
        self.classes
            .iter()
            .filter(|c| !c.ids.is_empty())
            .min_by(|a, b| (a.ids.len() as f64 - target).abs().total_cmp(&(b.ids.len() as f64 - target).abs()))
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub features: Matrix,
    pub records: Vec<PatchRecord>,
    /// Planted class per row, `None` for background.
    pub labels: Vec<Option<u32>>,
    pub ground_truth: GroundTruth,
}

pub fn grid_cols_for(n_patches: u64) -> u64 {
    let mut c = (n_patches as f64).sqrt().ceil() as u64;
    while c * c < n_patches {
        c += 1;
    }
    c.max(1)
}

/// Row-major grid placement with 25 m cells; patch `id` sits at `(id / cols, id % cols)`.
pub fn grid_records(n_patches: u64, cols: u64) -> Vec<PatchRecord> {
    (0..n_patches)
        .map(|id| {
            let (row, col) = (id / cols, id % cols);
            PatchRecord {
                id,
                grid_row: row as i64,
                grid_col: col as i64,
                geo_x: ORIGIN_X + col as f64 * CELL_METERS,
                geo_y: ORIGIN_Y - row as f64 * CELL_METERS,
                image_ref: image_ref(id),
            }
        })
        .collect()
}

pub fn image_ref(id: u64) -> String {
    format!("patches/{:04}/{id:08}.png", id / 1000)
}

fn check(params: &SynthParams) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidRequest(m));
    if params.n_patches == 0 {
        return bad("at least one patch is required".into());
    }
    if params.n_dims == 0 {
        return bad("at least one dimension is required".into());
    }
    if params.n_clusters == 0 {
        return bad("at least one background cluster is required".into());
    }
    if params.n_planted_classes > params.n_dims {
        return bad(format!("{} planted classes need at least as many dimensions", params.n_planted_classes));
    }
    if params.n_planted_classes > 0 && params.planted_fractions.is_empty() {
        return bad("planted fractions are empty".into());
    }
    if params.planted_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return bad("planted fractions must lie in [0, 1]".into());
    }
    if !(params.gap > 0.0 && params.width > 0.0 && params.gap.is_finite() && params.width.is_finite()) {
        return bad("gap and width must be positive".into());
    }
    if params.grid_cols == Some(0) {
        return bad("grid columns must be positive".into());
    }
    Ok(())
}

fn truncated_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= TRUNCATE {
            return z;
        }
    }
}

/// Generates a corpus; the output is a pure function of `params`.
pub fn generate(params: &SynthParams) -> Result<SynthDataset> {
    check(params)?;
    let n = params.n_patches;
    let d = params.n_dims as usize;
    let n_classes = params.n_planted_classes as usize;
    let mut rng = seed::rng(params.seed);

    let means: Vec<Vec<f64>> =
        (0..params.n_clusters).map(|_| (0..d).map(|_| rng.random_range(0.2..0.8)).collect()).collect();

    // A quarter of the dims are pure noise; classes own disjoint blocks of the rest.
    let mut perm: Vec<u32> = (0..params.n_dims).collect();
    perm.shuffle(&mut rng);
    let n_noise = if n_classes > 0 { (d / 4).min(d - n_classes) } else { d / 4 };
    let per_class = if n_classes > 0 { ((d - n_noise) / (n_classes + 1)).max(1) } else { 0 };
    let mut noise = vec![false; d];
    for &dim in &perm[..n_noise] {
        noise[dim as usize] = true;
    }

    let sizes: Vec<u64> = (0..n_classes)
        .map(|c| {
            let f = params.planted_fractions[c % params.planted_fractions.len()];
            (f * n as f64).round() as u64
        })
        .collect();
    let total: u64 = sizes.iter().sum();
    if total > n {
        return Err(Error::InvalidRequest(format!("planted classes need {total} patches, corpus has {n}")));
    }
    let mut chosen: Vec<u64> = index::sample(&mut rng, n as usize, total as usize)
        .into_iter()
        .map(|i| i as u64)
        .collect();
    let mut labels: Vec<Option<u32>> = vec![None; n as usize];
    let mut classes = Vec::with_capacity(n_classes);
    // (side, borrowed cluster) per class; side[j] is +1 above, -1 below the unit interval.
    let mut owned_side: Vec<Vec<i8>> = Vec::with_capacity(n_classes);
    let mut borrowed: Vec<usize> = Vec::with_capacity(n_classes);
    for (c, &size) in sizes.iter().enumerate() {
        let rest = chosen.split_off(size as usize);
        let mut ids = std::mem::replace(&mut chosen, rest);
        ids.sort_unstable();
        for &id in &ids {
            labels[id as usize] = Some(c as u32);
        }
        let start = n_noise + c * per_class;
        let mut owned: Vec<u32> = perm[start..start + per_class].to_vec();
        owned.sort_unstable();
        let mut side = vec![0i8; d];
        for &dim in &owned {
            side[dim as usize] = if rng.random_bool(0.5) { 1 } else { -1 };
        }
        owned_side.push(side);
        borrowed.push(rng.random_range(0..params.n_clusters as usize));
        classes.push(PlantedClass { class: c as u32, motif: Motif::ALL[c % 4], owned_dims: owned, ids });
    }

    let (gap, width) = (params.gap as f64, params.width as f64);
    let mut data = Vec::with_capacity(n as usize * d);
    for label in &labels {
        let (cluster, side) = match *label {
            Some(c) => (borrowed[c as usize], Some(&owned_side[c as usize])),
            None => (rng.random_range(0..params.n_clusters as usize), None),
        };
        for j in 0..d {
            let v = match side.map_or(0, |s| s[j]) {
                1 => 1.0 + gap + rng.random::<f64>() * width,
                -1 => -gap - rng.random::<f64>() * width,
                _ if noise[j] => rng.random::<f64>(),
                _ => means[cluster][j] + SIGMA * truncated_normal(&mut rng),
            };
            data.push(v as f32);
        }
    }

    let records = grid_records(n, params.grid_cols.unwrap_or_else(|| grid_cols_for(n)));

    Ok(SynthDataset {
        features: Matrix::new(data, n as usize, d),
        records,
        labels,
        ground_truth: GroundTruth { n_patches: n, n_dims: params.n_dims, seed: params.seed, gap: params.gap, classes },
    })
}

/// 32x32 RGB patch: a class motif over a tinted background, or plain texture.
pub fn render_patch(id: u64, class: Option<u32>) -> Vec<u8> {
    let h = seed::derive_seed(id, 0x9a7c);
    let tint = (h & 0x3f) as u8;
    let mut px = Vec::with_capacity((IMAGE_SIZE * IMAGE_SIZE * 3) as usize);
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            let grain = (seed::derive_seed(h, (y * IMAGE_SIZE + x) as u64) & 0x1f) as u8;
            let rgb = match class {
                Some(c) if Motif::ALL[c as usize % 4].covers(x, y) => {
                    let palette = [[230, 60, 40], [40, 90, 220], [240, 200, 30], [150, 40, 200]];
                    palette[c as usize % palette.len()]
                }
                _ => [70 + tint + grain, 110 + tint / 2 + grain, 60 + grain],
            };
            px.extend_from_slice(&rgb);
        }
    }
    px
}

pub fn write_png(path: &Path, rgb: &[u8]) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(w, IMAGE_SIZE, IMAGE_SIZE);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer.write_image_data(rgb).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

/// Writes the store, the ground truth and optionally one PNG per patch under `out`.
pub fn write_dataset(dataset: &SynthDataset, out: impl AsRef<Path>, images: bool) -> Result<StoreManifest> {
    let out = out.as_ref();
    let manifest = write_store(&dataset.features, &dataset.records, out)?;
    dataset.ground_truth.save(out.join(GROUND_TRUTH_FILE))?;
    if images {
        for (r, label) in dataset.records.iter().zip(&dataset.labels) {
            let path = out.join(&r.image_ref);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            write_png(&path, &render_patch(r.id, *label))?;
        }
    }
    Ok(manifest)
}
