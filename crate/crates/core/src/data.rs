//! Dataset ingestion and preprocessing: CIFAR-10 binaries, patch sampling,
//! contrast normalization, ZCA whitening, the 2-D Gaussian mixture toy data
//! and a synthetic oriented-edge image set.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{write_atomic, Reader};
use crate::error::{GrbmError, Result};
use crate::rng::{self, purpose};

pub const IMAGE_SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const IMAGE_BYTES: usize = IMAGE_SIDE * IMAGE_SIDE * CHANNELS;
pub const CIFAR_RECORDS: usize = 10_000;
pub const CIFAR_RECORD_BYTES: usize = 1 + IMAGE_BYTES;
pub const CIFAR_CLASSES: usize = 10;

/// Contrast-normalization epsilon for pixels scaled to [0, 1].
pub const CONTRAST_EPSILON: f64 = 10.0 / (255.0 * 255.0);
pub const ZCA_EPSILON: f64 = 0.01;

pub const DATASET_MAGIC: &[u8; 4] = b"DSET";
pub const DATASET_VERSION: u32 = 1;

/// What the columns of a [`Dataset`] hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimKind {
    RawPixels,
    Patch,
    WhitenedPatch,
    Features,
    Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Array2<f64>,
    pub labels: Option<Vec<u32>>,
    pub kind: DimKind,
}

impl Dataset {
    pub fn new(rows: Array2<f64>, labels: Option<Vec<u32>>, kind: DimKind) -> Result<Self> {
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(GrbmError::contract("dataset rows must be finite"));
        }
        if let Some(l) = &labels {
            if l.len() != rows.nrows() {
                return Err(GrbmError::contract(format!(
                    "{} labels for {} rows",
                    l.len(),
                    rows.nrows()
                )));
            }
        }
        Ok(Dataset { rows, labels, kind })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: self.rows.select(Axis(0), indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            kind: self.kind,
        }
    }
}

/// Images kept as bytes (CHW planes, as in the CIFAR files) to save memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl ImageSet {
    pub fn new(pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != labels.len() * IMAGE_BYTES {
            return Err(GrbmError::contract(format!(
                "{} pixel bytes do not match {} images",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(ImageSet { pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn select(&self, indices: &[usize]) -> ImageSet {
        let mut pixels = Vec::with_capacity(indices.len() * IMAGE_BYTES);
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        ImageSet {
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn concat(parts: impl IntoIterator<Item = ImageSet>) -> ImageSet {
        let mut out = ImageSet {
            pixels: Vec::new(),
            labels: Vec::new(),
        };
        for p in parts {
            out.pixels.extend(p.pixels);
            out.labels.extend(p.labels);
        }
        out
    }

    /// Pixels mapped to [0, 1], one image per row.
    pub fn to_dataset(&self) -> Dataset {
        let rows = Array2::from_shape_fn((self.len(), IMAGE_BYTES), |(i, j)| {
            f64::from(self.pixels[i * IMAGE_BYTES + j]) / 255.0
        });
        Dataset {
            rows,
            labels: Some(self.labels.iter().map(|&l| u32::from(l)).collect()),
            kind: DimKind::RawPixels,
        }
    }
}

/// Parses one CIFAR-10 binary batch file.
pub fn read_cifar_batch(path: &Path) -> Result<ImageSet> {
    let bytes = fs::read(path)?;
    parse_cifar_batch(&bytes, path)
}

pub fn parse_cifar_batch(bytes: &[u8], path: &Path) -> Result<ImageSet> {
    let expected = CIFAR_RECORDS * CIFAR_RECORD_BYTES;
    if bytes.len() != expected {
        return Err(GrbmError::Format {
            path: path.to_path_buf(),
            reason: format!("size {} bytes, expected {expected}", bytes.len()),
        });
    }
    let mut pixels = Vec::with_capacity(CIFAR_RECORDS * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(CIFAR_RECORDS);
    for (r, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        if usize::from(record[0]) >= CIFAR_CLASSES {
            return Err(GrbmError::Format {
                path: path.to_path_buf(),
                reason: format!("record {r} has label {}", record[0]),
            });
        }
        labels.push(record[0]);
        pixels.extend_from_slice(&record[1..]);
    }
    Ok(ImageSet { pixels, labels })
}

/// Loads `data_batch_1..5.bin` and `test_batch.bin` from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(ImageSet, ImageSet)> {
    let path = |name: String| -> PathBuf { dir.join(name) };
    let train = (1..=5)
        .map(|i| read_cifar_batch(&path(format!("data_batch_{i}.bin"))))
        .collect::<Result<Vec<_>>>()?;
    let test = read_cifar_batch(&path("test_batch.bin".into()))?;
    Ok((ImageSet::concat(train), test))
}

/// Patch dimension for receptive field side `w`.
pub fn patch_dim(w: usize) -> usize {
    CHANNELS * w * w
}

/// Receptive field side for a patch dimension, if it is of the form 3w².
pub fn rf_side(dim: usize) -> Option<usize> {
    if !dim.is_multiple_of(CHANNELS) {
        return None;
    }
    let w = ((dim / CHANNELS) as f64).sqrt().round() as usize;
    (w * w * CHANNELS == dim).then_some(w)
}

/// Copies the `w`×`w` patch at column `x`, row `y` into `out` (channel-major,
/// then row, then column), scaled to [0, 1].
pub fn copy_patch(image: &[u8], w: usize, x: usize, y: usize, out: &mut [f64]) {
    let mut k = 0;
    for c in 0..CHANNELS {
        let plane = &image[c * IMAGE_SIDE * IMAGE_SIDE..];
        for dy in 0..w {
            let row = &plane[(y + dy) * IMAGE_SIDE + x..];
            for &p in &row[..w] {
                out[k] = f64::from(p) / 255.0;
                k += 1;
            }
        }
    }
}

/// `count` patches at uniformly random (image, x, y), sampled with replacement.
/// Patch `i` is drawn from its own stream, so the result does not depend on
/// thread scheduling.
pub fn extract_patches(images: &ImageSet, w: usize, count: usize, seed: u64) -> Result<Dataset> {
    if w == 0 || w > IMAGE_SIDE {
        return Err(GrbmError::contract(format!(
            "receptive field {w} does not fit a {IMAGE_SIDE}x{IMAGE_SIDE} image"
        )));
    }
    if images.is_empty() && count > 0 {
        return Err(GrbmError::contract("cannot sample patches from no images"));
    }
    let dim = patch_dim(w);
    let mut rows = Array2::zeros((count, dim));
    let span = IMAGE_SIDE - w + 1;
    rows.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = rng::stream(seed, purpose::PATCHES, i as u64);
            let img = rng.random_range(0..images.len());
            let x = rng.random_range(0..span);
            let y = rng.random_range(0..span);
            copy_patch(images.image(img), w, x, y, row);
        });
    Ok(Dataset {
        rows,
        labels: None,
        kind: DimKind::Patch,
    })
}

/// Subtracts each row's mean and divides by `sqrt(var + eps)`.
pub fn contrast_normalize_row(row: &mut [f64], eps: f64) {
    if row.first().is_none_or(|&first| row.iter().all(|&x| x == first)) {
        row.fill(0.0);
        return;
    }
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var + eps).sqrt();
    for x in row.iter_mut() {
        *x = (*x - mean) * scale;
    }
}

pub fn contrast_normalize(patches: &Dataset, eps: f64) -> Result<Dataset> {
    if patches.dim() == 0 {
        return Err(GrbmError::contract("cannot normalize zero-dimensional rows"));
    }
    if !(eps > 0.0) {
        return Err(GrbmError::contract("contrast epsilon must be positive"));
    }
    let mut out = patches.clone();
    for mut row in out.rows.rows_mut() {
        contrast_normalize_row(row.as_slice_mut().expect("contiguous"), eps);
    }
    Ok(out)
}

/// Fitted contrast normalization + ZCA whitening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessModel {
    pub patch_mean: Array1<f64>,
    pub whitening_matrix: Array2<f64>,
    pub contrast_epsilon: f64,
    pub zca_epsilon: f64,
}

impl PreprocessModel {
    pub fn dim(&self) -> usize {
        self.patch_mean.len()
    }

    /// Contrast-normalizes and whitens a single raw patch.
    pub fn transform_patch(&self, patch: ArrayView1<f64>) -> Result<Array1<f64>> {
        if patch.len() != self.dim() {
            return Err(GrbmError::contract(format!(
                "patch has {} values, preprocessing expects {}",
                patch.len(),
                self.dim()
            )));
        }
        let mut v = patch.to_vec();
        contrast_normalize_row(&mut v, self.contrast_epsilon);
        let centered = Array1::from(v) - &self.patch_mean;
        Ok(self.whitening_matrix.dot(&centered))
    }

    /// Contrast-normalizes and whitens raw patches.
    pub fn transform(&self, patches: &Dataset) -> Result<Dataset> {
        let normalized = contrast_normalize(patches, self.contrast_epsilon)?;
        zca_apply(self, &normalized)
    }
}

/// Fits ZCA on already contrast-normalized rows. The covariance uses 1/n.
pub fn zca_fit(patches: &Dataset, eps: f64) -> Result<PreprocessModel> {
    let (n, d) = patches.rows.dim();
    if d == 0 {
        return Err(GrbmError::contract("cannot whiten zero-dimensional rows"));
    }
    if n == 0 {
        return Err(GrbmError::contract("cannot fit whitening on no rows"));
    }
    if !(eps > 0.0) {
        return Err(GrbmError::contract("ZCA epsilon must be positive"));
    }
    let mean = patches.rows.mean_axis(Axis(0)).expect("non-empty");
    let centered = &patches.rows - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let scale = eig.eigenvalues.map(|l| 1.0 / (l.max(0.0) + eps).sqrt());
    let u = &eig.eigenvectors;
    let w = u * DMatrix::from_diagonal(&scale) * u.transpose();
    let whitening = Array2::from_shape_fn((d, d), |(i, j)| 0.5 * (w[(i, j)] + w[(j, i)]));
    Ok(PreprocessModel {
        patch_mean: mean,
        whitening_matrix: whitening,
        contrast_epsilon: CONTRAST_EPSILON,
        zca_epsilon: eps,
    })
}

/// Centers rows with the fitted mean and multiplies by the whitening matrix.
pub fn zca_apply(model: &PreprocessModel, patches: &Dataset) -> Result<Dataset> {
    if patches.dim() != model.dim() {
        return Err(GrbmError::contract(format!(
            "rows have {} columns, whitening expects {}",
            patches.dim(),
            model.dim()
        )));
    }
    let centered = &patches.rows - &model.patch_mean;
    Ok(Dataset {
        rows: centered.dot(&model.whitening_matrix.t()),
        labels: patches.labels.clone(),
        kind: DimKind::WhitenedPatch,
    })
}

/// Contrast normalization followed by a ZCA fit on the normalized rows.
pub fn fit_preprocess(patches: &Dataset, contrast_eps: f64, zca_eps: f64) -> Result<(PreprocessModel, Dataset)> {
    let normalized = contrast_normalize(patches, contrast_eps)?;
    let mut model = zca_fit(&normalized, zca_eps)?;
    model.contrast_epsilon = contrast_eps;
    let whitened = zca_apply(&model, &normalized)?;
    Ok((model, whitened))
}

/// Four-component Gaussian mixture in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGmmSpec {
    pub weights: [f64; 4],
    pub means: [[f64; 2]; 4],
    /// Row-major 2×2 covariances.
    pub covariances: [[f64; 4]; 4],
    pub seed: u64,
}

impl ToyGmmSpec {
    /// One dense component at the origin and three sparse ones at `radius`
    /// in the given directions (degrees).
    pub fn dense_and_sparse(
        dense: (f64, f64),
        sparse: (f64, f64),
        radius: f64,
        angles_deg: [f64; 3],
        seed: u64,
    ) -> Self {
        let iso = |s: f64| [s * s, 0.0, 0.0, s * s];
        let mut means = [[0.0; 2]; 4];
        for (m, a) in means[1..].iter_mut().zip(angles_deg) {
            let t = a.to_radians();
            *m = [radius * t.cos(), radius * t.sin()];
        }
        ToyGmmSpec {
            weights: [dense.0, sparse.0, sparse.0, sparse.0],
            means,
            covariances: [iso(dense.1), iso(sparse.1), iso(sparse.1), iso(sparse.1)],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(GrbmError::contract("mixture weights must be non-negative and sum to 1"));
        }
        for c in &self.covariances {
            cholesky2(c)?;
        }
        if self.means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(GrbmError::contract("mixture means must be finite"));
        }
        Ok(())
    }
}

impl Default for ToyGmmSpec {
    /// Sparse means at 30°, 90° and 150°: the middle one is the sum of the
    /// outer two, so a two-filter GRBM can place components near all three.
    fn default() -> Self {
        ToyGmmSpec::dense_and_sparse((0.7, 0.45), (0.1, 0.2), 3.5, [30.0, 90.0, 150.0], 0)
    }
}

impl ToyGmmSpec {
    /// Sparse means spread evenly at 90°, 210° and 330°, radius 3.
    pub fn symmetric() -> Self {
        ToyGmmSpec::dense_and_sparse((0.7, 0.45), (0.1, 0.2), 3.0, [90.0, 210.0, 330.0], 0)
    }
}

/// Lower Cholesky factor `[l11, l21, l22]` of a symmetric positive definite 2×2 matrix.
fn cholesky2(c: &[f64; 4]) -> Result<[f64; 3]> {
    let [a, b, b2, d] = *c;
    if (b - b2).abs() > 1e-12 * (1.0 + b.abs()) || !(a > 0.0) {
        return Err(GrbmError::contract(format!("covariance {c:?} is not symmetric positive definite")));
    }
    let l11 = a.sqrt();
    let l21 = b / l11;
    let rest = d - l21 * l21;
    if !(rest > 0.0) {
        return Err(GrbmError::contract(format!("covariance {c:?} is not symmetric positive definite")));
    }
    Ok([l11, l21, rest.sqrt()])
}

/// `n` i.i.d. draws labelled by their generating component.
pub fn toy_gmm_generate(spec: &ToyGmmSpec, n: usize) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(GrbmError::contract("need at least one sample"));
    }
    let factors = spec
        .covariances
        .iter()
        .map(cholesky2)
        .collect::<Result<Vec<_>>>()?;
    let mut rng = rng::stream(spec.seed, purpose::TOY, 0);
    let mut rows = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for mut row in rows.rows_mut() {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = 3;
        for (c, w) in spec.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = c;
                break;
            }
        }
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let [l11, l21, l22] = factors[k];
        row[0] = spec.means[k][0] + l11 * z0;
        row[1] = spec.means[k][1] + l21 * z0 + l22 * z1;
        labels.push(k as u32);
    }
    Dataset::new(rows, Some(labels), DimKind::Points)
}

/// Relative colour spread of synthetic bars across channels.
pub const BAR_TINT: f64 = 0.25;

/// Synthetic stand-in for natural images. An image is a flat grey background
/// crossed by one to three light or dark anti-aliased bars of one random
/// colour. Each class has its own bar orientation, jittered by half the gap
/// to the next class; bars after the first take a random orientation 30% of
/// the time. Most patches
/// are exactly flat and the rest contain an oriented edge,
/// which gives whitened patches the heavy tails of natural images.
pub fn synthetic_edge_images(n: usize, seed: u64) -> ImageSet {
    let images: Vec<(u8, Vec<u8>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, purpose::SYNTHETIC, i as u64);
            let class = rng.random_range(0..CIFAR_CLASSES);
            let hue = rng.random_range(0.0..2.0 * PI);
            let level = rng.random_range(0.35..0.65);
            let tint: Vec<f64> = (0..CHANNELS)
                .map(|c| 1.0 + BAR_TINT * (hue + 2.0 * PI * c as f64 / 3.0).cos())
                .collect();
            let mut plane = vec![0.0f64; IMAGE_SIDE * IMAGE_SIDE];
            let bars = rng.random_range(1..=3);
            for b in 0..bars {
                let centre = if b == 0 || rng.random::<f64>() < 0.7 { class as f64 } else { rng.random_range(0.0..CIFAR_CLASSES as f64) };
                let angle = (centre + rng.random_range(-0.5..0.5)) * PI / CIFAR_CLASSES as f64;
                let (s, c) = angle.sin_cos();
                let offset = rng.random_range(-14.0..14.0);
                let half_width = rng.random_range(0.75..2.0);
                let amplitude = if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random_range(0.15..0.3);
                for y in 0..IMAGE_SIDE {
                    for x in 0..IMAGE_SIDE {
                        // distance from the bar's centre line, measured across the bar
                        let d = (x as f64 - 15.5) * -s + (y as f64 - 15.5) * c - offset;
                        let cover = (half_width + 0.5 - d.abs()).clamp(0.0, 1.0);
                        plane[y * IMAGE_SIDE + x] += amplitude * cover;
                    }
                }
            }
            let mut pixels = vec![0u8; IMAGE_BYTES];
            for (ch, t) in tint.iter().enumerate() {
                for (k, v) in plane.iter().enumerate() {
                    let value = (level + t * v).clamp(0.0, 1.0);
                    pixels[ch * IMAGE_SIDE * IMAGE_SIDE + k] = (value * 255.0).round() as u8;
                }
            }
            (class as u8, pixels)
        })
        .collect();
    let mut pixels = Vec::with_capacity(n * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(n);
    for (l, p) in images {
        labels.push(l);
        pixels.extend(p);
    }
    ImageSet { pixels, labels }
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let (rows, dim) = ds.rows.dim();
    let mut out = Vec::with_capacity(24 + rows * dim * 8 + rows * 4);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(dim as u64).to_le_bytes());
    for x in ds.rows.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    if let Some(labels) = &ds.labels {
        for l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    out
}

/// Parses a DSET container. The labels block is present iff bytes remain after the rows.
pub fn decode_dataset(bytes: &[u8], path: &Path, kind: DimKind) -> Result<Dataset> {
    let mut r = Reader::new(bytes, path);
    r.magic(DATASET_MAGIC)?;
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(r.err(format!("unsupported dataset version {version}")));
    }
    let rows = usize::try_from(r.u64()?).map_err(|_| r.err("row count overflows"))?;
    let dim = usize::try_from(r.u64()?).map_err(|_| r.err("dimension overflows"))?;
    let count = rows.checked_mul(dim).ok_or_else(|| r.err("size overflows"))?;
    let data = r.f64s(count)?;
    let labels = if r.remaining() > 0 {
        let mut l = Vec::with_capacity(rows);
        for _ in 0..rows {
            l.push(r.u32()?);
        }
        Some(l)
    } else {
        None
    };
    r.finish()?;
    let rows = Array2::from_shape_vec((rows, dim), data).map_err(|e| r.err(e.to_string()))?;
    Dataset::new(rows, labels, kind).map_err(|e| GrbmError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_atomic(path, &encode_dataset(ds))
}

pub fn read_dataset(path: &Path, kind: DimKind) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    decode_dataset(&bytes, path, kind)
}
