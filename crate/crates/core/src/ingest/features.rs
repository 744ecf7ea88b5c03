//! Dense per-patch descriptors and the `PRFT` feature-matrix file.

use std::f64::consts::PI;
use std::path::Path;

use super::pnm::{read_pnm, RasterImage};
use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};

/// Number of gradient-orientation bins in the baseline descriptor.
pub const ORIENTATION_BINS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct PatchFeature {
    /// Pixel row/column of the patch center.
    pub row: u16,
    pub col: u16,
    pub vector: Vec<f32>,
}

/// Features of one image laid out on a regular `grid_height × grid_width` grid
/// of patch centers, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub grid_height: usize,
    pub grid_width: usize,
    pub features: Vec<PatchFeature>,
}

impl FeatureSet {
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, |f| f.vector.len())
    }
}

/// Anything that turns an image into a grid of patch descriptors.
pub trait FeatureExtractor: Sync {
    fn dim(&self, channels: usize) -> usize;
    fn extract(&self, img: &RasterImage) -> Result<FeatureSet>;
}

/// Per-channel mean and variance plus an 8-bin magnitude-weighted
/// gradient-orientation histogram over each `patch × patch` window.
///
/// Samples are scaled to `[0, 1]`. Gradients are half central differences of
/// the channel-averaged intensity with clamped borders; bin `k` is centered
/// on angle `k·45°`, so a purely horizontal gradient lands in bin 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BaselineDescriptor {
    pub patch: usize,
    pub stride: usize,
}

impl Default for BaselineDescriptor {
    fn default() -> Self {
        BaselineDescriptor { patch: 5, stride: 1 }
    }
}

impl FeatureExtractor for BaselineDescriptor {
    fn dim(&self, channels: usize) -> usize {
        2 * channels + ORIENTATION_BINS
    }

    fn extract(&self, img: &RasterImage) -> Result<FeatureSet> {
        extract_patch_features(img, self.patch, self.stride)
    }
}

/// Dense extraction on the stride grid. See [`BaselineDescriptor`].
pub fn extract_patch_features(img: &RasterImage, patch: usize, stride: usize) -> Result<FeatureSet> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    if patch == 0 || patch % 2 == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "patch must be odd and positive, stride positive (got {patch}, {stride})"
        )));
    }
    if patch > w.min(h) {
        return Err(Error::PatchTooLarge { patch, width: w, height: h });
    }
    if w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(Error::Format("image too large for u16 patch coordinates".into()));
    }

    let intensity: Vec<f64> = (0..h * w)
        .map(|i| {
            let px = &img.pixels()[i * ch..(i + 1) * ch];
            px.iter().map(|&v| v as f64).sum::<f64>() / (255.0 * ch as f64)
        })
        .collect();
    let at = |r: usize, c: usize| intensity[r * w + c];
    // (bin, magnitude) per pixel
    let grad: Vec<(usize, f64)> = (0..h * w)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            let gx = (at(r, (c + 1).min(w - 1)) - at(r, c.saturating_sub(1))) / 2.0;
            let gy = (at((r + 1).min(h - 1), c) - at(r.saturating_sub(1), c)) / 2.0;
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                return (0, 0.0);
            }
            let step = 2.0 * PI / ORIENTATION_BINS as f64;
            let bin = (gy.atan2(gx) / step).round().rem_euclid(ORIENTATION_BINS as f64) as usize;
            (bin % ORIENTATION_BINS, mag)
        })
        .collect();

    let half = patch / 2;
    let grid_height = (h - patch) / stride + 1;
    let grid_width = (w - patch) / stride + 1;
    let area = (patch * patch) as f64;
    let mut features = Vec::with_capacity(grid_height * grid_width);
    for gr in 0..grid_height {
        for gc in 0..grid_width {
            let (r0, c0) = (gr * stride, gc * stride);
            let mut sum = vec![0.0f64; ch];
            let mut sumsq = vec![0.0f64; ch];
            let mut hist = [0.0f64; ORIENTATION_BINS];
            for r in r0..r0 + patch {
                for c in c0..c0 + patch {
                    for (k, (s, sq)) in sum.iter_mut().zip(sumsq.iter_mut()).enumerate() {
                        let v = img.get(r, c, k) as f64 / 255.0;
                        *s += v;
                        *sq += v * v;
                    }
                    let (bin, mag) = grad[r * w + c];
                    hist[bin] += mag;
                }
            }
            let mut vector = Vec::with_capacity(2 * ch + ORIENTATION_BINS);
            for k in 0..ch {
                let mean = sum[k] / area;
                let var = (sumsq[k] / area - mean * mean).max(0.0);
                vector.push(mean as f32);
                vector.push(var as f32);
            }
            vector.extend(hist.iter().map(|&m| (m / area) as f32));
            features.push(PatchFeature {
                row: (r0 + half) as u16,
                col: (c0 + half) as u16,
                vector,
            });
        }
    }
    Ok(FeatureSet {
        grid_height,
        grid_width,
        features,
    })
}

pub(crate) fn is_feature_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("prft"))
}

const FEATURE_MAGIC: &[u8; 4] = b"PRFT";

pub fn encode_feature_matrix(set: &FeatureSet) -> Vec<u8> {
    let dim = set.dim();
    let mut w = Writer::default();
    w.bytes(FEATURE_MAGIC).u32(set.features.len() as u32).u32(dim as u32);
    for f in &set.features {
        for &v in &f.vector {
            w.f32(v);
        }
    }
    for f in &set.features {
        w.u16(f.row).u16(f.col);
    }
    w.buf
}

/// Decodes a `PRFT` file. Patch centers must form a full row-major grid.
pub fn decode_feature_matrix(bytes: &[u8]) -> Result<FeatureSet> {
    let mut r = Reader::new(bytes, "feature matrix");
    r.magic(FEATURE_MAGIC)?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let mut vectors = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            let x = r.f32()?;
            if !x.is_finite() {
                return Err(Error::Format("non-finite feature value".into()));
            }
            v.push(x);
        }
        vectors.push(v);
    }
    let mut features = Vec::with_capacity(count);
    for vector in vectors {
        let row = r.u16()?;
        let col = r.u16()?;
        features.push(PatchFeature { row, col, vector });
    }
    let (grid_height, grid_width) = infer_grid(&features)?;
    Ok(FeatureSet {
        grid_height,
        grid_width,
        features,
    })
}

fn infer_grid(features: &[PatchFeature]) -> Result<(usize, usize)> {
    if features.is_empty() {
        return Ok((0, 0));
    }
    let first_row = features[0].row;
    let width = features.iter().take_while(|f| f.row == first_row).count();
    if features.len() % width != 0 {
        return Err(Error::Format("patch centers do not form a full grid".into()));
    }
    let height = features.len() / width;
    for (k, f) in features.iter().enumerate() {
        let (gr, gc) = (k / width, k % width);
        if f.row != features[gr * width].row || f.col != features[gc].col {
            return Err(Error::Format("patch centers are not in row-major grid order".into()));
        }
    }
    Ok((height, width))
}

pub fn write_feature_matrix(path: &Path, set: &FeatureSet) -> Result<()> {
    binio::write_atomic(path, &encode_feature_matrix(set))
}

/// Loads features for one manifest path: `.prft` files are read directly,
/// anything else is decoded as PGM/PPM and run through `extractor`.
pub fn load_features(path: &Path, extractor: &dyn FeatureExtractor) -> Result<FeatureSet> {
    if is_feature_file(path) {
        decode_feature_matrix(&binio::read_file(path)?)
    } else {
        extractor.extract(&read_pnm(path)?)
    }
}
