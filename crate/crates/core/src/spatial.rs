//! Spatial kernels, chessboard distance transforms and multi-shot activation maps.
//!
//! For an entity with images `I_1..I_M` the activation of codeword `u` at grid
//! location `h` is the average over images of the best kernel response from any
//! location carrying `u`:
//!
//! ```text
//! ψ_u(h) = 1/M · Σ_m max_{π ∈ support_m(u)} κ(dist(π, h))
//! ```
//!
//! Every kernel here is non-increasing in distance, so the inner maximum equals
//! `κ` of the distance transform of the support, which is how it is computed.

use std::path::Path;

use rayon::prelude::*;

use crate::binio::{self, Reader, Writer};
use crate::codebook::CodewordImage;
use crate::error::{Error, Result};
use crate::View;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// `exp(-d/σ)` for `d ≤ α`, else 0.
    TruncatedGaussian,
    /// `max(0, 1 - d/σ)`.
    TruncatedLinear,
    /// 1 for `d ≤ σ`, else 0.
    Box,
}

/// A spatial kernel over chessboard distance, with a uniform prior over locations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sigma: f64,
    /// Truncation radius; only read by [`KernelKind::TruncatedGaussian`].
    pub alpha: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, sigma: f64, alpha: f64) -> Result<Self> {
        let spec = KernelSpec { kind, sigma, alpha };
        spec.validate()?;
        Ok(spec)
    }

    /// Truncated Gaussian with the default radius `α = 2σ`.
    pub fn truncated_gaussian(sigma: f64) -> Result<Self> {
        Self::new(KernelKind::TruncatedGaussian, sigma, 2.0 * sigma)
    }

    pub fn truncated_linear(sigma: f64) -> Result<Self> {
        Self::new(KernelKind::TruncatedLinear, sigma, 0.0)
    }

    pub fn boxed(sigma: f64) -> Result<Self> {
        Self::new(KernelKind::Box, sigma, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        // a zero-radius box is a point indicator and still well defined
        let sigma_ok = match self.kind {
            KernelKind::Box => self.sigma >= 0.0,
            _ => self.sigma > 0.0,
        };
        if !sigma_ok || !self.sigma.is_finite() {
            return Err(Error::Config(format!("kernel sigma out of range: {}", self.sigma)));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("kernel alpha must be finite and >= 0: {}", self.alpha)));
        }
        Ok(())
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kind: KernelKind::Box,
            sigma: 3.0,
            alpha: 6.0,
        }
    }
}

/// Kernel response at distance `d ≥ 0`; `f64::INFINITY` maps to 0.
pub fn kappa(spec: &KernelSpec, d: f64) -> f64 {
    match spec.kind {
        KernelKind::TruncatedGaussian => {
            if d <= spec.alpha {
                (-d / spec.sigma).exp()
            } else {
                0.0
            }
        }
        KernelKind::TruncatedLinear => (1.0 - d / spec.sigma).max(0.0),
        KernelKind::Box => {
            if d <= spec.sigma {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Distance-transform value for cells with no support anywhere on the grid.
pub const UNREACHABLE: u32 = u32::MAX;

#[inline]
fn dist_to_f64(d: u32) -> f64 {
    if d == UNREACHABLE {
        f64::INFINITY
    } else {
        d as f64
    }
}

/// Exact chessboard distance from every cell to the nearest `true` cell of
/// `mask` (row-major `height × width`), by a forward and a backward sweep.
pub fn distance_transform_mask(mask: &[bool], height: usize, width: usize) -> Vec<u32> {
    assert_eq!(mask.len(), height * width);
    let mut d: Vec<u32> = mask.iter().map(|&m| if m { 0 } else { UNREACHABLE }).collect();
    let step = |v: u32| v.saturating_add(1);
    for r in 0..height {
        for c in 0..width {
            let mut best = d[r * width + c];
            if c > 0 {
                best = best.min(step(d[r * width + c - 1]));
            }
            if r > 0 {
                let up = (r - 1) * width;
                best = best.min(step(d[up + c]));
                if c > 0 {
                    best = best.min(step(d[up + c - 1]));
                }
                if c + 1 < width {
                    best = best.min(step(d[up + c + 1]));
                }
            }
            d[r * width + c] = best;
        }
    }
    for r in (0..height).rev() {
        for c in (0..width).rev() {
            let mut best = d[r * width + c];
            if c + 1 < width {
                best = best.min(step(d[r * width + c + 1]));
            }
            if r + 1 < height {
                let down = (r + 1) * width;
                best = best.min(step(d[down + c]));
                if c > 0 {
                    best = best.min(step(d[down + c - 1]));
                }
                if c + 1 < width {
                    best = best.min(step(d[down + c + 1]));
                }
            }
            d[r * width + c] = best;
        }
    }
    d
}

/// Chessboard distance transform of a support given as `(row, col)` locations.
pub fn distance_transform(support: &[(usize, usize)], height: usize, width: usize) -> Vec<u32> {
    let mut mask = vec![false; height * width];
    for &(r, c) in support {
        mask[r * width + c] = true;
    }
    distance_transform_mask(&mask, height, width)
}

/// Per-entity activations ψ, stored sparsely by location.
///
/// Entries at each location are sorted by codeword and strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMap {
    pub entity_id: String,
    pub view: View,
    codewords: usize,
    height: usize,
    width: usize,
    offsets: Vec<u32>,
    entries: Vec<(u32, f32)>,
}

impl ActivationMap {
    pub fn codewords(&self) -> usize {
        self.codewords
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
    pub fn locations(&self) -> usize {
        self.height * self.width
    }
    /// Number of stored nonzero activations.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Nonzero `(codeword, ψ)` pairs at a row-major location.
    #[inline]
    pub fn at(&self, loc: usize) -> &[(u32, f32)] {
        &self.entries[self.offsets[loc] as usize..self.offsets[loc + 1] as usize]
    }

    pub fn value(&self, u: usize, row: usize, col: usize) -> f32 {
        let cell = self.at(row * self.width + col);
        match cell.binary_search_by_key(&(u as u32), |e| e.0) {
            Ok(i) => cell[i].1,
            Err(_) => 0.0,
        }
    }

    /// Dense grid for one codeword.
    pub fn channel(&self, u: usize) -> Vec<f32> {
        (0..self.locations())
            .map(|loc| {
                let cell = self.at(loc);
                cell.binary_search_by_key(&(u as u32), |e| e.0).map_or(0.0, |i| cell[i].1)
            })
            .collect()
    }

    /// Codewords with any nonzero activation.
    pub fn active_codewords(&self) -> Vec<u32> {
        let mut seen = vec![false; self.codewords];
        for &(u, _) in &self.entries {
            seen[u as usize] = true;
        }
        (0..self.codewords as u32).filter(|&u| seen[u as usize]).collect()
    }

    /// Builds from a dense codeword-major `K × H × W` buffer.
    pub fn from_dense(
        entity_id: impl Into<String>,
        view: View,
        codewords: usize,
        height: usize,
        width: usize,
        dense: &[f32],
    ) -> Result<Self> {
        let n = height * width;
        if dense.len() != codewords * n {
            return Err(Error::DimensionMismatch {
                expected: codewords * n,
                found: dense.len(),
            });
        }
        let channels: Vec<(u32, &[f32])> = (0..codewords)
            .map(|u| (u as u32, &dense[u * n..(u + 1) * n]))
            .collect();
        Ok(Self::from_channels(entity_id.into(), view, codewords, height, width, &channels))
    }

    fn from_channels(
        entity_id: String,
        view: View,
        codewords: usize,
        height: usize,
        width: usize,
        channels: &[(u32, &[f32])],
    ) -> Self {
        let n = height * width;
        let mut counts = vec![0u32; n + 1];
        for (_, ch) in channels {
            for (loc, &v) in ch.iter().enumerate() {
                if v != 0.0 {
                    counts[loc + 1] += 1;
                }
            }
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let mut fill = offsets.clone();
        let mut entries = vec![(0u32, 0f32); offsets[n] as usize];
        // channels arrive in increasing codeword order, keeping cells sorted
        for &(u, ch) in channels {
            for (loc, &v) in ch.iter().enumerate() {
                if v != 0.0 {
                    entries[fill[loc] as usize] = (u, v);
                    fill[loc] += 1;
                }
            }
        }
        ActivationMap {
            entity_id,
            view,
            codewords,
            height,
            width,
            offsets,
            entries,
        }
    }

    pub fn to_dense(&self) -> Vec<f32> {
        let n = self.locations();
        let mut dense = vec![0.0f32; self.codewords * n];
        for loc in 0..n {
            for &(u, v) in self.at(loc) {
                dense[u as usize * n + loc] = v;
            }
        }
        dense
    }

    /// `PRAM` encoding: header, then the dense codeword-major values where
    /// each run of zeros is written as a single `0.0` followed by a `u32` run length.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(ACTIVATION_MAGIC)
            .string(&self.entity_id)
            .u8(self.view.number())
            .u32(self.codewords as u32)
            .u32(self.height as u32)
            .u32(self.width as u32);
        let dense = self.to_dense();
        let mut i = 0;
        while i < dense.len() {
            if dense[i] == 0.0 {
                let start = i;
                while i < dense.len() && dense[i] == 0.0 {
                    i += 1;
                }
                w.f32(0.0).u32((i - start) as u32);
            } else {
                w.f32(dense[i]);
                i += 1;
            }
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "activation map");
        r.magic(ACTIVATION_MAGIC)?;
        let entity_id = r.string()?;
        let view = View::from_number(r.u8()?)?;
        let k = r.u32()? as usize;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        let total = k * h * w;
        let mut dense = Vec::with_capacity(total);
        while dense.len() < total {
            let v = r.f32()?;
            if v == 0.0 {
                let run = r.u32()? as usize;
                if run == 0 || dense.len() + run > total {
                    return Err(Error::Format("activation map: bad zero run".into()));
                }
                dense.resize(dense.len() + run, 0.0);
            } else if !(0.0..=1.0).contains(&v) {
                return Err(Error::Format(format!("activation value {v} outside [0, 1]")));
            } else {
                dense.push(v);
            }
        }
        Self::from_dense(entity_id, view, k, h, w, &dense)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&binio::read_file(path)?)
    }
}

const ACTIVATION_MAGIC: &[u8; 4] = b"PRAM";

/// Multi-shot activation map of one entity in one view.
pub fn activation_map(images: &[CodewordImage], spec: &KernelSpec) -> Result<ActivationMap> {
    spec.validate()?;
    let first = images.first().ok_or(Error::EmptyEntity)?;
    let (h, w) = first.dims();
    let k = first.codewords();
    for img in images {
        if img.dims() != (h, w) {
            return Err(Error::DimensionMismatch {
                expected: h * w,
                found: img.height() * img.width(),
            });
        }
        if img.codewords() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: img.codewords(),
            });
        }
    }
    let presence: Vec<Vec<bool>> = images
        .iter()
        .map(|img| {
            let mut p = vec![false; k];
            for &c in img.codes() {
                p[c as usize] = true;
            }
            p
        })
        .collect();
    let active: Vec<u32> = (0..k as u32)
        .filter(|&u| presence.iter().any(|p| p[u as usize]))
        .collect();

    let channels: Vec<(u32, Vec<f32>)> = active
        .par_iter()
        .map(|&u| {
            let mut mean = vec![0.0f32; h * w];
            for (m, img) in images.iter().enumerate() {
                let count = (m + 1) as f32;
                if !presence[m][u as usize] {
                    // zero response: running mean shrinks toward 0
                    for v in mean.iter_mut() {
                        *v += (0.0 - *v) / count;
                    }
                    continue;
                }
                let mask: Vec<bool> = img.codes().iter().map(|&c| c == u).collect();
                let dt = distance_transform_mask(&mask, h, w);
                for (v, &d) in mean.iter_mut().zip(&dt) {
                    let x = kappa(spec, dist_to_f64(d)) as f32;
                    *v += (x - *v) / count;
                }
            }
            (u, mean)
        })
        .collect();
    let borrowed: Vec<(u32, &[f32])> = channels.iter().map(|(u, c)| (*u, c.as_slice())).collect();
    Ok(ActivationMap::from_channels(
        first.entity_id.clone(),
        first.view,
        k,
        h,
        w,
        &borrowed,
    ))
}
