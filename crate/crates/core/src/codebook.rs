//! Per-view visual codebooks (k-means) and codeword images.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::ingest::FeatureSet;
use crate::View;

/// Visual words of one camera view: `K` centroids of dimension `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    view: View,
    dim: usize,
    centroids: Vec<f32>,
}

impl Codebook {
    pub fn new(view: View, dim: usize, centroids: Vec<f32>) -> Result<Self> {
        if dim == 0 || centroids.is_empty() || centroids.len() % dim != 0 {
            return Err(Error::Format(format!(
                "centroid buffer of length {} is not a positive multiple of dim {dim}",
                centroids.len()
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite centroid entry".into()));
        }
        Ok(Codebook { view, dim, centroids })
    }

    pub fn view(&self) -> View {
        self.view
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.centroids.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }
    pub fn centroid(&self, k: usize) -> &[f32] {
        &self.centroids[k * self.dim..(k + 1) * self.dim]
    }

    /// Same centroids, relabelled to another view (shared-codebook mode).
    pub fn with_view(mut self, view: View) -> Self {
        self.view = view;
        self
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, v: &[f32]) -> usize {
        let mut best = (0, f64::INFINITY);
        for k in 0..self.len() {
            let d = sq_dist(self.centroid(k), v);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(CODEBOOK_MAGIC)
            .u8(self.view.number())
            .u32(self.len() as u32)
            .u32(self.dim as u32);
        for &c in &self.centroids {
            w.f32(c);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "codebook");
        r.magic(CODEBOOK_MAGIC)?;
        let view = View::from_number(r.u8()?)?;
        let k = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let mut centroids = Vec::with_capacity(k * dim);
        for _ in 0..k * dim {
            centroids.push(r.f32()?);
        }
        Codebook::new(view, dim, centroids)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&binio::read_file(path)?)
    }
}

const CODEBOOK_MAGIC: &[u8; 4] = b"PRCB";

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn sq_dist64(a: &[f64], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y as f64;
            d * d
        })
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding.
#[derive(Clone, Copy, Debug)]
pub struct KMeans {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

impl KMeans {
    pub fn fit(&self, samples: &[Vec<f32>]) -> Result<KMeansFit> {
        let k = self.k;
        if k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if samples.len() < k {
            return Err(Error::TooFewSamples { needed: k, got: samples.len() });
        }
        let dim = samples[0].len();
        if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
        }
        let distinct: HashSet<Vec<u32>> = samples
            .iter()
            .map(|s| s.iter().map(|v| v.to_bits()).collect())
            .collect();
        if distinct.len() < k {
            return Err(Error::TooFewSamples { needed: k, got: distinct.len() });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut centroids = plus_plus(samples, k, &mut rng);
        let mut inertia_history = Vec::new();
        let mut iterations = 0;
        loop {
            let assign: Vec<(usize, f64)> = samples.par_iter().map(|s| nearest64(&centroids, s)).collect();
            inertia_history.push(assign.iter().map(|a| a.1).sum());
            iterations += 1;

            let mut sums = vec![vec![0.0f64; dim]; k];
            let mut counts = vec![0usize; k];
            for (s, &(c, _)) in samples.iter().zip(&assign) {
                counts[c] += 1;
                for (acc, &v) in sums[c].iter_mut().zip(s) {
                    *acc += v as f64;
                }
            }
            // empty clusters take the points farthest from their centroid
            let mut by_distance: Vec<usize> = (0..samples.len()).collect();
            by_distance.sort_by(|&a, &b| assign[b].1.total_cmp(&assign[a].1).then(a.cmp(&b)));
            let mut donors = by_distance.into_iter();
            let mut next = Vec::with_capacity(k);
            for c in 0..k {
                if counts[c] == 0 {
                    let p = donors.next().expect("k <= sample count");
                    next.push(samples[p].iter().map(|&v| v as f64).collect::<Vec<_>>());
                } else {
                    let n = counts[c] as f64;
                    next.push(sums[c].iter().map(|s| s / n).collect());
                }
            }
            let shift = centroids
                .iter()
                .zip(&next)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .fold(0.0f64, f64::max);
            centroids = next;
            if shift < self.tol || iterations >= self.max_iters {
                break;
            }
        }
        Ok(KMeansFit {
            centroids,
            inertia_history,
            iterations,
        })
    }
}

fn nearest64(centroids: &[Vec<f64>], s: &[f32]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist64(c, s);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus(samples: &[Vec<f32>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let to64 = |s: &Vec<f32>| s.iter().map(|&v| v as f64).collect::<Vec<f64>>();
    let first = rng.gen_range(0..samples.len());
    let mut centroids = vec![to64(&samples[first])];
    let mut d2: Vec<f64> = samples.iter().map(|s| sq_dist64(&centroids[0], s)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("distinct samples remain");
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = to64(&samples[pick]);
        for (dist, s) in d2.iter_mut().zip(samples) {
            *dist = dist.min(sq_dist64(&c, s));
        }
        centroids.push(c);
    }
    centroids
}

/// Trains one view's codebook. Returns the codebook and its final inertia.
pub fn train_codebook(
    view: View,
    samples: &[Vec<f32>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<(Codebook, f64)> {
    let fit = KMeans { k, seed, max_iters, tol }.fit(samples)?;
    let dim = samples[0].len();
    let flat: Vec<f32> = fit.centroids.iter().flatten().map(|&v| v as f32).collect();
    Ok((Codebook::new(view, dim, flat)?, fit.inertia()))
}

/// Uniformly samples up to `n` feature vectors (without replacement) from a view's images.
pub fn sample_features(sets: &[FeatureSet], n: usize, seed: u64) -> Vec<Vec<f32>> {
    let all: Vec<&Vec<f32>> = sets.iter().flat_map(|s| s.features.iter().map(|f| &f.vector)).collect();
    if all.len() <= n {
        return all.into_iter().cloned().collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, all.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i].clone()).collect()
}

/// A grid of codeword indices, one per patch center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodewordImage {
    pub entity_id: String,
    pub view: View,
    height: usize,
    width: usize,
    codewords: usize,
    codes: Vec<u32>,
}

impl CodewordImage {
    pub fn new(
        entity_id: impl Into<String>,
        view: View,
        height: usize,
        width: usize,
        codewords: usize,
        codes: Vec<u32>,
    ) -> Result<Self> {
        if codes.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                found: codes.len(),
            });
        }
        if let Some(&bad) = codes.iter().find(|&&c| c as usize >= codewords) {
            return Err(Error::IndexOutOfRange(bad as usize, codewords));
        }
        Ok(CodewordImage {
            entity_id: entity_id.into(),
            view,
            height,
            width,
            codewords,
            codes,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
    /// Codebook size `K`.
    pub fn codewords(&self) -> usize {
        self.codewords
    }
    pub fn codes(&self) -> &[u32] {
        &self.codes
    }
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.codes[row * self.width + col]
    }

    /// Sorted, deduplicated codewords occurring in the image.
    pub fn present(&self) -> Vec<u32> {
        let mut seen = vec![false; self.codewords];
        for &c in &self.codes {
            seen[c as usize] = true;
        }
        (0..self.codewords as u32).filter(|&c| seen[c as usize]).collect()
    }
}

/// Quantizes every patch to its nearest centroid.
pub fn encode_image(
    entity_id: &str,
    features: &FeatureSet,
    codebook: &Codebook,
) -> Result<CodewordImage> {
    if let Some(f) = features.features.iter().find(|f| f.vector.len() != codebook.dim()) {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: f.vector.len(),
        });
    }
    let codes: Vec<u32> = features
        .features
        .par_iter()
        .map(|f| codebook.nearest(&f.vector) as u32)
        .collect();
    CodewordImage::new(
        entity_id,
        codebook.view(),
        features.grid_height,
        features.grid_width,
        codebook.len(),
        codes,
    )
}

/// Locations `(row, col)` holding codeword `u`, in row-major order.
pub fn codeword_support(ci: &CodewordImage, u: usize) -> Vec<(usize, usize)> {
    ci.codes
        .iter()
        .enumerate()
        .filter(|(_, &c)| c as usize == u)
        .map(|(i, _)| (i / ci.width, i % ci.width))
        .collect()
}
