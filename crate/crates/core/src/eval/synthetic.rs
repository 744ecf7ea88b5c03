//! Seeded synthetic re-identification data on codeword grids.
//!
//! Each entity has a signature: a stack of horizontal bands, some split
//! into left and right halves, each filled with one codeword. View-two
//! images map every codeword through a planted permutation. Every image is
//! shifted by a random offset of at most `jitter` cells (edges replicated)
//! and view-two cells are replaced by a different random codeword with
//! probability `noise`.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::codebook::CodewordImage;
use crate::error::{Error, Result};
use crate::ingest::{write_pnm, RasterImage};
use crate::matcher::MatchStructure;
use crate::View;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_test: usize,
    /// Images per entity in view one and view two.
    pub images_per_entity: (usize, usize),
    pub height: usize,
    pub width: usize,
    pub codewords: usize,
    /// Codeword `u` in view one shows up as `permutation[u]` in view two.
    /// Drawn from the seed when absent.
    pub permutation: Option<Vec<u32>>,
    pub noise: f64,
    pub jitter: usize,
    /// Fraction of probes whose gallery slot holds an unrelated entity.
    pub unmatched: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_train: 40,
            n_test: 40,
            images_per_entity: (1, 1),
            height: 16,
            width: 8,
            codewords: 16,
            permutation: None,
            noise: 0.1,
            jitter: 2,
            unmatched: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise must be in [0, 1), got {}", self.noise)));
        }
        if !(0.0..=1.0).contains(&self.unmatched) {
            return Err(Error::Config(format!("unmatched fraction must be in [0, 1], got {}", self.unmatched)));
        }
        if self.codewords < 2 || self.height < 2 || self.width < 2 {
            return Err(Error::Config("need at least 2 codewords and a 2×2 grid".into()));
        }
        if self.images_per_entity.0 == 0 || self.images_per_entity.1 == 0 {
            return Err(Error::Config("every entity needs at least one image per view".into()));
        }
        if let Some(p) = &self.permutation {
            let mut sorted = p.clone();
            sorted.sort_unstable();
            if sorted != (0..self.codewords as u32).collect::<Vec<_>>() {
                return Err(Error::Config("permutation must rearrange 0..K".into()));
            }
        }
        Ok(())
    }

    /// The planted cross-view permutation.
    pub fn planted_permutation(&self) -> Vec<u32> {
        self.permutation.clone().unwrap_or_else(|| {
            let mut p: Vec<u32> = (0..self.codewords as u32).collect();
            p.shuffle(&mut rng_for(self.seed, "permutation"));
            p
        })
    }

    /// Noise-free view-one layout of an entity, row-major.
    pub fn signature(&self, id: &str) -> Vec<u32> {
        let mut rng = rng_for(self.seed, &format!("signature/{id}"));
        let (h, w, k) = (self.height, self.width, self.codewords as u32);
        let bands = rng.gen_range(3..=6).min(h);
        let mut cuts: Vec<usize> = (1..h).collect();
        cuts.shuffle(&mut rng);
        let mut cuts: Vec<usize> = cuts.into_iter().take(bands - 1).collect();
        cuts.sort_unstable();
        cuts.insert(0, 0);
        cuts.push(h);
        let mut codes = vec![0u32; h * w];
        for b in cuts.windows(2) {
            let left = rng.gen_range(0..k);
            let (right, split) = if rng.gen_bool(0.4) {
                (rng.gen_range(0..k), rng.gen_range(1..w))
            } else {
                (left, w)
            };
            for r in b[0]..b[1] {
                for c in 0..w {
                    codes[r * w + c] = if c < split { left } else { right };
                }
            }
        }
        codes
    }
}

/// One evaluation split: probes in view one, galleries in view two.
#[derive(Clone, Debug)]
pub struct SyntheticSet {
    pub probes: Vec<Vec<CodewordImage>>,
    pub galleries: Vec<Vec<CodewordImage>>,
    /// `truth[i][j]` is set when probe `i` and gallery `j` are one entity.
    pub truth: MatchStructure,
}

impl SyntheticSet {
    pub fn probe_ids(&self) -> Vec<String> {
        self.probes.iter().map(|g| g[0].entity_id.clone()).collect()
    }
    pub fn gallery_ids(&self) -> Vec<String> {
        self.galleries.iter().map(|g| g[0].entity_id.clone()).collect()
    }
}

fn rng_for(seed: u64, label: &str) -> ChaCha8Rng {
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(label.as_bytes()).finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Train and test splits with disjoint entities and a shared permutation.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(SyntheticSet, SyntheticSet)> {
    spec.validate()?;
    let perm = spec.planted_permutation();
    let train = build_set(spec, &perm, "train", spec.n_train)?;
    let test = build_set(spec, &perm, "test", spec.n_test)?;
    Ok((train, test))
}

fn build_set(spec: &SyntheticSpec, perm: &[u32], split: &str, n: usize) -> Result<SyntheticSet> {
    let mut rng = rng_for(spec.seed, &format!("layout/{split}"));
    let unmatched = (spec.unmatched * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut distractor = vec![false; n];
    for &i in order.iter().take(unmatched) {
        distractor[i] = true;
    }

    let mut probes = Vec::with_capacity(n);
    let mut galleries = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("{split}{i:04}");
        probes.push(entity_images(spec, perm, &id, View::One)?);
        let gid = if distractor[i] { format!("{split}x{i:04}") } else { id };
        galleries.push(entity_images(spec, perm, &gid, View::Two)?);
    }
    // gallery position carries no information about identity
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut rng);
    let mut shuffled = vec![Vec::new(); n];
    let mut truth = MatchStructure::zeros(n, n);
    for (i, g) in galleries.into_iter().enumerate() {
        let j = slots[i];
        shuffled[j] = g;
        if !distractor[i] {
            truth.set(i, j, true);
        }
    }
    Ok(SyntheticSet {
        probes,
        galleries: shuffled,
        truth,
    })
}

fn entity_images(spec: &SyntheticSpec, perm: &[u32], id: &str, view: View) -> Result<Vec<CodewordImage>> {
    let base = spec.signature(id);
    let count = if view == View::One { spec.images_per_entity.0 } else { spec.images_per_entity.1 };
    (0..count)
        .map(|m| {
            let mut rng = rng_for(spec.seed, &format!("image/{id}/{}/{m}", view.number()));
            let codes = observe(spec, &base, perm, view, &mut rng);
            CodewordImage::new(id, view, spec.height, spec.width, spec.codewords, codes)
        })
        .collect()
}

/// Jitter first, then (view two only) permutation and noise.
fn observe(spec: &SyntheticSpec, base: &[u32], perm: &[u32], view: View, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let (h, w) = (spec.height as isize, spec.width as isize);
    let j = spec.jitter as isize;
    let dy = rng.gen_range(-j..=j);
    let dx = rng.gen_range(-j..=j);
    let mut codes = Vec::with_capacity(base.len());
    for r in 0..h {
        for c in 0..w {
            let sr = (r - dy).clamp(0, h - 1);
            let sc = (c - dx).clamp(0, w - 1);
            codes.push(base[(sr * w + sc) as usize]);
        }
    }
    if view == View::Two {
        let k = spec.codewords as u32;
        for code in codes.iter_mut() {
            *code = perm[*code as usize];
            if rng.gen_bool(spec.noise) {
                let other = rng.gen_range(0..k - 1);
                *code = if other >= *code { other + 1 } else { other };
            }
        }
    }
    codes
}

/// `k` well-separated RGB colors.
pub fn palette(k: usize) -> Vec<[u8; 3]> {
    let mut levels = 2;
    while levels * levels * levels < k {
        levels += 1;
    }
    let step = 255 / (levels - 1);
    (0..k)
        .map(|i| {
            let (r, g, b) = (i % levels, (i / levels) % levels, i / (levels * levels));
            [(r * step) as u8, (g * step) as u8, (b * step) as u8]
        })
        .collect()
}

/// Paints each grid cell as a `cell × cell` block of its codeword's color.
pub fn render_codeword_image(ci: &CodewordImage, cell: usize) -> Result<RasterImage> {
    let colors = palette(ci.codewords());
    RasterImage::from_fn(ci.width() * cell, ci.height() * cell, 3, |r, c, ch| {
        colors[ci.get(r / cell, c / cell) as usize][ch]
    })
}

/// Renders a set to PPM files under `dir` and writes a manifest next to
/// them. Returns the manifest path.
pub fn write_synthetic_dataset(dir: &Path, name: &str, set: &SyntheticSet, cell: usize) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for group in set.probes.iter().chain(&set.galleries) {
        for (m, img) in group.iter().enumerate() {
            let file = format!("{name}_{}_v{}_{m}.ppm", img.entity_id, img.view.number());
            write_pnm(&dir.join(&file), &render_codeword_image(img, cell)?)?;
            manifest.push_str(&format!("{}\t{}\t{file}\n", img.entity_id, img.view.number()));
        }
    }
    let path = dir.join(format!("{name}.tsv"));
    crate::write_atomic(&path, manifest.as_bytes())?;
    Ok(path)
}
