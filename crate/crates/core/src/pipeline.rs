//! File-based pipeline behind the `prism` binary: configuration, the four
//! commands, and hash-keyed caches of activation maps and descriptors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::codebook::{encode_image, sample_features, train_codebook, Codebook, CodewordImage};
use crate::cooccur::{cooccurrence, read_descriptors, write_descriptors, CooccurrenceDescriptor};
use crate::error::{Error, Result};
use crate::eval::{self, bench_csv, score_matrix, BenchConfig, BenchRow, CmcCurve};
use crate::ingest::{load_features, load_manifest, BaselineDescriptor, DatasetManifest, EntityGroup, FeatureSet};
use crate::learner::{train, ModelWeights, TrainConfig, TrainReport};
use crate::matcher::{rank_galleries, solve_matching, write_match_csv, FeasibleSetSpec, LpMode, MatchStructure};
use crate::spatial::{activation_map, ActivationMap, KernelKind, KernelSpec};
use crate::{write_atomic, View};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub codebook_size: usize,
    pub share_codebook: bool,
    /// Patch features sampled per view for k-means.
    pub samples: usize,
    pub kmeans_iters: usize,
    pub kernel: KernelKind,
    pub sigma: f64,
    /// `None` means the kernel's default radius.
    pub alpha: Option<f64>,
    pub patch: usize,
    pub stride: usize,
    pub c: f64,
    pub ranks: Vec<usize>,
    pub seed: u64,
    pub max_planes: usize,
    pub violation_tol: f64,
    pub warm_start: usize,
    pub lp: LpMode,
    pub cache_dir: Option<PathBuf>,
    pub trials: usize,
    /// Entities per trial for `bench`.
    pub scale: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let kernel = KernelSpec::default();
        PipelineConfig {
            codebook_size: 500,
            share_codebook: false,
            samples: 30_000,
            kmeans_iters: 100,
            kernel: kernel.kind,
            sigma: kernel.sigma,
            alpha: None,
            patch: 5,
            stride: 1,
            c: train.c,
            ranks: vec![1, 5, 10, 20],
            seed: 0,
            max_planes: train.max_planes,
            violation_tol: train.violation_tol,
            warm_start: train.warm_start_samples,
            lp: LpMode::Exact,
            cache_dir: None,
            trials: 3,
            scale: 100,
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl PipelineConfig {
    /// Sets one option by its flag name (without dashes).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "codebook-size" => self.codebook_size = number(key, v)?,
            "share-codebook" => self.share_codebook = number(key, v)?,
            "samples" => self.samples = number(key, v)?,
            "kmeans-iters" => self.kmeans_iters = number(key, v)?,
            "kernel" => {
                self.kernel = match v {
                    "tgauss" => KernelKind::TruncatedGaussian,
                    "tlinear" => KernelKind::TruncatedLinear,
                    "box" => KernelKind::Box,
                    _ => return Err(Error::Config(format!("kernel must be tgauss, tlinear or box, got {v:?}"))),
                }
            }
            "sigma" => self.sigma = number(key, v)?,
            "alpha" => self.alpha = Some(number(key, v)?),
            "patch" => self.patch = number(key, v)?,
            "stride" => self.stride = number(key, v)?,
            "C" => self.c = number(key, v)?,
            "ranks" => {
                self.ranks = v.split(',').map(|r| number(key, r)).collect::<Result<_>>()?;
            }
            "seed" => self.seed = number(key, v)?,
            "max-planes" => self.max_planes = number(key, v)?,
            "violation-tol" => self.violation_tol = number(key, v)?,
            "warm-start" => self.warm_start = number(key, v)?,
            "lp" => self.lp = v.parse()?,
            "cache-dir" => self.cache_dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "trials" => self.trials = number(key, v)?,
            "scale" => self.scale = number(key, v)?,
            _ => return Err(Error::Config(format!("unknown option {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_file_text(&text)
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let alpha = self.alpha.unwrap_or(2.0 * self.sigma);
        KernelSpec::new(self.kernel, self.sigma, alpha).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            c: self.c,
            max_planes: self.max_planes,
            violation_tol: self.violation_tol,
            warm_start_samples: self.warm_start,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    fn extractor(&self) -> BaselineDescriptor {
        BaselineDescriptor {
            patch: self.patch,
            stride: self.stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.codebook_size == 0 {
            return Err(Error::Config("codebook size must be positive".into()));
        }
        if self.patch == 0 || self.patch % 2 == 0 || self.stride == 0 {
            return Err(Error::Config("patch must be odd and positive, stride positive".into()));
        }
        if self.ranks.iter().any(|&r| r == 0) {
            return Err(Error::Config("ranks start at 1".into()));
        }
        self.kernel_spec()?;
        self.train_config().validate()
    }
}

pub fn codebook_path(dir: &Path, view: View) -> PathBuf {
    dir.join(format!("codebook_v{}.prcb", view.number()))
}

#[derive(Clone, Debug)]
pub struct CodebookSummary {
    pub view: View,
    pub size: usize,
    pub dim: usize,
    pub inertia: f64,
    pub path: PathBuf,
}

fn view_features(manifest: &DatasetManifest, view: View, cfg: &PipelineConfig) -> Result<Vec<FeatureSet>> {
    let paths: Vec<&Path> = manifest
        .entries
        .iter()
        .filter(|e| e.view == view)
        .map(|e| e.path.as_path())
        .collect();
    let extractor = cfg.extractor();
    paths.par_iter().map(|p| load_features(p, &extractor)).collect()
}

/// Trains one codebook per view (or one shared by both) and writes them
/// into `out_dir`.
pub fn cmd_build_codebook(manifest: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<Vec<CodebookSummary>> {
    cfg.validate()?;
    let manifest = load_manifest(manifest)?;
    let seed_for = |view: View| cfg.seed.wrapping_add(view.number() as u64);
    let mut out = Vec::new();
    if cfg.share_codebook {
        let mut sets = view_features(&manifest, View::One, cfg)?;
        sets.extend(view_features(&manifest, View::Two, cfg)?);
        let samples = sample_features(&sets, cfg.samples, seed_for(View::One));
        let (cb, inertia) = train_codebook(View::One, &samples, cfg.codebook_size, cfg.seed, cfg.kmeans_iters, 1e-6)?;
        for view in [View::One, View::Two] {
            let cb = cb.clone().with_view(view);
            let path = codebook_path(out_dir, view);
            cb.save(&path)?;
            out.push(CodebookSummary { view, size: cb.len(), dim: cb.dim(), inertia, path });
        }
    } else {
        for view in [View::One, View::Two] {
            let sets = view_features(&manifest, view, cfg)?;
            let samples = sample_features(&sets, cfg.samples, seed_for(view));
            let (cb, inertia) = train_codebook(view, &samples, cfg.codebook_size, seed_for(view), cfg.kmeans_iters, 1e-6)?;
            let path = codebook_path(out_dir, view);
            cb.save(&path)?;
            out.push(CodebookSummary { view, size: cb.len(), dim: cb.dim(), inertia, path });
        }
    }
    Ok(out)
}

/// Encoded entities of one view with their activation maps.
struct ViewData {
    ids: Vec<String>,
    maps: Vec<ActivationMap>,
    keys: Vec<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn map_key(group: &EntityGroup, view: View, codebook: &[u8], cfg: &PipelineConfig, kernel: &KernelSpec) -> Result<String> {
    let mut h = Sha256::new();
    h.update(b"activation-map/1");
    h.update(codebook);
    h.update(format!("{}|{}|{}|{:?}|{}|{}", group.entity_id, view.number(), cfg.patch, kernel.kind, kernel.sigma, kernel.alpha));
    h.update(cfg.stride.to_le_bytes());
    for p in &group.paths {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex(&h.finalize()))
}

fn load_view(manifest: &DatasetManifest, view: View, codebook: &Codebook, cfg: &PipelineConfig) -> Result<ViewData> {
    let kernel = cfg.kernel_spec()?;
    let groups = manifest.groups(view);
    let codebook_bytes = codebook.encode();
    let extractor = cfg.extractor();
    let built: Vec<(ActivationMap, String)> = groups
        .par_iter()
        .map(|g| {
            let key = map_key(g, view, &codebook_bytes, cfg, &kernel)?;
            let cached = cfg.cache_dir.as_ref().map(|d| d.join(format!("{key}.pram")));
            if let Some(path) = &cached {
                if let Ok(map) = ActivationMap::load(path) {
                    return Ok((map, key));
                }
            }
            let images: Vec<CodewordImage> = g
                .paths
                .iter()
                .map(|p| encode_image(&g.entity_id, &load_features(p, &extractor)?, codebook))
                .collect::<Result<_>>()?;
            let map = activation_map(&images, &kernel)?;
            if let Some(path) = &cached {
                map.save(path)?;
            }
            Ok((map, key))
        })
        .collect::<Result<_>>()?;
    let (maps, keys) = built.into_iter().unzip();
    Ok(ViewData {
        ids: groups.into_iter().map(|g| g.entity_id).collect(),
        maps,
        keys,
    })
}

fn load_codebooks(dir: &Path) -> Result<(Codebook, Codebook)> {
    let a = Codebook::load(&codebook_path(dir, View::One))?;
    let b = Codebook::load(&codebook_path(dir, View::Two))?;
    Ok((a, b))
}

fn truth_by_id(probes: &[String], galleries: &[String]) -> MatchStructure {
    let mut y = MatchStructure::zeros(probes.len(), galleries.len());
    for (i, p) in probes.iter().enumerate() {
        for (j, g) in galleries.iter().enumerate() {
            if p == g {
                y.set(i, j, true);
            }
        }
    }
    y
}

fn descriptors(probes: &ViewData, galleries: &ViewData, cfg: &PipelineConfig) -> Result<BTreeMap<(usize, usize), CooccurrenceDescriptor>> {
    let n2 = galleries.maps.len();
    let cached = cfg.cache_dir.as_ref().map(|d| {
        let mut h = Sha256::new();
        h.update(b"descriptors/1");
        for k in probes.keys.iter().chain(&galleries.keys) {
            h.update(k.as_bytes());
        }
        h.update((probes.keys.len() as u64).to_le_bytes());
        d.join(format!("{}.prco", hex(&h.finalize())))
    });
    if let Some(path) = &cached {
        if let Ok(list) = read_descriptors(path) {
            if list.len() == probes.maps.len() * n2 {
                return Ok(list.into_iter().enumerate().map(|(k, d)| ((k / n2, k % n2), d)).collect());
            }
        }
    }
    let list: Vec<CooccurrenceDescriptor> = (0..probes.maps.len() * n2)
        .into_par_iter()
        .map(|k| {
            let mut d = cooccurrence(&probes.maps[k / n2], &galleries.maps[k % n2])?;
            d.features = d.features.quantized();
            Ok(d)
        })
        .collect::<Result<_>>()?;
    if let Some(path) = &cached {
        write_descriptors(path, &list)?;
    }
    Ok(list.into_iter().enumerate().map(|(k, d)| ((k / n2, k % n2), d)).collect())
}

/// Learns weights from a manifest whose view-one and view-two entities share
/// ids when they are the same person.
pub fn cmd_train(manifest: &Path, codebook_dir: &Path, weights_out: &Path, cfg: &PipelineConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let (cb1, cb2) = load_codebooks(codebook_dir)?;
    let manifest = load_manifest(manifest)?;
    let probes = load_view(&manifest, View::One, &cb1, cfg)?;
    let galleries = load_view(&manifest, View::Two, &cb2, cfg)?;
    let y = truth_by_id(&probes.ids, &galleries.ids);
    let table = descriptors(&probes, &galleries, cfg)?;
    let report = train(&table, &y, (cb1.len(), cb2.len()), &cfg.train_config())?;
    report.weights.save(weights_out)?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct MatchSummary {
    pub probes: usize,
    pub galleries: usize,
    /// `(r, Σ selected scores)` of the degree-`r` matching for each configured rank.
    pub objectives: Vec<(usize, f64)>,
    pub cmc: CmcCurve,
    pub files: Vec<PathBuf>,
}

/// Scores every probe/gallery pair, writes `matches_r{r}.csv` per configured
/// rank and `cmc.csv` (truth taken from shared ids).
pub fn cmd_match(
    manifest: &Path,
    codebook_dir: &Path,
    weights: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<MatchSummary> {
    cfg.validate()?;
    let (cb1, cb2) = load_codebooks(codebook_dir)?;
    let w = ModelWeights::load(weights)?;
    if w.k1() != cb1.len() || w.k2() != cb2.len() {
        return Err(Error::DimensionMismatch {
            expected: cb1.len() * cb2.len(),
            found: w.k1() * w.k2(),
        });
    }
    let manifest = load_manifest(manifest)?;
    let probes = load_view(&manifest, View::One, &cb1, cfg)?;
    let galleries = load_view(&manifest, View::Two, &cb2, cfg)?;
    let s = score_matrix(&w, &probes.maps, &galleries.maps)?;
    let truth = truth_by_id(&probes.ids, &galleries.ids);
    let (n1, n2) = (probes.ids.len(), galleries.ids.len());

    let mut files = Vec::new();
    let mut objectives = Vec::new();
    let mut ranks = cfg.ranks.clone();
    ranks.sort_unstable();
    ranks.dedup();
    for &r in &ranks {
        let path = out_dir.join(format!("matches_r{r}.csv"));
        let selections = if n1 == 0 || n2 == 0 {
            vec![Vec::new(); n1]
        } else {
            rank_galleries(&s, r, cfg.lp)?
        };
        write_atomic(&path, write_match_csv(&probes.ids, &galleries.ids, &s, &selections).as_bytes())?;
        files.push(path);
        let objective = if n1 == 0 || n2 == 0 {
            0.0
        } else {
            solve_matching(&s, &FeasibleSetSpec::uniform(n1, r.min(n2), n2)?, cfg.lp)?.objective
        };
        objectives.push((r, objective));
    }

    let max_rank = ranks.last().copied().unwrap_or(1).min(n2);
    let cmc = if n1 == 0 || n2 == 0 || truth.count() == 0 {
        eval::cmc(&[], &truth)?
    } else {
        eval::structured_cmc(&s, &truth, max_rank, cfg.lp)?
    };
    let path = out_dir.join("cmc.csv");
    write_atomic(&path, cmc.to_csv().as_bytes())?;
    files.push(path);
    Ok(MatchSummary {
        probes: n1,
        galleries: n2,
        objectives,
        cmc,
        files,
    })
}

/// Runs the timing harness on generated data and writes the CSV.
pub fn cmd_bench(out: &Path, cfg: &PipelineConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let rows = eval::bench(&BenchConfig {
        entities: cfg.scale,
        codewords: cfg.codebook_size,
        kernel: cfg.kernel_spec()?,
        lp: cfg.lp,
        trials: cfg.trials,
        seed: cfg.seed,
        ..BenchConfig::default()
    })?;
    write_atomic(out, bench_csv(&rows).as_bytes())?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_and_overrides() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_file_text("# comment\ncodebook-size = 32\nkernel=tgauss\nsigma=2 # inline\nranks=1,3\nlp=capped:10\n")
            .unwrap();
        assert_eq!(cfg.codebook_size, 32);
        assert_eq!(cfg.ranks, vec![1, 3]);
        assert_eq!(cfg.lp, LpMode::Capped(10));
        let k = cfg.kernel_spec().unwrap();
        assert_eq!((k.kind, k.sigma, k.alpha), (KernelKind::TruncatedGaussian, 2.0, 4.0));
        cfg.set("C", "0.5").unwrap();
        assert_eq!(cfg.train_config().c, 0.5);
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("kernel", "cubic").is_err());
        assert!(cfg.apply_file_text("novalue").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.patch = 4;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = PipelineConfig::default();
        cfg.c = -1.0;
        assert!(cfg.validate().is_err());
    }
}
