//! Storage and timing measurements for the test-time pipeline.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::experiment::{activation_maps, score_matrix};
use super::synthetic::{generate_synthetic, SyntheticSpec};
use crate::cooccur::{pack, SparseVec};
use crate::error::Result;
use crate::learner::ModelWeights;
use crate::matcher::{rank_galleries, LpMode};
use crate::spatial::KernelSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// Probes and galleries per trial; 0 produces no rows.
    pub entities: usize,
    pub codewords: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: KernelSpec,
    pub lp: LpMode,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            entities: 100,
            codewords: 64,
            height: 16,
            width: 8,
            kernel: KernelSpec::default(),
            lp: LpMode::Exact,
            trials: 3,
            seed: 0,
        }
    }
}

/// One trial. Storage is the mean encoded activation-map size per entity;
/// times are totals over all entities, pairs, or the full matching.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub entities: usize,
    pub pairs: usize,
    pub storage_kb: f64,
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub t3_s: f64,
}

/// Builds activation maps (`T₁`), scores every pair with a random model
/// (`T₂`) and runs rank-1 structured matching (`T₃`).
pub fn bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.entities == 0 {
        return Ok(Vec::new());
    }
    let mut rows = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(t as u64);
        let spec = SyntheticSpec {
            n_train: 0,
            n_test: cfg.entities,
            height: cfg.height,
            width: cfg.width,
            codewords: cfg.codewords,
            seed,
            ..SyntheticSpec::default()
        };
        let (_, set) = generate_synthetic(&spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = cfg.codewords as u32;
        let w = SparseVec::from_pairs(
            (0..k).flat_map(|u| (0..k).map(move |v| pack(u, v))).map(|i| (i, rng.gen_range(-1.0..1.0))).collect(),
        );
        let w = ModelWeights::new(cfg.codewords, cfg.codewords, w)?;

        let start = Instant::now();
        let probes = activation_maps(&set.probes, &cfg.kernel)?;
        let galleries = activation_maps(&set.galleries, &cfg.kernel)?;
        let t1 = start.elapsed();
        let bytes: usize = probes.iter().chain(&galleries).map(|m| m.encode().len()).sum();

        let start = Instant::now();
        let s = score_matrix(&w, &probes, &galleries)?;
        let t2 = start.elapsed();

        let start = Instant::now();
        rank_galleries(&s, 1, cfg.lp)?;
        let t3 = start.elapsed();

        rows.push(BenchRow {
            entities: cfg.entities,
            pairs: cfg.entities * cfg.entities,
            storage_kb: bytes as f64 / 1024.0 / (2 * cfg.entities) as f64,
            t1_ms: t1.as_secs_f64() * 1e3,
            t2_ms: t2.as_secs_f64() * 1e3,
            t3_s: t3.as_secs_f64(),
        });
    }
    Ok(rows)
}

/// `S_t_kb,T1_ms,T2_ms,T3_s` lines.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("S_t_kb,T1_ms,T2_ms,T3_s\n");
    for r in rows {
        out.push_str(&format!("{:.3},{:.3},{:.3},{:.6}\n", r.storage_kb, r.t1_ms, r.t2_ms, r.t3_s));
    }
    out
}
