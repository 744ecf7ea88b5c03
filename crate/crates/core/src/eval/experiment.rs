//! End-to-end drivers on synthetic codeword data.

use rayon::prelude::*;

use super::synthetic::{generate_synthetic, SyntheticSet, SyntheticSpec};
use super::{cmc, cmc_from_orderings, matching_accuracy};
use crate::codebook::CodewordImage;
use crate::cooccur::{descriptor_table, pair_score};
use crate::error::{Error, Result};
use crate::learner::{train, ModelWeights, TrainConfig, TrainReport};
use crate::matcher::{rank_by_score, rank_galleries, solve_matching, FeasibleSetSpec, LpMode, MatchStructure, SimilarityMatrix};
use crate::spatial::{activation_map, ActivationMap, KernelSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct ReidConfig {
    pub kernel: KernelSpec,
    pub train: TrainConfig,
    pub lp: LpMode,
}

impl Default for ReidConfig {
    fn default() -> Self {
        ReidConfig {
            kernel: KernelSpec::default(),
            train: TrainConfig::default(),
            lp: LpMode::Exact,
        }
    }
}

/// One activation map per entity.
pub fn activation_maps(entities: &[Vec<CodewordImage>], kernel: &KernelSpec) -> Result<Vec<ActivationMap>> {
    entities.par_iter().map(|images| activation_map(images, kernel)).collect()
}

/// `s_ij = w · φ(probe_i, gallery_j)` for every pair.
pub fn score_matrix(w: &ModelWeights, probes: &[ActivationMap], galleries: &[ActivationMap]) -> Result<SimilarityMatrix> {
    let n2 = galleries.len();
    if let Some(m) = probes.first() {
        if m.codewords() != w.k1() {
            return Err(Error::DimensionMismatch { expected: w.k1(), found: m.codewords() });
        }
    }
    if let Some(m) = galleries.first() {
        if m.codewords() != w.k2() {
            return Err(Error::DimensionMismatch { expected: w.k2(), found: m.codewords() });
        }
    }
    let dense = w.to_dense();
    let data = (0..probes.len() * n2)
        .into_par_iter()
        .map(|k| pair_score(&dense, &probes[k / n2], &galleries[k % n2]))
        .collect::<Result<Vec<f64>>>()?;
    SimilarityMatrix::new(probes.len(), n2, data)
}

/// Degree-one structured matching; probes with no positive option stay unmatched.
pub fn structured_prediction(s: &SimilarityMatrix, mode: LpMode) -> Result<MatchStructure> {
    let spec = FeasibleSetSpec::uniform(s.rows(), 1, s.cols().max(1))?;
    if s.cols() == 0 {
        return Ok(MatchStructure::zeros(s.rows(), 0));
    }
    Ok(solve_matching(s, &spec, mode)?.structure)
}

/// Each probe independently takes its best gallery if that score is positive.
pub fn argmax_prediction(s: &SimilarityMatrix) -> MatchStructure {
    let mut y = MatchStructure::zeros(s.rows(), s.cols());
    for (i, order) in rank_by_score(s).into_iter().enumerate() {
        if let Some(&j) = order.first() {
            if s.get(i, j) > 0.0 {
                y.set(i, j, true);
            }
        }
    }
    y
}

fn fit(set: &SyntheticSet, spec: &SyntheticSpec, cfg: &ReidConfig) -> Result<TrainReport> {
    let probes = activation_maps(&set.probes, &cfg.kernel)?;
    let galleries = activation_maps(&set.galleries, &cfg.kernel)?;
    let table = descriptor_table(&probes, &galleries)?;
    train(&table, &set.truth, (spec.codewords, spec.codewords), &cfg.train)
}

fn test_scores(set: &SyntheticSet, w: &ModelWeights, cfg: &ReidConfig) -> Result<SimilarityMatrix> {
    let probes = activation_maps(&set.probes, &cfg.kernel)?;
    let galleries = activation_maps(&set.galleries, &cfg.kernel)?;
    score_matrix(w, &probes, &galleries)
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub report: TrainReport,
    /// Rank-1 rate of degree-one structured matching.
    pub prism_rank1: f64,
    /// Rank-1 rate of per-probe argmax on the same scores.
    pub baseline_rank1: f64,
    pub scores: SimilarityMatrix,
    pub truth: MatchStructure,
}

/// Trains on the train split and reports rank-1 rates on the test split.
pub fn reid_trial(spec: &SyntheticSpec, cfg: &ReidConfig) -> Result<TrialOutcome> {
    let (train_set, test_set) = generate_synthetic(spec)?;
    let report = fit(&train_set, spec, cfg)?;
    let s = test_scores(&test_set, &report.weights, cfg)?;
    let selection: Vec<Vec<usize>> = rank_galleries(&s, 1, cfg.lp)?
        .into_iter()
        .map(|sel| sel.into_iter().map(|g| g.gallery).collect())
        .collect();
    let prism_rank1 = cmc(&[selection], &test_set.truth)?.rate(1);
    let baseline_rank1 = cmc_from_orderings(&rank_by_score(&s), &test_set.truth, 1)?.rate(1);
    Ok(TrialOutcome {
        report,
        prism_rank1,
        baseline_rank1,
        scores: s,
        truth: test_set.truth,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustOutcome {
    pub structured: f64,
    pub argmax: f64,
}

/// Matching accuracy with missing matches (`spec.unmatched` applies to both
/// splits), structured versus independent argmax on the same scores.
pub fn robust_trial(spec: &SyntheticSpec, cfg: &ReidConfig) -> Result<RobustOutcome> {
    let (train_set, test_set) = generate_synthetic(spec)?;
    let report = fit(&train_set, spec, cfg)?;
    let s = test_scores(&test_set, &report.weights, cfg)?;
    Ok(RobustOutcome {
        structured: matching_accuracy(&structured_prediction(&s, cfg.lp)?, &test_set.truth)?,
        argmax: matching_accuracy(&argmax_prediction(&s), &test_set.truth)?,
    })
}
