//! Evaluation: CMC curves, robust matching accuracy, synthetic data,
//! experiment drivers and timing benchmarks.

mod bench;
mod experiment;
mod synthetic;

pub use bench::{bench, bench_csv, BenchConfig, BenchRow};
pub use experiment::{
    activation_maps, robust_trial, reid_trial, score_matrix, structured_prediction, argmax_prediction,
    ReidConfig, RobustOutcome, TrialOutcome,
};
pub use synthetic::{
    generate_synthetic, palette, render_codeword_image, write_synthetic_dataset, SyntheticSet, SyntheticSpec,
};

use crate::error::{Error, Result};
use crate::matcher::{rank_galleries, LpMode, MatchStructure, SimilarityMatrix};

/// Recognition rate at ranks `1..=len`.
#[derive(Clone, Debug, PartialEq)]
pub struct CmcCurve {
    rates: Vec<f64>,
}

impl CmcCurve {
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Rate at 1-based rank `r`; ranks past the end repeat the last value.
    pub fn rate(&self, r: usize) -> f64 {
        assert!(r >= 1, "ranks start at 1");
        self.rates.get(r - 1).or(self.rates.last()).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// `rank,rate` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,rate\n");
        for (r, v) in self.rates.iter().enumerate() {
            out.push_str(&format!("{},{}\n", r + 1, v));
        }
        out
    }

    /// Element-wise mean of equally long curves.
    pub fn mean(curves: &[CmcCurve]) -> CmcCurve {
        let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
        let rates = (0..n)
            .map(|r| curves.iter().map(|c| c.rates[r]).sum::<f64>() / curves.len() as f64)
            .collect();
        CmcCurve { rates }
    }
}

/// True gallery of each probe, `None` when it has no match.
fn true_galleries(truth: &MatchStructure) -> Result<Vec<Option<usize>>> {
    (0..truth.rows())
        .map(|i| {
            let sel = truth.row_selection(i);
            match sel.len() {
                0 => Ok(None),
                1 => Ok(Some(sel[0])),
                n => Err(Error::Config(format!("probe {i} has {n} true galleries; CMC needs at most one"))),
            }
        })
        .collect()
}

/// `selections[r - 1][i]` holds the galleries chosen for probe `i` at rank `r`.
///
/// The rate at rank `r` is the fraction of probes whose true gallery shows up
/// in a selection of rank `r` or better, counted over probes that have one.
pub fn cmc(selections: &[Vec<Vec<usize>>], truth: &MatchStructure) -> Result<CmcCurve> {
    let targets = true_galleries(truth)?;
    let matched = targets.iter().filter(|t| t.is_some()).count();
    let mut found = vec![false; targets.len()];
    let mut rates = Vec::with_capacity(selections.len());
    for per_probe in selections {
        if per_probe.len() != truth.rows() {
            return Err(Error::DimensionMismatch {
                expected: truth.rows(),
                found: per_probe.len(),
            });
        }
        // "rank r or better": a structured rank-r selection need not contain
        // the rank-(r−1) one, so hits accumulate across ranks
        for ((hit, t), sel) in found.iter_mut().zip(&targets).zip(per_probe) {
            *hit |= t.is_some_and(|g| sel.contains(&g));
        }
        let hits = found.iter().filter(|&&h| h).count();
        rates.push(if matched == 0 { 0.0 } else { hits as f64 / matched as f64 });
    }
    Ok(CmcCurve { rates })
}

/// CMC from full per-probe orderings: the rank-`r` selection is the top `r`.
pub fn cmc_from_orderings(orderings: &[Vec<usize>], truth: &MatchStructure, max_rank: usize) -> Result<CmcCurve> {
    let targets = true_galleries(truth)?;
    if orderings.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            found: orderings.len(),
        });
    }
    let matched = targets.iter().filter(|t| t.is_some()).count();
    let mut hist = vec![0usize; max_rank];
    for (t, order) in targets.iter().zip(orderings) {
        if let Some(g) = t {
            if let Some(pos) = order.iter().position(|x| x == g) {
                if pos < max_rank {
                    hist[pos] += 1;
                }
            }
        }
    }
    let mut acc = 0;
    let rates = hist
        .into_iter()
        .map(|h| {
            acc += h;
            if matched == 0 { 0.0 } else { acc as f64 / matched as f64 }
        })
        .collect();
    Ok(CmcCurve { rates })
}

/// Structured CMC at ranks `1..=max_rank`: rank `r` uses degree `r` for every
/// probe in [`rank_galleries`].
pub fn structured_cmc(s: &SimilarityMatrix, truth: &MatchStructure, max_rank: usize, mode: LpMode) -> Result<CmcCurve> {
    let selections = (1..=max_rank)
        .map(|r| {
            Ok(rank_galleries(s, r, mode)?
                .into_iter()
                .map(|sel| sel.into_iter().map(|g| g.gallery).collect())
                .collect())
        })
        .collect::<Result<Vec<Vec<Vec<usize>>>>>()?;
    cmc(&selections, truth)
}

/// Fraction of probes whose predicted gallery set equals the true one
/// (both empty counts as correct).
pub fn matching_accuracy(predicted: &MatchStructure, truth: &MatchStructure) -> Result<f64> {
    if predicted.rows() != truth.rows() || predicted.cols() != truth.cols() {
        return Err(Error::DimensionMismatch {
            expected: truth.rows() * truth.cols(),
            found: predicted.rows() * predicted.cols(),
        });
    }
    if truth.rows() == 0 {
        return Ok(1.0);
    }
    let correct = (0..truth.rows())
        .filter(|&i| (0..truth.cols()).all(|j| predicted.get(i, j) == truth.get(i, j)))
        .count();
    Ok(correct as f64 / truth.rows() as f64)
}

/// `scenario,probes,accuracy` lines.
pub fn accuracy_csv(rows: &[(String, usize, f64)]) -> String {
    let mut out = String::from("scenario,probes,accuracy\n");
    for (name, n, acc) in rows {
        out.push_str(&format!("{name},{n},{acc}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_adversarial() {
        let truth = MatchStructure::identity(3);
        let sel = vec![vec![vec![0], vec![1], vec![2]]];
        assert_eq!(cmc(&sel, &truth).unwrap().rates(), &[1.0]);

        let truth = MatchStructure::from_pairs(1, 4, [(0, 3)]).unwrap();
        let c = cmc_from_orderings(&[vec![0, 1, 2, 3]], &truth, 4).unwrap();
        assert_eq!(c.rates(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(c.to_csv(), "rank,rate\n1,0\n2,0\n3,0\n4,1\n");
    }

    #[test]
    fn unmatched_probes_are_left_out_of_the_denominator() {
        let truth = MatchStructure::from_pairs(2, 2, [(0, 1)]).unwrap();
        let c = cmc_from_orderings(&[vec![1, 0], vec![0, 1]], &truth, 2).unwrap();
        assert_eq!(c.rates(), &[1.0, 1.0]);
    }

    #[test]
    fn rejects_multiple_true_galleries() {
        let truth = MatchStructure::from_pairs(1, 2, [(0, 0), (0, 1)]).unwrap();
        assert!(cmc(&[vec![vec![0]]], &truth).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let truth = MatchStructure::from_pairs(4, 4, [(0, 0), (1, 1)]).unwrap();
        assert_eq!(matching_accuracy(&truth, &truth).unwrap(), 1.0);
        let all = MatchStructure::identity(4);
        assert_eq!(matching_accuracy(&all, &truth).unwrap(), 0.5);
        assert!(matching_accuracy(&MatchStructure::zeros(3, 4), &truth).is_err());
    }

    #[test]
    fn structured_full_rank_hits_everything() {
        let s = SimilarityMatrix::from_fn(4, 4, |i, j| ((i * 3 + j * 5) % 7) as f64).unwrap();
        let truth = MatchStructure::from_pairs(4, 4, [(0, 2), (1, 0), (2, 3), (3, 1)]).unwrap();
        let c = structured_cmc(&s, &truth, 4, LpMode::Exact).unwrap();
        assert_eq!(c.rate(4), 1.0);
        assert!(c.rates().windows(2).all(|w| w[0] <= w[1]));
    }
}
