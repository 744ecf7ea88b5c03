//! Structured matching between probes and galleries.
//!
//! The feasible set holds binary `N₁ × N₂` matrices whose row `i` has at most
//! `r_i` ones and whose columns have at most `⌈Σ r_i / N₂⌉` ones. The
//! constraint matrix is totally unimodular, so the LP relaxation has integral
//! optima; the exact mode solves it as a min-cost flow.

mod csv;
mod flow;
mod simplex;

pub use csv::{parse_score_csv, write_match_csv, ScoreTable};
pub use simplex::{solve_lp, LpSolution};

use crate::error::{Error, Result};

/// Dense `N₁ × N₂` similarity scores, all finite.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore(k / cols.max(1), k % cols.max(1)));
        }
        Ok(SimilarityMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Result<Self> {
        Self::from_fn(self.rows, self.cols, |i, j| f(i, j, self.get(i, j)))
    }
}

/// Ceiling of `Σ r_i / N₂`: the common column-degree bound.
pub fn gallery_cap(degrees: &[usize], n2: usize) -> usize {
    assert!(n2 >= 1, "gallery set must be non-empty");
    degrees.iter().sum::<usize>().div_ceil(n2)
}

/// Row degrees `r_i` plus the gallery count they are spread over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeasibleSetSpec {
    probe_degrees: Vec<usize>,
    galleries: usize,
}

impl FeasibleSetSpec {
    pub fn new(probe_degrees: Vec<usize>, galleries: usize) -> Result<Self> {
        if galleries == 0 && !probe_degrees.is_empty() {
            return Err(Error::InfeasibleSpec("no galleries".into()));
        }
        if probe_degrees.iter().any(|&r| r == 0) {
            return Err(Error::InfeasibleSpec("probe degrees must be positive".into()));
        }
        Ok(FeasibleSetSpec {
            probe_degrees,
            galleries,
        })
    }

    /// Every probe gets the same degree `r`.
    pub fn uniform(probes: usize, r: usize, galleries: usize) -> Result<Self> {
        Self::new(vec![r; probes], galleries)
    }

    /// Degrees for training: every probe gets the largest row degree of
    /// the ground truth (at least 1).
    pub fn for_ground_truth(y: &MatchStructure) -> Result<Self> {
        let r = (0..y.rows()).map(|i| y.row_sum(i)).max().unwrap_or(0).max(1);
        Self::uniform(y.rows(), r, y.cols())
    }

    pub fn probe_degrees(&self) -> &[usize] {
        &self.probe_degrees
    }
    pub fn probes(&self) -> usize {
        self.probe_degrees.len()
    }
    pub fn galleries(&self) -> usize {
        self.galleries
    }
    pub fn gallery_cap(&self) -> usize {
        if self.galleries == 0 {
            0
        } else {
            gallery_cap(&self.probe_degrees, self.galleries)
        }
    }

    fn check(&self, s: &SimilarityMatrix) -> Result<()> {
        if s.rows() != self.probes() || s.cols() != self.galleries {
            return Err(Error::DimensionMismatch {
                expected: self.probes() * self.galleries,
                found: s.rows() * s.cols(),
            });
        }
        Ok(())
    }
}

/// A binary `N₁ × N₂` assignment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MatchStructure {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl MatchStructure {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatchStructure {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_pairs(rows: usize, cols: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut y = Self::zeros(rows, cols);
        for (i, j) in pairs {
            if i >= rows || j >= cols {
                return Err(Error::IndexOutOfRange(i, j));
            }
            y.set(i, j, true);
        }
        Ok(y)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_pairs(n, n, (0..n).map(|i| (i, i))).unwrap()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        self.bits[i * self.cols + j] = on;
    }
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Selected cells in row-major order.
    pub fn selected(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| (k / self.cols, k % self.cols))
    }

    pub fn row_selection(&self, i: usize) -> Vec<usize> {
        (0..self.cols).filter(|&j| self.get(i, j)).collect()
    }
    pub fn row_sum(&self, i: usize) -> usize {
        (0..self.cols).filter(|&j| self.get(i, j)).count()
    }
    pub fn col_sum(&self, j: usize) -> usize {
        (0..self.rows).filter(|&i| self.get(i, j)).count()
    }
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_feasible(&self, spec: &FeasibleSetSpec) -> bool {
        if self.rows != spec.probes() || self.cols != spec.galleries() {
            return false;
        }
        let cap = spec.gallery_cap();
        (0..self.rows).all(|i| self.row_sum(i) <= spec.probe_degrees[i])
            && (0..self.cols).all(|j| self.col_sum(j) <= cap)
    }

    /// `Σ y_ij s_ij`.
    pub fn objective(&self, s: &SimilarityMatrix) -> f64 {
        self.selected().map(|(i, j)| s.get(i, j)).sum()
    }
}

/// How the matching LP is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpMode {
    /// Optimal integral solution via min-cost flow.
    Exact,
    /// At most this many simplex iterations, then threshold at 0.5 and repair.
    Capped(usize),
}

impl std::str::FromStr for LpMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(LpMode::Exact),
            _ => s
                .strip_prefix("capped:")
                .and_then(|n| n.parse().ok())
                .map(LpMode::Capped)
                .ok_or_else(|| Error::Config(format!("lp mode must be exact or capped:N, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for LpMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpMode::Exact => write!(f, "exact"),
            LpMode::Capped(n) => write!(f, "capped:{n}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatchSolution {
    pub structure: MatchStructure,
    /// Row-major LP values behind `structure` (0/1 in exact mode).
    pub fractional: Vec<f64>,
    pub objective: f64,
}

/// Best feasible structure for `Σ ȳ_ij s_ij`.
///
/// Constraints are all upper bounds, so the exact solver never selects an
/// edge with a negative score.
pub fn solve_matching(s: &SimilarityMatrix, spec: &FeasibleSetSpec, mode: LpMode) -> Result<MatchSolution> {
    spec.check(s)?;
    let cap = spec.gallery_cap();
    let (structure, fractional) = match mode {
        LpMode::Exact => {
            let y = flow::max_profit_assignment(s, spec.probe_degrees(), cap, false);
            let frac = y.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            (y, frac)
        }
        LpMode::Capped(iters) => {
            let lp = solve_lp(s, spec.probe_degrees(), cap, Some(iters));
            (threshold_and_repair(s, spec, &lp.x), lp.x)
        }
    };
    debug_assert!(structure.is_feasible(spec));
    let objective = structure.objective(s);
    Ok(MatchSolution {
        structure,
        fractional,
        objective,
    })
}

/// Rounds `x > 0.5` to 1 and drops the lowest-scoring selections of any
/// row or column that exceeds its degree bound.
fn threshold_and_repair(s: &SimilarityMatrix, spec: &FeasibleSetSpec, x: &[f64]) -> MatchStructure {
    let (n1, n2) = (s.rows(), s.cols());
    let mut y = MatchStructure::zeros(n1, n2);
    for (k, &v) in x.iter().enumerate() {
        if v > 0.5 {
            y.set(k / n2, k % n2, true);
        }
    }
    // lowest score first, then lowest LP value, then highest index
    let weakest = |cells: Vec<(usize, usize)>| -> Vec<(usize, usize)> {
        let mut cells = cells;
        cells.sort_by(|&(a, b), &(c, d)| {
            s.get(a, b)
                .total_cmp(&s.get(c, d))
                .then(x[a * n2 + b].total_cmp(&x[c * n2 + d]))
                .then((c, d).cmp(&(a, b)))
        });
        cells
    };
    for i in 0..n1 {
        let r = spec.probe_degrees()[i];
        let cells: Vec<_> = y.row_selection(i).into_iter().map(|j| (i, j)).collect();
        let excess = cells.len().saturating_sub(r);
        for (a, b) in weakest(cells).into_iter().take(excess) {
            y.set(a, b, false);
        }
    }
    let cap = spec.gallery_cap();
    for j in 0..n2 {
        let cells: Vec<_> = (0..n1).filter(|&i| y.get(i, j)).map(|i| (i, j)).collect();
        let excess = cells.len().saturating_sub(cap);
        for (a, b) in weakest(cells).into_iter().take(excess) {
            y.set(a, b, false);
        }
    }
    y
}

/// Hamming distance `Σ |y_ij − ȳ_ij|`.
pub fn loss(y: &MatchStructure, ybar: &MatchStructure) -> Result<f64> {
    if y.rows() != ybar.rows() || y.cols() != ybar.cols() {
        return Err(Error::DimensionMismatch {
            expected: y.rows() * y.cols(),
            found: ybar.rows() * ybar.cols(),
        });
    }
    Ok(y.bits().iter().zip(ybar.bits()).filter(|(a, b)| a != b).count() as f64)
}

/// `argmax_ȳ Σ ȳ_ij s_ij + Δ(y, ȳ)` over the feasible set.
///
/// For binary matrices `Δ(y, ȳ) = Σ y_ij + Σ (1 − 2 y_ij) ȳ_ij`, so this is an
/// ordinary matching on scores `s_ij + 1 − 2 y_ij`.
pub fn loss_augmented_inference(
    s: &SimilarityMatrix,
    y_true: &MatchStructure,
    spec: &FeasibleSetSpec,
) -> Result<MatchStructure> {
    if y_true.rows() != s.rows() || y_true.cols() != s.cols() {
        return Err(Error::DimensionMismatch {
            expected: s.rows() * s.cols(),
            found: y_true.rows() * y_true.cols(),
        });
    }
    let augmented = s.map(|i, j, v| v + if y_true.get(i, j) { -1.0 } else { 1.0 })?;
    Ok(solve_matching(&augmented, spec, LpMode::Exact)?.structure)
}

/// A gallery chosen for a probe at some rank.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedGallery {
    pub gallery: usize,
    pub fractional: f64,
    pub score: f64,
}

/// Rank-`r` selections: every probe gets degree `r` and the structure is
/// required to use as many edges as the constraints allow (min(r, N₂) per
/// probe), choosing the highest-scoring such structure. Each selection is
/// ordered by LP value, then score, then gallery index.
///
/// The maximum-cardinality requirement is imposed by adding a constant to
/// every score that exceeds the largest profit any exchange path could give
/// up, which leaves the ordering among equal-cardinality structures intact.
pub fn rank_galleries(s: &SimilarityMatrix, r: usize, mode: LpMode) -> Result<Vec<Vec<RankedGallery>>> {
    let (n1, n2) = (s.rows(), s.cols());
    if n1 == 0 || n2 == 0 {
        return Ok(vec![Vec::new(); n1]);
    }
    if r == 0 {
        return Err(Error::Config("rank must be at least 1".into()));
    }
    let r = r.min(n2);
    let spec = FeasibleSetSpec::uniform(n1, r, n2)?;
    let sol = if r == n2 {
        // column cap is N₁, so selecting everything is the only maximum
        let mut all = MatchStructure::zeros(n1, n2);
        all.bits.fill(true);
        MatchSolution {
            objective: all.objective(s),
            structure: all,
            fractional: vec![1.0; n1 * n2],
        }
    } else {
        let (lo, hi) = s.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let shift = (hi - lo) * (n1.min(n2) as f64 + 1.0) + lo.abs() + 1.0;
        solve_matching(&s.map(|_, _, v| v + shift)?, &spec, mode)?
    };
    Ok((0..n1)
        .map(|i| {
            let mut sel: Vec<RankedGallery> = sol
                .structure
                .row_selection(i)
                .into_iter()
                .map(|j| RankedGallery {
                    gallery: j,
                    fractional: sol.fractional[i * n2 + j],
                    score: s.get(i, j),
                })
                .collect();
            sel.sort_by(|a, b| {
                b.fractional
                    .total_cmp(&a.fractional)
                    .then(b.score.total_cmp(&a.score))
                    .then(a.gallery.cmp(&b.gallery))
            });
            sel
        })
        .collect())
}

/// Independent per-probe ordering of all galleries by descending score
/// (ties to the lower gallery index).
pub fn rank_by_score(s: &SimilarityMatrix) -> Vec<Vec<usize>> {
    (0..s.rows())
        .map(|i| {
            let mut order: Vec<usize> = (0..s.cols()).collect();
            order.sort_by(|&a, &b| s.get(i, b).total_cmp(&s.get(i, a)).then(a.cmp(&b)));
            order
        })
        .collect()
}
