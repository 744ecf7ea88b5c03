//! Structured max-margin training of the co-occurrence weights.
//!
//! The objective is `min ½‖w‖² + C·ξ` subject to
//! `w·(f(y) − f(ȳ)) ≥ Δ(y, ȳ) − ξ` for every feasible `ȳ`, where
//! `f(y) = Σ y_ij φ_ij`. Constraints are generated by loss-augmented
//! inference (1-slack cutting planes) on top of a few random structures.
//!
//! Joint features and losses are divided by the probe count, so `ξ` and the
//! violation tolerance are per-probe quantities.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binio::{self, Reader, Writer};
use crate::cooccur::{unpack, CooccurrenceDescriptor, SparseVec};
use crate::error::{Error, Result};
use crate::matcher::{loss, loss_augmented_inference, FeasibleSetSpec, MatchStructure, SimilarityMatrix};

/// Linear weights over packed `(u, v)` codeword pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    k1: usize,
    k2: usize,
    w: SparseVec,
}

impl ModelWeights {
    pub fn zeros(k1: usize, k2: usize) -> Self {
        ModelWeights { k1, k2, w: SparseVec::new() }
    }

    pub fn new(k1: usize, k2: usize, w: SparseVec) -> Result<Self> {
        for &(idx, v) in w.entries() {
            let (u, c) = unpack(idx);
            if u as usize >= k1 || c as usize >= k2 {
                return Err(Error::IndexOutOfRange(u as usize, c as usize));
            }
            if !v.is_finite() {
                return Err(Error::NonFiniteScore(u as usize, c as usize));
            }
        }
        Ok(ModelWeights { k1, k2, w })
    }

    pub fn k1(&self) -> usize {
        self.k1
    }
    pub fn k2(&self) -> usize {
        self.k2
    }
    pub fn vector(&self) -> &SparseVec {
        &self.w
    }

    /// Row-major `K₁ × K₂`.
    pub fn to_dense(&self) -> Vec<f64> {
        self.w.to_dense(self.k1, self.k2)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Writer::default();
        out.bytes(WEIGHTS_MAGIC)
            .u32(self.k1 as u32)
            .u32(self.k2 as u32)
            .u32(self.w.nnz() as u32);
        for &(i, v) in self.w.entries() {
            out.u64(i).f32(v as f32);
        }
        out.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "weights");
        r.magic(WEIGHTS_MAGIC)?;
        let k1 = r.u32()? as usize;
        let k2 = r.u32()? as usize;
        let nnz = r.u32()? as usize;
        let mut pairs = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let i = r.u64()?;
            pairs.push((i, r.f32()? as f64));
        }
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after weights".into()));
        }
        Self::new(k1, k2, SparseVec::from_pairs(pairs))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&binio::read_file(path)?)
    }
}

const WEIGHTS_MAGIC: &[u8; 4] = b"PRWT";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub c: f64,
    /// Cutting planes added beyond the warm start.
    pub max_planes: usize,
    pub violation_tol: f64,
    pub warm_start_samples: usize,
    pub seed: u64,
    pub qp_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 100.0,
            max_planes: 200,
            violation_tol: 1e-3,
            warm_start_samples: 8,
            seed: 0,
            qp_tol: 1e-7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(Error::Config(format!("C must be a finite nonnegative number, got {}", self.c)));
        }
        if !(self.violation_tol > 0.0) || !(self.qp_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One plane `w·g ≥ Δ − ξ`.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub g: SparseVec,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub w: SparseVec,
    pub xi: f64,
    /// Multipliers per constraint, in input order.
    pub alpha: Vec<f64>,
    pub dual_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dual of the restricted problem,
/// `max Σ α_k Δ_k − ½ Σ α_k α_l g_k·g_l` over `α ≥ 0`, `Σ α_k ≤ C`,
/// solved by pairwise coordinate ascent.
pub fn solve_restricted_qp(constraints: &[Constraint], c: f64, qp_tol: f64) -> QpSolution {
    let n = constraints.len();
    let mut gram = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v = constraints[a].g.dot(&constraints[b].g);
            gram[a * n + b] = v;
            gram[b * n + a] = v;
        }
    }
    let losses: Vec<f64> = constraints.iter().map(|k| k.loss).collect();
    let dual = DualState::new(gram, losses, c);
    finish_qp(constraints, dual, qp_tol)
}

/// Dual state with a zero-gain slack multiplier at index 0, so that the
/// budget holds with equality: `α₀ + Σ α_k = C`.
struct DualState {
    n: usize,
    gram: Vec<f64>,
    losses: Vec<f64>,
    /// `alpha[0]` is the slack.
    alpha: Vec<f64>,
    /// `Δ_k − (Gα)_k`; zero for the slack.
    grad: Vec<f64>,
}

impl DualState {
    fn new(gram: Vec<f64>, losses: Vec<f64>, c: f64) -> Self {
        let n = losses.len();
        let mut alpha = vec![0.0; n + 1];
        alpha[0] = c;
        let mut grad = vec![0.0; n + 1];
        grad[1..].copy_from_slice(&losses);
        DualState { n, gram, losses, alpha, grad }
    }

    fn g(&self, a: usize, b: usize) -> f64 {
        if a == 0 || b == 0 {
            0.0
        } else {
            self.gram[(a - 1) * self.n + (b - 1)]
        }
    }

    /// Adds a plane with multiplier 0; `cross[k]` is `g_new · g_k`.
    fn push(&mut self, cross: &[f64], self_dot: f64, loss: f64) {
        let n = self.n + 1;
        let mut gram = vec![0.0; n * n];
        for a in 0..self.n {
            gram[a * n..a * n + self.n].copy_from_slice(&self.gram[a * self.n..(a + 1) * self.n]);
            gram[a * n + self.n] = cross[a];
            gram[self.n * n + a] = cross[a];
        }
        gram[n * n - 1] = self_dot;
        let cross_alpha: f64 = cross.iter().zip(&self.alpha[1..]).map(|(x, a)| x * a).sum();
        self.gram = gram;
        self.n = n;
        self.losses.push(loss);
        self.alpha.push(0.0);
        self.grad.push(loss - cross_alpha);
    }

    /// Recomputes `Δ_k − (Gα)_k` from scratch.
    fn refresh(&mut self) {
        for k in 1..=self.n {
            let row = &self.gram[(k - 1) * self.n..k * self.n];
            let ga: f64 = row.iter().zip(&self.alpha[1..]).map(|(g, a)| g * a).sum();
            self.grad[k] = self.losses[k - 1] - ga;
        }
    }

    /// `Σ α_k Δ_k − ½ αᵀGα`, evaluated directly.
    fn objective(&self) -> f64 {
        let mut quad = 0.0;
        for a in 1..=self.n {
            if self.alpha[a] == 0.0 {
                continue;
            }
            let row = &self.gram[(a - 1) * self.n..a * self.n];
            quad += self.alpha[a] * row.iter().zip(&self.alpha[1..]).map(|(g, b)| g * b).sum::<f64>();
        }
        let lin: f64 = (1..=self.n).map(|k| self.alpha[k] * self.losses[k - 1]).sum();
        lin - 0.5 * quad
    }

    /// Runs pair updates until the KKT gap drops below `tol`.
    fn optimize(&mut self, tol: f64, max_iters: usize) -> (usize, bool) {
        self.refresh();
        let m = self.n + 1;
        for it in 0..max_iters {
            // raise the best-gradient variable, lower the worst one still positive
            let mut up = 0;
            for k in 1..m {
                if self.grad[k] > self.grad[up] {
                    up = k;
                }
            }
            let mut down = usize::MAX;
            for k in 0..m {
                if self.alpha[k] > 0.0 && (down == usize::MAX || self.grad[k] < self.grad[down]) {
                    down = k;
                }
            }
            if down == usize::MAX || self.grad[up] - self.grad[down] < tol {
                return (it, true);
            }
            let curv = self.g(up, up) + self.g(down, down) - 2.0 * self.g(up, down);
            let gap = self.grad[up] - self.grad[down];
            let step = if curv > 1e-300 { (gap / curv).min(self.alpha[down]) } else { self.alpha[down] };
            if step <= 0.0 {
                return (it, true);
            }
            self.alpha[up] += step;
            self.alpha[down] -= step;
            if self.alpha[down] < 1e-15 * self.alpha.iter().sum::<f64>().max(1.0) {
                self.alpha[down] = 0.0;
            }
            for k in 1..m {
                self.grad[k] -= step * (self.g(k, up) - self.g(k, down));
            }
        }
        (max_iters, false)
    }
}

fn finish_qp(constraints: &[Constraint], mut dual: DualState, qp_tol: f64) -> QpSolution {
    let budget = 10_000 + 2_000 * constraints.len();
    let (iterations, converged) = dual.optimize(qp_tol, budget);
    let w = weights_from(constraints, &dual.alpha[1..]);
    let xi = slack(constraints, &w);
    QpSolution {
        w,
        xi,
        alpha: dual.alpha[1..].to_vec(),
        dual_objective: dual.objective(),
        iterations,
        converged,
    }
}

fn weights_from(constraints: &[Constraint], alpha: &[f64]) -> SparseVec {
    let pairs = constraints
        .iter()
        .zip(alpha)
        .filter(|(_, &a)| a > 0.0)
        .flat_map(|(k, &a)| k.g.entries().iter().map(move |&(i, v)| (i, a * v)))
        .collect();
    SparseVec::from_pairs(pairs)
}

/// `max_k (Δ_k − w·g_k)₊`.
fn slack(constraints: &[Constraint], w: &SparseVec) -> f64 {
    constraints.iter().map(|k| k.loss - w.dot(&k.g)).fold(0.0, f64::max)
}

/// Outcome of [`train`].
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub weights: ModelWeights,
    pub xi: f64,
    /// Cutting planes added by loss-augmented inference.
    pub planes: usize,
    /// Warm-start structures plus cutting planes.
    pub working_set: usize,
    /// Restricted-problem optimum after each solve.
    pub objective_history: Vec<f64>,
    /// `H(y*) − ξ` for the last most-violated structure.
    pub violation: f64,
    pub converged: bool,
}

/// Random feasible structure: probes in random order, each taking a random
/// number (up to its degree) of random galleries with spare capacity.
pub fn random_feasible(spec: &FeasibleSetSpec, rng: &mut impl Rng) -> MatchStructure {
    let (n1, n2) = (spec.probes(), spec.galleries());
    let cap = spec.gallery_cap();
    let mut y = MatchStructure::zeros(n1, n2);
    let mut load = vec![0usize; n2];
    let mut order: Vec<usize> = (0..n1).collect();
    order.shuffle(rng);
    for i in order {
        let want = rng.gen_range(0..=spec.probe_degrees()[i]);
        let mut open: Vec<usize> = (0..n2).filter(|&j| load[j] < cap).collect();
        open.shuffle(rng);
        for &j in open.iter().take(want) {
            y.set(i, j, true);
            load[j] += 1;
        }
    }
    y
}

/// Descriptors laid out as a dense `N₁ × N₂` table.
struct PairTable<'a> {
    n2: usize,
    cells: Vec<&'a SparseVec>,
    scale: f64,
}

impl<'a> PairTable<'a> {
    fn new(descriptors: &'a BTreeMap<(usize, usize), CooccurrenceDescriptor>, n1: usize, n2: usize) -> Result<Self> {
        if let Some(&(i, j)) = descriptors.keys().find(|&&(i, j)| i >= n1 || j >= n2) {
            return Err(Error::IndexOutOfRange(i, j));
        }
        let mut cells = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                cells.push(&descriptors.get(&(i, j)).ok_or(Error::MissingDescriptor(i, j))?.features);
            }
        }
        Ok(PairTable { n2, cells, scale: 1.0 / n1.max(1) as f64 })
    }

    fn scores(&self, w: &SparseVec, n1: usize) -> Result<SimilarityMatrix> {
        let data: Vec<f64> = self.cells.par_iter().map(|d| w.dot(d)).collect();
        SimilarityMatrix::new(n1, self.n2, data)
    }

    /// `(f(y) − f(ȳ)) / N₁` and `Δ(y, ȳ) / N₁`.
    fn constraint(&self, y: &MatchStructure, ybar: &MatchStructure) -> Result<Constraint> {
        let mut pairs = Vec::new();
        for (k, (&a, &b)) in y.bits().iter().zip(ybar.bits()).enumerate() {
            if a != b {
                let sign = if a { self.scale } else { -self.scale };
                pairs.extend(self.cells[k].entries().iter().map(|&(i, v)| (i, sign * v)));
            }
        }
        Ok(Constraint {
            g: SparseVec::from_pairs(pairs),
            loss: loss(y, ybar)? * self.scale,
        })
    }
}

/// 1-slack cutting-plane training.
///
/// `descriptors` must cover every probe/gallery pair of `y_true`;
/// `codewords` is `(K₁, K₂)`. Rows or columns of `y_true` may be empty.
pub fn train(
    descriptors: &BTreeMap<(usize, usize), CooccurrenceDescriptor>,
    y_true: &MatchStructure,
    codewords: (usize, usize),
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let (n1, n2) = (y_true.rows(), y_true.cols());
    let table = PairTable::new(descriptors, n1, n2)?;
    let spec = FeasibleSetSpec::for_ground_truth(y_true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut constraints: Vec<Constraint> = Vec::new();
    let mut seen: Vec<MatchStructure> = Vec::new();
    for _ in 0..cfg.warm_start_samples {
        let ybar = random_feasible(&spec, &mut rng);
        if ybar != *y_true && !seen.contains(&ybar) {
            constraints.push(table.constraint(y_true, &ybar)?);
            seen.push(ybar);
        }
    }
    let mut dual = DualState::new(Vec::new(), Vec::new(), cfg.c);
    let warm = std::mem::take(&mut constraints);
    for k in warm {
        add_plane(&mut dual, &constraints, &k);
        constraints.push(k);
    }

    let budget = |planes: usize| 10_000 + 2_000 * planes;
    let mut history = Vec::new();
    let mut planes = 0;
    loop {
        let (_, ok) = dual.optimize(cfg.qp_tol, budget(constraints.len()));
        if !ok {
            return Err(Error::Divergence(format!(
                "restricted QP missed tolerance {} with {} planes",
                cfg.qp_tol,
                constraints.len()
            )));
        }
        let objective = dual.objective();
        if !objective.is_finite() {
            return Err(Error::Divergence("restricted QP objective is not finite".into()));
        }
        history.push(objective);
        let w = weights_from(&constraints, &dual.alpha[1..]);
        let xi = slack(&constraints, &w);

        let s = table.scores(&w, n1)?;
        let ystar = loss_augmented_inference(&s, y_true, &spec)?;
        let cut = table.constraint(y_true, &ystar)?;
        let violation = cut.loss - w.dot(&cut.g) - xi;
        let done = violation < cfg.violation_tol;
        if done || planes >= cfg.max_planes {
            return Ok(TrainReport {
                weights: ModelWeights::new(codewords.0, codewords.1, w)?,
                xi,
                planes,
                working_set: constraints.len(),
                objective_history: history,
                violation,
                converged: done,
            });
        }
        add_plane(&mut dual, &constraints, &cut);
        constraints.push(cut);
        planes += 1;
    }
}

fn add_plane(dual: &mut DualState, existing: &[Constraint], k: &Constraint) {
    let cross: Vec<f64> = existing.iter().map(|e| e.g.dot(&k.g)).collect();
    dual.push(&cross, k.g.norm_sq(), k.loss);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccur::pack;

    fn sv(pairs: &[(u64, f64)]) -> SparseVec {
        SparseVec::from_pairs(pairs.to_vec())
    }

    #[test]
    fn single_plane_closed_form() {
        let g = sv(&[(0, 1.0), (3, 2.0)]);
        let k = Constraint { g: g.clone(), loss: 2.5 };
        let sol = solve_restricted_qp(&[k], 100.0, 1e-12);
        let expect = g.scale(2.5 / 5.0);
        for (&(i, a), &(j, b)) in sol.w.entries().iter().zip(expect.entries()) {
            assert_eq!(i, j);
            assert!((a - b).abs() < 1e-12);
        }
        assert!(sol.xi.abs() < 1e-12);
        assert!((sol.dual_objective - 0.5 * 2.5 * 2.5 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn budget_binds_when_c_is_small() {
        // Δ > C‖g‖²: α = C, w = C g, ξ = Δ − C‖g‖²
        let g = sv(&[(1, 1.0)]);
        let sol = solve_restricted_qp(&[Constraint { g, loss: 3.0 }], 0.5, 1e-12);
        assert!((sol.w.get(1) - 0.5).abs() < 1e-12);
        assert!((sol.xi - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_losses_give_zero_weights() {
        let ks = vec![
            Constraint { g: sv(&[(0, 1.0)]), loss: 0.0 },
            Constraint { g: sv(&[(1, -2.0)]), loss: 0.0 },
        ];
        let sol = solve_restricted_qp(&ks, 5.0, 1e-12);
        assert!(sol.w.is_empty());
        assert_eq!(sol.xi, 0.0);
    }

    #[test]
    fn zero_c_gives_zero_weights() {
        let sol = solve_restricted_qp(&[Constraint { g: sv(&[(0, 1.0)]), loss: 1.0 }], 0.0, 1e-9);
        assert!(sol.w.is_empty());
        assert_eq!(sol.xi, 1.0);
    }

    #[test]
    fn weights_file_round_trip() {
        let w = ModelWeights::new(3, 4, sv(&[(pack(0, 3), 0.5), (pack(2, 1), -1.25)])).unwrap();
        assert_eq!(ModelWeights::decode(&w.encode()).unwrap(), w);
        let bytes = w.encode();
        assert_eq!(&bytes[..4], b"PRWT");
        assert_eq!(bytes.len(), 4 + 12 + 2 * 12);
        assert!(ModelWeights::new(2, 2, sv(&[(pack(2, 0), 1.0)])).is_err());
        assert!(ModelWeights::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn random_structures_are_feasible() {
        let spec = FeasibleSetSpec::new(vec![1, 2, 3], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            assert!(random_feasible(&spec, &mut rng).is_feasible(&spec));
        }
    }

    #[test]
    fn missing_descriptor_is_reported() {
        let y = MatchStructure::identity(2);
        let mut d = BTreeMap::new();
        for (i, j) in [(0, 0), (0, 1), (1, 0)] {
            d.insert((i, j), CooccurrenceDescriptor {
                probe: i.to_string(),
                gallery: j.to_string(),
                features: sv(&[(0, 1.0)]),
            });
        }
        let err = train(&d, &y, (1, 1), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingDescriptor(1, 1)));
    }
}
