//! Cross-view visual-word co-occurrence descriptors.
//!
//! For a probe activation map `a` (view one) and gallery map `b` (view two),
//! `φ[u, v] = 1/|Π| · Σ_h a_u(h) · b_v(h)` over all grid locations `h`.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::learner::ModelWeights;
use crate::matcher::MatchStructure;
use crate::spatial::ActivationMap;

/// Packs a codeword pair into one sparse index.
#[inline]
pub fn pack(u: u32, v: u32) -> u64 {
    ((u as u64) << 32) | v as u64
}

#[inline]
pub fn unpack(idx: u64) -> (u32, u32) {
    ((idx >> 32) as u32, idx as u32)
}

/// Sparse real vector over packed `(u, v)` indices, sorted, without zeros.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(u64, f64)>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sums duplicates and drops zeros.
    pub fn from_pairs(mut pairs: Vec<(u64, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut entries: Vec<(u64, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|e| e.1 != 0.0);
        SparseVec { entries }
    }

    /// From a dense row-major `k1 × k2` buffer.
    pub fn from_dense(dense: &[f64], k2: usize) -> Self {
        let entries = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (pack((i / k2) as u32, (i % k2) as u32), v))
            .collect();
        SparseVec { entries }
    }

    pub fn to_dense(&self, k1: usize, k2: usize) -> Vec<f64> {
        let mut out = vec![0.0; k1 * k2];
        for &(i, v) in &self.entries {
            let (u, w) = unpack(i);
            out[u as usize * k2 + w as usize] = v;
        }
        out
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: u64) -> f64 {
        self.entries
            .binary_search_by_key(&idx, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum()
    }

    /// `self + coef · other`.
    pub fn add_scaled(&self, other: &SparseVec, coef: f64) -> SparseVec {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let take_a = j >= b.len() || (i < a.len() && a[i].0 < b[j].0);
            let take_b = i >= a.len() || (j < b.len() && b[j].0 < a[i].0);
            if take_a {
                out.push(a[i]);
                i += 1;
            } else if take_b {
                out.push((b[j].0, coef * b[j].1));
                j += 1;
            } else {
                out.push((a[i].0, a[i].1 + coef * b[j].1));
                i += 1;
                j += 1;
            }
        }
        out.retain(|e| e.1 != 0.0);
        SparseVec { entries: out }
    }

    pub fn scale(&self, c: f64) -> SparseVec {
        SparseVec::from_pairs(self.entries.iter().map(|&(i, v)| (i, c * v)).collect())
    }

    /// Rounds every value through `f32`, matching what the binary formats store.
    pub fn quantized(&self) -> SparseVec {
        SparseVec::from_pairs(self.entries.iter().map(|&(i, v)| (i, v as f32 as f64)).collect())
    }
}

/// `φ` for one probe/gallery pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceDescriptor {
    pub probe: String,
    pub gallery: String,
    pub features: SparseVec,
}

impl CooccurrenceDescriptor {
    pub(crate) fn encode_into(&self, w: &mut Writer) {
        w.bytes(DESCRIPTOR_MAGIC)
            .string(&self.probe)
            .string(&self.gallery)
            .u32(self.features.nnz() as u32);
        for &(i, v) in self.features.entries() {
            w.u64(i).f32(v as f32);
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        self.encode_into(&mut w);
        w.buf
    }

    fn decode_from(r: &mut Reader<'_>) -> Result<Self> {
        r.magic(DESCRIPTOR_MAGIC)?;
        let probe = r.string()?;
        let gallery = r.string()?;
        let nnz = r.u32()? as usize;
        let mut pairs = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let i = r.u64()?;
            let v = r.f32()?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Format(format!("descriptor value {v} is not a finite nonnegative")));
            }
            pairs.push((i, v as f64));
        }
        Ok(CooccurrenceDescriptor {
            probe,
            gallery,
            features: SparseVec::from_pairs(pairs),
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Self::decode_from(&mut Reader::new(bytes, "descriptor"))
    }
}

const DESCRIPTOR_MAGIC: &[u8; 4] = b"PRCO";

/// Writes back-to-back `PRCO` records.
pub fn write_descriptors(path: &Path, descriptors: &[CooccurrenceDescriptor]) -> Result<()> {
    let mut w = Writer::default();
    for d in descriptors {
        d.encode_into(&mut w);
    }
    binio::write_atomic(path, &w.buf)
}

pub fn read_descriptors(path: &Path) -> Result<Vec<CooccurrenceDescriptor>> {
    let bytes = binio::read_file(path)?;
    let mut r = Reader::new(&bytes, "descriptor stream");
    let mut out = Vec::new();
    while !r.is_empty() {
        out.push(CooccurrenceDescriptor::decode_from(&mut r)?);
    }
    Ok(out)
}

fn check_pair(a: &ActivationMap, b: &ActivationMap) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.locations(),
            found: b.locations(),
        });
    }
    Ok(())
}

/// Co-occurrence descriptor of a probe map `a` and gallery map `b`.
pub fn cooccurrence(a: &ActivationMap, b: &ActivationMap) -> Result<CooccurrenceDescriptor> {
    check_pair(a, b)?;
    let k2 = b.codewords();
    let mut scratch = vec![0.0f64; a.codewords() * k2];
    let mut touched: Vec<usize> = Vec::new();
    for loc in 0..a.locations() {
        let (ca, cb) = (a.at(loc), b.at(loc));
        if ca.is_empty() || cb.is_empty() {
            continue;
        }
        for &(u, av) in ca {
            let row = u as usize * k2;
            for &(v, bv) in cb {
                let slot = &mut scratch[row + v as usize];
                if *slot == 0.0 {
                    touched.push(row + v as usize);
                }
                *slot += av as f64 * bv as f64;
            }
        }
    }
    let n = a.locations() as f64;
    touched.sort_unstable();
    let pairs = touched
        .into_iter()
        .filter(|&idx| scratch[idx] != 0.0)
        .map(|idx| (pack((idx / k2) as u32, (idx % k2) as u32), scratch[idx] / n))
        .collect();
    Ok(CooccurrenceDescriptor {
        probe: a.entity_id.clone(),
        gallery: b.entity_id.clone(),
        features: SparseVec::from_pairs(pairs),
    })
}

/// `w · φ(a, b)` without materializing `φ`. `dense_w` is row-major `K1 × K2`.
pub fn pair_score(dense_w: &[f64], a: &ActivationMap, b: &ActivationMap) -> Result<f64> {
    check_pair(a, b)?;
    let k2 = b.codewords();
    if dense_w.len() != a.codewords() * k2 {
        return Err(Error::DimensionMismatch {
            expected: a.codewords() * k2,
            found: dense_w.len(),
        });
    }
    let mut total = 0.0;
    for loc in 0..a.locations() {
        let cb = b.at(loc);
        if cb.is_empty() {
            continue;
        }
        for &(u, av) in a.at(loc) {
            let row = &dense_w[u as usize * k2..(u as usize + 1) * k2];
            let inner: f64 = cb.iter().map(|&(v, bv)| row[v as usize] * bv as f64).sum();
            total += av as f64 * inner;
        }
    }
    Ok(total / a.locations() as f64)
}

/// `f(y) = Σ_{ij} y_ij φ(x_ij)`.
pub fn aggregate_basis(
    descriptors: &BTreeMap<(usize, usize), CooccurrenceDescriptor>,
    y: &MatchStructure,
) -> Result<SparseVec> {
    if let Some(&(i, j)) = descriptors.keys().find(|&&(i, j)| i >= y.rows() || j >= y.cols()) {
        return Err(Error::IndexOutOfRange(i, j));
    }
    let mut pairs = Vec::new();
    for (i, j) in y.selected() {
        let d = descriptors.get(&(i, j)).ok_or(Error::MissingDescriptor(i, j))?;
        pairs.extend_from_slice(d.features.entries());
    }
    Ok(SparseVec::from_pairs(pairs))
}

/// Descriptors for every probe/gallery pair, values rounded to `f32` so that
/// they agree with what a descriptor file would hold.
pub fn descriptor_table(
    probes: &[ActivationMap],
    galleries: &[ActivationMap],
) -> Result<BTreeMap<(usize, usize), CooccurrenceDescriptor>> {
    let n2 = galleries.len();
    let cells: Vec<CooccurrenceDescriptor> = (0..probes.len() * n2)
        .into_par_iter()
        .map(|k| {
            let mut d = cooccurrence(&probes[k / n2], &galleries[k % n2])?;
            d.features = d.features.quantized();
            Ok(d)
        })
        .collect::<Result<_>>()?;
    Ok(cells.into_iter().enumerate().map(|(k, d)| ((k / n2, k % n2), d)).collect())
}

/// Sparse dot product `w · φ`.
pub fn score(w: &ModelWeights, d: &CooccurrenceDescriptor) -> f64 {
    w.vector().dot(&d.features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::View;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_map(id: &str, k: usize, h: usize, w: usize, dense: &[f32]) -> ActivationMap {
        ActivationMap::from_dense(id, View::One, k, h, w, dense).unwrap()
    }

    fn random_map(rng: &mut ChaCha8Rng, k: usize, h: usize, w: usize) -> ActivationMap {
        let dense: Vec<f32> = (0..k * h * w)
            .map(|_| if rng.gen_bool(0.4) { rng.gen::<f32>() } else { 0.0 })
            .collect();
        dense_map("x", k, h, w, &dense)
    }

    fn triple_loop(a: &ActivationMap, b: &ActivationMap) -> Vec<f64> {
        let (h, w) = a.dims();
        let (k1, k2) = (a.codewords(), b.codewords());
        let mut out = vec![0.0; k1 * k2];
        for u in 0..k1 {
            for v in 0..k2 {
                let mut s = 0.0;
                for r in 0..h {
                    for c in 0..w {
                        s += a.value(u, r, c) as f64 * b.value(v, r, c) as f64;
                    }
                }
                out[u * k2 + v] = s / (h * w) as f64;
            }
        }
        out
    }

    #[test]
    fn constant_maps_give_one() {
        let a = dense_map("a", 2, 3, 3, &[vec![1.0; 9], vec![0.0; 9]].concat());
        let b = dense_map("b", 3, 3, 3, &[vec![0.0; 9], vec![0.0; 9], vec![1.0; 9]].concat());
        let d = cooccurrence(&a, &b).unwrap();
        assert_eq!(d.features.get(pack(0, 2)), 1.0);
        assert_eq!(d.features.nnz(), 1);
    }

    #[test]
    fn disjoint_supports_give_zero() {
        let mut da = vec![0.0; 8];
        let mut db = vec![0.0; 8];
        da[1] = 1.0;
        db[6] = 1.0;
        let d = cooccurrence(&dense_map("a", 1, 2, 4, &da), &dense_map("b", 1, 2, 4, &db)).unwrap();
        assert!(d.features.is_empty());
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let a = random_map(&mut rng, 6, 8, 4);
            let b = random_map(&mut rng, 6, 8, 4);
            let fast = cooccurrence(&a, &b).unwrap().features.to_dense(6, 6);
            for (x, y) in fast.iter().zip(triple_loop(&a, &b)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn swapping_roles_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_map(&mut rng, 4, 5, 3);
        let b = random_map(&mut rng, 5, 5, 3);
        let ab = cooccurrence(&a, &b).unwrap().features;
        let ba = cooccurrence(&b, &a).unwrap().features;
        for &(i, v) in ab.entries() {
            let (u, w) = unpack(i);
            assert!((ba.get(pack(w, u)) - v).abs() < 1e-15);
        }
        assert_eq!(ab.nnz(), ba.nnz());
    }

    #[test]
    fn pair_score_matches_descriptor_dot() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_map(&mut rng, 5, 6, 4);
        let b = random_map(&mut rng, 7, 6, 4);
        let w: Vec<f64> = (0..35).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d = cooccurrence(&a, &b).unwrap();
        let via_desc: f64 = d
            .features
            .entries()
            .iter()
            .map(|&(i, v)| {
                let (u, x) = unpack(i);
                w[u as usize * 7 + x as usize] * v
            })
            .sum();
        assert!((pair_score(&w, &a, &b).unwrap() - via_desc).abs() < 1e-12);
    }

    #[test]
    fn sparse_dot_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let mk = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..48).map(|_| if rng.gen_bool(0.3) { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect()
            };
            let (x, y) = (mk(&mut rng), mk(&mut rng));
            let dense: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let sx = SparseVec::from_dense(&x, 8);
            let sy = SparseVec::from_dense(&y, 8);
            assert!((sx.dot(&sy) - dense).abs() < 1e-12);
            let sum = sx.add_scaled(&sy, -0.5).to_dense(6, 8);
            for k in 0..48 {
                assert!((sum[k] - (x[k] - 0.5 * y[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn score_examples() {
        let d = CooccurrenceDescriptor {
            probe: "p".into(),
            gallery: "g".into(),
            features: SparseVec::from_pairs(vec![(pack(1, 2), 0.5), (pack(0, 0), 0.25)]),
        };
        assert_eq!(score(&ModelWeights::zeros(3, 3), &d), 0.0);
        let w = ModelWeights::new(3, 3, SparseVec::from_pairs(vec![(pack(1, 2), 2.0)])).unwrap();
        assert_eq!(score(&w, &d), 1.0);
    }

    fn desc(i: usize, j: usize, entries: Vec<(u64, f64)>) -> ((usize, usize), CooccurrenceDescriptor) {
        (
            (i, j),
            CooccurrenceDescriptor {
                probe: i.to_string(),
                gallery: j.to_string(),
                features: SparseVec::from_pairs(entries),
            },
        )
    }

    #[test]
    fn aggregate_examples() {
        let mut table = BTreeMap::new();
        for i in 0..4 {
            for j in 0..4 {
                let (k, d) = desc(i, j, vec![(pack(i as u32, j as u32), 1.0), (pack(9, 9), 0.5)]);
                table.insert(k, d);
            }
        }
        let zero = MatchStructure::zeros(4, 4);
        assert!(aggregate_basis(&table, &zero).unwrap().is_empty());

        let mut one = MatchStructure::zeros(4, 4);
        one.set(2, 3, true);
        assert_eq!(aggregate_basis(&table, &one).unwrap(), table[&(2, 3)].features);

        let mut diag = MatchStructure::zeros(4, 4);
        for i in 0..3 {
            diag.set(i, i, true);
        }
        let sum = aggregate_basis(&table, &diag).unwrap();
        let expected = SparseVec::from_pairs(vec![
            (pack(0, 0), 1.0),
            (pack(1, 1), 1.0),
            (pack(2, 2), 1.0),
            (pack(9, 9), 1.5),
        ]);
        assert_eq!(sum, expected);

        let small = MatchStructure::zeros(2, 2);
        assert!(matches!(aggregate_basis(&table, &small), Err(Error::IndexOutOfRange(..))));
    }

    #[test]
    fn descriptor_stream_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.prco");
        let ds = vec![
            desc(0, 1, vec![(pack(3, 4), 0.125)]).1,
            desc(2, 0, vec![]).1,
        ];
        write_descriptors(&path, &ds).unwrap();
        assert_eq!(read_descriptors(&path).unwrap(), ds);
    }
}
