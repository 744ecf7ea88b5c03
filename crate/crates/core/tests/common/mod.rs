#![allow(dead_code)]

use prism::codebook::CodewordImage;
use prism::matcher::{FeasibleSetSpec, MatchStructure, SimilarityMatrix};
use prism::spatial::{kappa, KernelSpec};
use prism::View;
use rand::Rng;

/// Calls `visit` on every structure of the feasible set.
pub fn for_each_feasible(spec: &FeasibleSetSpec, mut visit: impl FnMut(&MatchStructure)) {
    let (n1, n2) = (spec.probes(), spec.galleries());
    let cap = spec.gallery_cap();
    let mut y = MatchStructure::zeros(n1, n2);
    let mut load = vec![0usize; n2];
    fn rec(
        i: usize,
        start: usize,
        taken: usize,
        spec: &FeasibleSetSpec,
        cap: usize,
        y: &mut MatchStructure,
        load: &mut Vec<usize>,
        visit: &mut dyn FnMut(&MatchStructure),
    ) {
        if i == spec.probes() {
            visit(y);
            return;
        }
        // stop adding to row i here
        rec(i + 1, 0, 0, spec, cap, y, load, visit);
        if taken == spec.probe_degrees()[i] {
            return;
        }
        for j in start..spec.galleries() {
            if load[j] < cap {
                y.set(i, j, true);
                load[j] += 1;
                rec(i, j + 1, taken + 1, spec, cap, y, load, visit);
                load[j] -= 1;
                y.set(i, j, false);
            }
        }
    }
    rec(0, 0, 0, spec, cap, &mut y, &mut load, &mut visit);
}

/// Best objective over the feasible set by enumeration.
pub fn brute_force_best(s: &SimilarityMatrix, spec: &FeasibleSetSpec) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for_each_feasible(spec, |y| best = best.max(y.objective(s)));
    best
}

pub fn random_matrix(rng: &mut impl Rng, n1: usize, n2: usize) -> SimilarityMatrix {
    SimilarityMatrix::from_fn(n1, n2, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
}

pub fn random_structure(rng: &mut impl Rng, n1: usize, n2: usize) -> MatchStructure {
    let mut y = MatchStructure::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            y.set(i, j, rng.gen_bool(0.5));
        }
    }
    y
}

pub fn random_image(rng: &mut impl Rng, id: &str, view: View, h: usize, w: usize, k: usize) -> CodewordImage {
    let codes = (0..h * w).map(|_| rng.gen_range(0..k as u32)).collect();
    CodewordImage::new(id, view, h, w, k, codes).unwrap()
}

/// `ψ_u(h)` straight from the definition: mean over images of the best
/// kernel response to any support point, no distance transform.
pub fn naive_activation(images: &[CodewordImage], spec: &KernelSpec) -> Vec<f64> {
    let (h, w) = images[0].dims();
    let k = images[0].codewords();
    let mut out = vec![0.0; k * h * w];
    for img in images {
        for u in 0..k {
            for r in 0..h {
                for c in 0..w {
                    let mut best = 0.0f64;
                    for pr in 0..h {
                        for pc in 0..w {
                            if img.get(pr, pc) as usize == u {
                                let d = r.abs_diff(pr).max(c.abs_diff(pc));
                                best = best.max(kappa(spec, d as f64));
                            }
                        }
                    }
                    out[(u * h + r) * w + c] += best;
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v /= images.len() as f64;
    }
    out
}
