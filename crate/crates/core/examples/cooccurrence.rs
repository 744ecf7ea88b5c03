//! Co-occurrence descriptors between a probe and galleries, and the scores
//! a weight vector assigns to them.
//!
//! `cargo run --example cooccurrence`

use prism::cooccur::{cooccurrence, score, unpack, SparseVec};
use prism::eval::{activation_maps, generate_synthetic, SyntheticSpec};
use prism::learner::ModelWeights;
use prism::spatial::KernelSpec;

fn main() -> prism::Result<()> {
    let spec = SyntheticSpec { n_train: 0, n_test: 4, codewords: 6, seed: 7, ..SyntheticSpec::default() };
    let (_, set) = generate_synthetic(&spec)?;
    let kernel = KernelSpec::default();
    let probes = activation_maps(&set.probes, &kernel)?;
    let galleries = activation_maps(&set.galleries, &kernel)?;

    let d = cooccurrence(&probes[0], &galleries[0])?;
    println!("{} vs {}: {} nonzero of {}", d.probe, d.gallery, d.features.nnz(), 6 * 6);
    let mut top: Vec<_> = d.features.entries().to_vec();
    top.sort_by(|a, b| b.1.total_cmp(&a.1));
    for &(i, v) in top.iter().take(5) {
        let (u, v2) = unpack(i);
        println!("  ({u}, {v2}) -> {v:.4}");
    }

    // reward same-codeword co-occurrence only
    let diag = SparseVec::from_pairs((0..6u32).map(|u| (prism::cooccur::pack(u, u), 1.0)).collect());
    let w = ModelWeights::new(6, 6, diag)?;
    println!("\ndiagonal weights, probe {}:", set.probe_ids()[0]);
    for g in &galleries {
        let d = cooccurrence(&probes[0], g)?;
        println!("  {:<12} {:.4}", d.gallery, score(&w, &d));
    }
    Ok(())
}
