//! End to end on rendered images: writes PPM files and TSV manifests, builds
//! codebooks, trains weights and matches, exactly as the `prism` binary does.
//!
//! `cargo run --release --example image_pipeline [out_dir]`

use std::path::PathBuf;

use prism::eval::{generate_synthetic, write_synthetic_dataset, SyntheticSpec};
use prism::pipeline::{cmd_build_codebook, cmd_match, cmd_train, PipelineConfig};

fn main() -> prism::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/image_pipeline".into()));
    let spec = SyntheticSpec {
        n_train: 20,
        n_test: 20,
        height: 12,
        width: 6,
        codewords: 8,
        noise: 0.05,
        jitter: 1,
        seed: 1,
        ..SyntheticSpec::default()
    };
    let (train, test) = generate_synthetic(&spec)?;
    // 5-pixel cells, so a 5x5 patch at stride 5 covers one cell
    let train_manifest = write_synthetic_dataset(&out, "train", &train, 5)?;
    let test_manifest = write_synthetic_dataset(&out, "test", &test, 5)?;

    let mut cfg = PipelineConfig::default();
    for (k, v) in [("codebook-size", "8"), ("patch", "5"), ("stride", "5"), ("kernel", "box"), ("sigma", "2"), ("ranks", "1,5")] {
        cfg.set(k, v)?;
    }
    let codebooks = out.join("codebooks");
    for s in cmd_build_codebook(&train_manifest, &codebooks, &cfg)? {
        println!("view {}: K={} D={} inertia={:.3}", s.view.number(), s.size, s.dim, s.inertia);
    }
    let weights = out.join("weights.prwt");
    let report = cmd_train(&train_manifest, &codebooks, &weights, &cfg)?;
    println!("trained: {} planes, converged {}", report.planes, report.converged);
    let summary = cmd_match(&test_manifest, &codebooks, &weights, &out.join("matches"), &cfg)?;
    for (r, obj) in &summary.objectives {
        println!("r={r}: objective {obj:.4}");
    }
    print!("{}", summary.cmc.to_csv());
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
