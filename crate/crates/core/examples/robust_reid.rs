//! Half of the probes have no true gallery. Structured matching may leave a
//! probe unmatched; compare its matching accuracy with independent argmax.
//!
//! `cargo run --release --example robust_reid [trials] [unmatched]`

use prism::eval::{accuracy_csv, robust_trial, ReidConfig, SyntheticSpec};

fn main() -> prism::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let trials: u64 = args.first().and_then(|a| a.parse().ok()).unwrap_or(3);
    let unmatched: f64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0.5);
    let cfg = ReidConfig::default();
    let mut rows = Vec::new();
    for seed in 0..trials {
        let spec = SyntheticSpec { unmatched, seed, ..SyntheticSpec::default() };
        let out = robust_trial(&spec, &cfg)?;
        rows.push((format!("structured-{seed}"), spec.n_test, out.structured));
        rows.push((format!("argmax-{seed}"), spec.n_test, out.argmax));
    }
    print!("{}", accuracy_csv(&rows));
    Ok(())
}
