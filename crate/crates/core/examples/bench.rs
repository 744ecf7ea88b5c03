//! Storage and timing of the test-time pipeline at a few scales.
//!
//! `cargo run --release --example bench [entities...]`

use prism::eval::{bench, bench_csv, BenchConfig};

fn main() -> prism::Result<()> {
    let scales: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let scales = if scales.is_empty() { vec![50, 100, 200] } else { scales };
    for n in scales {
        let rows = bench(&BenchConfig { entities: n, ..BenchConfig::default() })?;
        println!("# {n} probes x {n} galleries");
        print!("{}", bench_csv(&rows));
    }
    Ok(())
}
