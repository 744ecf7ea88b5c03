//! Spatial kernels and activation maps for a single codeword image.
//!
//! Prints the kernel profiles, then one activation channel per kernel as
//! a character grid.
//!
//! `cargo run --example activation_maps [sigma]`

use prism::codebook::CodewordImage;
use prism::spatial::{activation_map, kappa, KernelSpec};
use prism::View;

fn main() -> prism::Result<()> {
    let sigma: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3.0);
    let kernels = [
        ("gaussian", KernelSpec::truncated_gaussian(sigma)?),
        ("linear", KernelSpec::truncated_linear(sigma)?),
        ("box", KernelSpec::boxed(sigma)?),
    ];
    println!("d      gaussian  linear  box");
    for d in 0..=8 {
        let row: Vec<String> = kernels.iter().map(|(_, k)| format!("{:.3}", kappa(k, d as f64))).collect();
        println!("{d:<6} {}", row.join("     "));
    }

    // codeword 1 occupies two small blobs, everything else is codeword 0
    let (h, w) = (12, 8);
    let codes: Vec<u32> = (0..h * w)
        .map(|k| {
            let (r, c) = (k / w, k % w);
            u32::from((r == 2 && c == 2) || (r >= 8 && r <= 9 && c >= 5))
        })
        .collect();
    let img = CodewordImage::new("demo", View::One, h, w, 2, codes)?;
    for (name, k) in &kernels {
        let map = activation_map(std::slice::from_ref(&img), k)?;
        println!("\n{name}: codeword 1, {} stored entries", map.nnz());
        let ch = map.channel(1);
        for r in 0..h {
            let line: String = ch[r * w..(r + 1) * w]
                .iter()
                .map(|&v| match v {
                    v if v >= 0.999 => '#',
                    v if v >= 0.5 => '+',
                    v if v > 0.0 => '.',
                    _ => ' ',
                })
                .collect();
            println!("|{line}|");
        }
    }
    Ok(())
}
