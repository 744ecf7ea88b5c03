//! Structured matching on a hand-written score matrix: degree bounds,
//! gallery capacity, exact versus capped solving, and rank selections.
//!
//! `cargo run --example structured_matching`

use prism::matcher::{gallery_cap, rank_by_score, rank_galleries, solve_matching, FeasibleSetSpec, LpMode, SimilarityMatrix};

fn main() -> prism::Result<()> {
    #[rustfmt::skip]
    let s = SimilarityMatrix::new(4, 4, vec![
        0.9, 0.8, 0.1, -0.2,
        0.85, 0.3, 0.2, 0.0,
        0.7, 0.6, 0.5, 0.1,
        -0.1, 0.2, 0.3, -0.4,
    ])?;

    println!("argmax per probe:");
    for (i, order) in rank_by_score(&s).iter().enumerate() {
        println!("  probe {i} -> gallery {}", order[0]);
    }

    let spec = FeasibleSetSpec::uniform(4, 1, 4)?;
    for mode in [LpMode::Exact, LpMode::Capped(2), LpMode::Capped(100)] {
        let sol = solve_matching(&s, &spec, mode)?;
        let pairs: Vec<String> = sol.structure.selected().map(|(i, j)| format!("{i}->{j}")).collect();
        println!("{mode}: objective {:.2} [{}]", sol.objective, pairs.join(" "));
    }
    println!("probe 3 is left unmatched: every gallery it could take is worth more elsewhere or negative");

    println!("\ngallery capacity for degrees [2; 4]: N2=4 -> {}, N2=5 -> {}", gallery_cap(&[2; 4], 4), gallery_cap(&[2; 4], 5));
    for r in 1..=4 {
        let sel = rank_galleries(&s, r, LpMode::Exact)?;
        let rows: Vec<String> = sel
            .iter()
            .map(|row| row.iter().map(|g| g.gallery.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        println!("rank {r}: {}", rows.join(" | "));
    }
    Ok(())
}
