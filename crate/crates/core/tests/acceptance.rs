//! Acceptance criteria, one line each. Exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{brute_force_best, naive_activation, random_image, random_matrix, random_structure};
use prism::cooccur::{cooccurrence, pack};
use prism::eval::{
    cmc, cmc_from_orderings, reid_trial, robust_trial, structured_cmc, ReidConfig, SyntheticSpec, TrialOutcome,
};
use prism::matcher::{
    gallery_cap, loss, rank_by_score, rank_galleries, solve_lp, solve_matching, FeasibleSetSpec, LpMode,
    MatchStructure, SimilarityMatrix,
};
use prism::spatial::{activation_map, kappa, ActivationMap, KernelSpec};
use prism::View;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok { Ok(()) } else { Err(msg.into()) }
}

fn exact_inference() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 120;
    for t in 0..n {
        let (n1, n2) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let d: Vec<usize> = (0..n1).map(|_| rng.gen_range(1..=2)).collect();
        let spec = FeasibleSetSpec::new(d.clone(), n2).map_err(|e| e.to_string())?;
        let s = random_matrix(&mut rng, n1, n2);
        let sol = solve_matching(&s, &spec, LpMode::Exact).map_err(|e| e.to_string())?;
        let best = brute_force_best(&s, &spec);
        ensure((sol.objective - best).abs() <= 1e-9, format!("instance {t}: {} vs {best}", sol.objective))?;
        let lp = solve_lp(&s, &d, spec.gallery_cap(), None);
        ensure(
            lp.x.iter().all(|&v| v.abs() < 1e-9 || (v - 1.0).abs() < 1e-9),
            format!("instance {t}: fractional LP vertex"),
        )?;
        ensure((lp.objective - best).abs() <= 1e-9, format!("instance {t}: LP {} vs {best}", lp.objective))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("{secs:.2}s"))?;
    Ok(format!("{n} instances agree with enumeration, integral LP, {secs:.2}s"))
}

fn gallery_caps() -> Check {
    let (a, b) = (gallery_cap(&[2; 4], 4), gallery_cap(&[2; 4], 5));
    ensure(a == 2 && b == 2, format!("caps {a}, {b}"))?;
    Ok("ceil(4*2/4) = ceil(4*2/5) = 2".into())
}

fn loss_linearization() -> Check {
    let lin = |y: &MatchStructure, yb: &MatchStructure| -> f64 {
        let mut v = 0.0;
        for (&a, &b) in y.bits().iter().zip(yb.bits()) {
            let (a, b) = (a as u8 as f64, b as u8 as f64);
            v += a + (1.0 - 2.0 * a) * b;
        }
        v
    };
    let all = |n1: usize, n2: usize| -> Vec<MatchStructure> {
        (0u32..1 << (n1 * n2))
            .map(|m| {
                MatchStructure::from_pairs(n1, n2, (0..n1 * n2).filter(|k| m >> k & 1 == 1).map(|k| (k / n2, k % n2)))
                    .unwrap()
            })
            .collect()
    };
    let small = all(2, 2);
    for y in &small {
        for yb in &small {
            ensure(loss(y, yb).unwrap() == lin(y, yb), "2x2 mismatch")?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let (y, yb) = (random_structure(&mut rng, 4, 4), random_structure(&mut rng, 4, 4));
        ensure(loss(&y, &yb).unwrap() == lin(&y, &yb), "4x4 mismatch")?;
    }
    Ok("Hamming loss equals its linear form on all 2x2 pairs and 500 random 4x4 pairs".into())
}

fn kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::truncated_gaussian(2.0).unwrap(),
        KernelSpec::truncated_linear(3.0).unwrap(),
        KernelSpec::default(),
    ]
}

fn activation_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for spec in kernels() {
        for n in 0..50 {
            let img = random_image(&mut rng, "e", View::One, 16, 8, 6);
            let map = activation_map(std::slice::from_ref(&img), &spec).map_err(|e| e.to_string())?;
            let want: Vec<f32> = naive_activation(&[img], &spec).iter().map(|&v| v as f32).collect();
            ensure(map.to_dense() == want, format!("{:?} image {n}", spec.kind))?;
        }
    }
    Ok("150 maps equal the brute-force definition".into())
}

fn repeated_images() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for spec in kernels() {
        let img = random_image(&mut rng, "e", View::Two, 16, 8, 6);
        let single = activation_map(std::slice::from_ref(&img), &spec).unwrap();
        for m in [2, 5] {
            let multi = activation_map(&vec![img.clone(); m], &spec).unwrap();
            ensure(multi.to_dense() == single.to_dense(), format!("{:?} M={m}", spec.kind))?;
        }
    }
    Ok("M in {2, 5} copies give the single-image map".into())
}

fn cooccurrence_dense() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (k, h, w) = (6, 8, 4);
    let n = h * w;
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let mut map = |id: &str, view| {
            let dense: Vec<f32> =
                (0..k * n).map(|_| if rng.gen_bool(0.6) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
            ActivationMap::from_dense(id, view, k, h, w, &dense).unwrap()
        };
        let (a, b) = (map("p", View::One), map("g", View::Two));
        let d = cooccurrence(&a, &b).map_err(|e| e.to_string())?;
        let (da, db) = (a.to_dense(), b.to_dense());
        for u in 0..k {
            for v in 0..k {
                let mut sum = 0.0;
                for l in 0..n {
                    sum += da[u * n + l] as f64 * db[v * n + l] as f64;
                }
                worst = worst.max((d.features.get(pack(u as u32, v as u32)) - sum / n as f64).abs());
            }
        }
    }
    ensure(worst <= 1e-12, format!("max error {worst:e}"))?;
    Ok(format!("sparse descriptor within {worst:.1e} of the dense triple loop"))
}

fn reid_trials() -> Result<Vec<TrialOutcome>, String> {
    let cfg = ReidConfig::default();
    (0..3)
        .map(|seed| reid_trial(&SyntheticSpec { seed, ..SyntheticSpec::default() }, &cfg).map_err(|e| e.to_string()))
        .collect()
}

fn reid_quality(trials: &Result<Vec<TrialOutcome>, String>, secs: f64) -> Check {
    let trials = trials.as_ref().map_err(Clone::clone)?;
    let n = trials.len() as f64;
    let prism = trials.iter().map(|t| t.prism_rank1).sum::<f64>() / n;
    let base = trials.iter().map(|t| t.baseline_rank1).sum::<f64>() / n;
    let msg = format!("rank-1 {prism:.3} vs argmax {base:.3}, {secs:.1}s");
    ensure(prism >= 0.80 && prism >= base && secs < 60.0, msg.clone())?;
    Ok(msg)
}

fn robust() -> Check {
    let cfg = ReidConfig::default();
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..3 {
        let spec = SyntheticSpec { unmatched: 0.5, seed, ..SyntheticSpec::default() };
        let o = robust_trial(&spec, &cfg).map_err(|e| e.to_string())?;
        if o.structured >= o.argmax {
            wins += 1;
        }
        parts.push(format!("{:.3}/{:.3}", o.structured, o.argmax));
    }
    let msg = format!("structured/argmax accuracy {}, {wins} of 3", parts.join(" "));
    ensure(wins >= 2, msg.clone())?;
    Ok(msg)
}

fn convergence(trials: &Result<Vec<TrialOutcome>, String>) -> Check {
    let trials = trials.as_ref().map_err(Clone::clone)?;
    for (t, o) in trials.iter().enumerate() {
        let r = &o.report;
        let monotone = r.objective_history.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        ensure(
            r.converged && r.violation < 1e-3 && r.planes <= 200 && monotone,
            format!(
                "trial {t}: converged={} violation={:e} planes={} monotone={monotone}",
                r.converged, r.violation, r.planes
            ),
        )?;
    }
    let planes: Vec<String> = trials.iter().map(|o| o.report.planes.to_string()).collect();
    Ok(format!("converged in {} planes", planes.join("/")))
}

fn kernel_values() -> Check {
    let g = kappa(&KernelSpec::truncated_linear(4.0).unwrap(), 2.0);
    let b = kappa(&KernelSpec::boxed(3.0).unwrap(), 4.0);
    let e = kappa(&KernelSpec::truncated_gaussian(3.0).unwrap(), 0.0);
    ensure(g == 0.5 && b == 0.0 && e == 1.0, format!("{g} {b} {e}"))?;
    Ok("linear(4, 2) = 0.5, box(3, 4) = 0, gaussian(d = 0) = 1".into())
}

fn permutation_truth(rng: &mut impl Rng, n: usize) -> MatchStructure {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    MatchStructure::from_pairs(n, n, (0..n).map(|i| (i, p[i]))).unwrap()
}

fn cmc_checks() -> Check {
    let n = 316;
    let trials = 10;
    let mut full = vec![0.0; n];
    let mut low = [0.0; 2];
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = SimilarityMatrix::from_fn(n, n, |_, _| rng.gen()).unwrap();
        let truth = permutation_truth(&mut rng, n);
        let c = cmc_from_orderings(&rank_by_score(&s), &truth, n).map_err(|e| e.to_string())?;
        ensure(c.rates().windows(2).all(|w| w[0] <= w[1]), "ordering CMC not monotone")?;
        for (m, r) in full.iter_mut().zip(c.rates()) {
            *m += r / trials as f64;
        }
        let sc = structured_cmc(&s, &truth, 2, LpMode::Exact).map_err(|e| e.to_string())?;
        ensure(sc.rate(1) <= sc.rate(2), "structured CMC not monotone")?;
        for (m, r) in low.iter_mut().zip(sc.rates()) {
            *m += r / trials as f64;
        }
        if seed == 0 {
            let all: Vec<Vec<usize>> = rank_galleries(&s, n, LpMode::Exact)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|sel| sel.into_iter().map(|g| g.gallery).collect())
                .collect();
            let rate = cmc(&[all], &truth).map_err(|e| e.to_string())?.rate(1);
            ensure(rate == 1.0, format!("rate at r = N2 is {rate}"))?;
        }
    }
    let worst = full
        .iter()
        .chain(&low)
        .zip((1..=n).chain(1..=2))
        .map(|(m, r)| (m - r as f64 / n as f64).abs())
        .fold(0.0f64, f64::max);
    ensure(worst <= 0.05, format!("null deviation {worst:.3}"))?;
    Ok(format!("monotone, rate(N2) = 1, null deviation {worst:.3} at N2 = {n}"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let trials = reid_trials();
    let reid_secs = start.elapsed().as_secs_f64();
    let results: Vec<(&str, Check)> = vec![
        ("exact inference on small instances", exact_inference()),
        ("gallery capacity", gallery_caps()),
        ("loss linearization", loss_linearization()),
        ("activation maps vs definition", activation_oracle()),
        ("repeated images", repeated_images()),
        ("co-occurrence vs dense loop", cooccurrence_dense()),
        ("synthetic re-identification", reid_quality(&trials, reid_secs)),
        ("missing matches", robust()),
        ("cutting-plane convergence", convergence(&trials)),
        ("kernel values", kernel_values()),
        ("CMC properties", cmc_checks()),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(msg) => println!("criterion {}: PASS {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {msg}", i + 1);
            }
        }
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
