use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prism::codebook::{encode_image, Codebook};
use prism::eval::{activation_maps, cmc, generate_synthetic, score_matrix, write_synthetic_dataset, SyntheticSpec};
use prism::ingest::{load_features, load_manifest, BaselineDescriptor};
use prism::learner::ModelWeights;
use prism::matcher::{rank_galleries, LpMode, MatchStructure};
use prism::spatial::KernelSpec;
use prism::View;

fn prism(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prism")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = prism(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FLAGS: &[&str] = &["--codebook-size", "8", "--patch", "5", "--stride", "5", "--kernel", "box", "--sigma", "2"];

/// Renders train/test manifests of 5-pixel cells, so a 5×5 patch at stride 5
/// sees exactly one grid cell.
fn dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = SyntheticSpec {
        n_train: 10,
        n_test: 10,
        height: 12,
        width: 6,
        codewords: 8,
        noise: 0.05,
        jitter: 1,
        seed: 4,
        ..SyntheticSpec::default()
    };
    let (train, test) = generate_synthetic(&spec).unwrap();
    (
        write_synthetic_dataset(dir, "train", &train, 5).unwrap(),
        write_synthetic_dataset(dir, "test", &test, 5).unwrap(),
    )
}

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|x| x.to_string()).collect()
}

fn run_strings(args: &[String]) -> String {
    let refs: Vec<&str> = args.iter().map(|x| x.as_str()).collect();
    ok(&refs)
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (train_m, test_m) = dataset(dir);
    let cb = dir.join("cb");
    let cb_again = dir.join("cb2");

    let out = run_strings(&with(&["build-codebook", "--manifest", s(&train_m), "--out", s(&cb)], FLAGS));
    assert!(out.contains("view 1: K=8 D=14"), "{out}");
    run_strings(&with(&["build-codebook", "--manifest", s(&train_m), "--out", s(&cb_again)], FLAGS));
    for v in [1, 2] {
        let name = format!("codebook_v{v}.prcb");
        let bytes = std::fs::read(cb.join(&name)).unwrap();
        assert_eq!(bytes, std::fs::read(cb_again.join(&name)).unwrap());
        assert_eq!(Codebook::decode(&bytes).unwrap().encode(), bytes);
    }

    let weights = dir.join("w.prwt");
    let out = run_strings(&with(
        &["train", "--manifest", s(&train_m), "--codebooks", s(&cb), "--out", s(&weights)],
        FLAGS,
    ));
    assert!(out.contains("converged=true"), "{out}");
    let first = std::fs::read(&weights).unwrap();
    assert_eq!(&first[..4], b"PRWT");

    // cached run gives the same bytes, twice
    let cache = dir.join("cache");
    for _ in 0..2 {
        run_strings(&with(
            &["train", "--manifest", s(&train_m), "--codebooks", s(&cb), "--out", s(&weights), "--cache-dir", s(&cache)],
            FLAGS,
        ));
        assert_eq!(std::fs::read(&weights).unwrap(), first);
    }
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);

    let res = dir.join("res");
    let out = run_strings(&with(
        &["match", "--manifest", s(&test_m), "--codebooks", s(&cb), "--weights", s(&weights), "--out", s(&res), "--ranks", "1,3"],
        FLAGS,
    ));
    let rank1: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("rank-1="))
        .unwrap()
        .parse()
        .unwrap();
    let cmc_csv = std::fs::read_to_string(res.join("cmc.csv")).unwrap();
    assert!(cmc_csv.starts_with("rank,rate\n1,"));
    assert_eq!(cmc_csv.lines().count(), 4);
    let matches = std::fs::read_to_string(res.join("matches_r1.csv")).unwrap();
    assert!(matches.starts_with("probe_id,gallery_id,score,selected\n"));
    assert_eq!(matches.lines().count(), 1 + 10 * 10);

    // same number straight from the library
    let manifest = load_manifest(&test_m).unwrap();
    let kernel = KernelSpec::boxed(2.0).unwrap();
    let extractor = BaselineDescriptor { patch: 5, stride: 5 };
    let encode = |view: View| {
        let book = Codebook::load(&cb.join(format!("codebook_v{}.prcb", view.number()))).unwrap();
        let groups = manifest.groups(view);
        let images: Vec<_> = groups
            .iter()
            .map(|g| {
                g.paths
                    .iter()
                    .map(|p| encode_image(&g.entity_id, &load_features(p, &extractor).unwrap(), &book).unwrap())
                    .collect::<Vec<_>>()
            })
            .collect();
        (groups.into_iter().map(|g| g.entity_id).collect::<Vec<_>>(), activation_maps(&images, &kernel).unwrap())
    };
    let (pid, pmaps) = encode(View::One);
    let (gid, gmaps) = encode(View::Two);
    let w = ModelWeights::load(&weights).unwrap();
    let scores = score_matrix(&w, &pmaps, &gmaps).unwrap();
    let truth = MatchStructure::from_pairs(
        pid.len(),
        gid.len(),
        (0..pid.len()).flat_map(|i| (0..gid.len()).map(move |j| (i, j))).filter(|&(i, j)| pid[i] == gid[j]),
    )
    .unwrap();
    let sel: Vec<Vec<usize>> = rank_galleries(&scores, 1, LpMode::Exact)
        .unwrap()
        .into_iter()
        .map(|r| r.into_iter().map(|g| g.gallery).collect())
        .collect();
    let expect = cmc(&[sel], &truth).unwrap().rate(1);
    assert!((rank1 - expect).abs() < 1e-4, "{rank1} vs {expect}");

    // capped LP never beats the exact objective
    let objective = |lp: &str| -> f64 {
        let out = run_strings(&with(
            &["match", "--manifest", s(&test_m), "--codebooks", s(&cb), "--weights", s(&weights), "--out", s(&res), "--ranks", "2", "--lp", lp],
            FLAGS,
        ));
        out.lines().find_map(|l| l.strip_prefix("r=2 objective=")).unwrap().parse().unwrap()
    };
    assert!(objective("capped:10") <= objective("exact") + 1e-9);

    // only galleries: empty outputs, success
    let text = std::fs::read_to_string(&test_m).unwrap();
    let galleries_only: String = text.lines().filter(|l| l.contains("\t2\t")).map(|l| format!("{l}\n")).collect();
    let empty_m = dir.join("galleries.tsv");
    std::fs::write(&empty_m, galleries_only).unwrap();
    let res2 = dir.join("res2");
    run_strings(&with(
        &["match", "--manifest", s(&empty_m), "--codebooks", s(&cb), "--weights", s(&weights), "--out", s(&res2)],
        FLAGS,
    ));
    assert_eq!(std::fs::read_to_string(res2.join("matches_r1.csv")).unwrap(), "probe_id,gallery_id,score,selected\n");
    assert_eq!(std::fs::read_to_string(res2.join("cmc.csv")).unwrap(), "rank,rate\n");

    // C = 0 writes an all-zero model
    let zero = dir.join("zero.prwt");
    run_strings(&with(
        &["train", "--manifest", s(&train_m), "--codebooks", s(&cb), "--out", s(&zero), "--C", "0"],
        FLAGS,
    ));
    let z = ModelWeights::load(&zero).unwrap();
    assert_eq!((z.k1(), z.k2(), z.vector().nnz()), (8, 8, 0));
}

#[test]
fn error_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (train_m, _) = dataset(dir);

    let big = prism(&["build-codebook", "--manifest", s(&train_m), "--out", s(&dir.join("cb")), "--codebook-size", "100000", "--patch", "5", "--stride", "5"]);
    assert_eq!(big.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&big.stderr).contains("samples"));

    let missing = prism(&["train", "--manifest", s(&train_m), "--codebooks", s(&dir.join("nowhere")), "--out", s(&dir.join("w"))]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("codebook_v1.prcb"));

    let bad_kernel = prism(&["bench", "--out", s(&dir.join("b.csv")), "--kernel", "cubic"]);
    assert_eq!(bad_kernel.status.code(), Some(1));
    assert_eq!(prism(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(prism(&["--help"]).status.code(), Some(0));

    let missing_manifest = prism(&["build-codebook", "--manifest", s(&dir.join("none.tsv")), "--out", s(dir)]);
    assert_eq!(missing_manifest.status.code(), Some(2));
}

#[test]
fn bench_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bench.csv");
    ok(&["bench", "--out", s(&out), "--scale", "0"]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "S_t_kb,T1_ms,T2_ms,T3_s\n");

    let column = |seed: &str| -> Vec<String> {
        ok(&["bench", "--out", s(&out), "--scale", "12", "--codebook-size", "16", "--trials", "2", "--seed", seed]);
        let text = std::fs::read_to_string(&out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 4));
        lines[1..].iter().map(|l| l.split(',').next().unwrap().to_string()).collect()
    };
    assert_eq!(column("7"), column("7"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (train_m, _) = dataset(dir);
    let conf = dir.join("prism.conf");
    std::fs::write(&conf, "codebook-size=100000\npatch=5\nstride=5\n").unwrap();
    let fails = prism(&["build-codebook", "--manifest", s(&train_m), "--out", s(&dir.join("a")), "--config", s(&conf)]);
    assert_eq!(fails.status.code(), Some(2));
    ok(&["build-codebook", "--manifest", s(&train_m), "--out", s(&dir.join("b")), "--config", s(&conf), "--codebook-size", "4"]);
}
