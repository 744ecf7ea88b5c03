use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prism::pipeline::{cmd_bench, cmd_build_codebook, cmd_match, cmd_train, PipelineConfig};

/// Person re-identification by structured matching.
#[derive(Parser)]
#[command(name = "prism", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn per-view visual-word codebooks from a manifest.
    BuildCodebook {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory receiving codebook_v1.prcb and codebook_v2.prcb.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Learn co-occurrence weights; entities sharing an id across views are matches.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        codebooks: PathBuf,
        /// Weights file to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Match probes to galleries; writes matches_r<r>.csv and cmc.csv.
    Match {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        codebooks: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Time the test-time pipeline on generated data.
    Bench {
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
}

#[derive(Args)]
struct Options {
    /// Flat key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    codebook_size: Option<String>,
    /// Train one codebook on both views.
    #[arg(long)]
    share_codebook: bool,
    /// Patch features sampled per view for k-means.
    #[arg(long)]
    samples: Option<String>,
    /// tgauss, tlinear or box.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    patch: Option<String>,
    #[arg(long)]
    stride: Option<String>,
    #[arg(long = "C")]
    c: Option<String>,
    /// Comma-separated ranks, e.g. 1,5,10.
    #[arg(long)]
    ranks: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    max_planes: Option<String>,
    /// exact or capped:N.
    #[arg(long)]
    lp: Option<String>,
    #[arg(long)]
    cache_dir: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// Entities per bench trial.
    #[arg(long)]
    scale: Option<String>,
}

impl Options {
    fn resolve(&self) -> prism::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.load_file(path)?;
        }
        let flags = [
            ("codebook-size", &self.codebook_size),
            ("samples", &self.samples),
            ("kernel", &self.kernel),
            ("sigma", &self.sigma),
            ("alpha", &self.alpha),
            ("patch", &self.patch),
            ("stride", &self.stride),
            ("C", &self.c),
            ("ranks", &self.ranks),
            ("seed", &self.seed),
            ("max-planes", &self.max_planes),
            ("lp", &self.lp),
            ("cache-dir", &self.cache_dir),
            ("trials", &self.trials),
            ("scale", &self.scale),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.share_codebook {
            cfg.share_codebook = true;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> prism::Result<()> {
    match cli.command {
        Command::BuildCodebook { manifest, out, opts } => {
            for s in cmd_build_codebook(&manifest, &out, &opts.resolve()?)? {
                println!("view {}: K={} D={} inertia={:.6} -> {}", s.view.number(), s.size, s.dim, s.inertia, s.path.display());
            }
        }
        Command::Train { manifest, codebooks, out, opts } => {
            let r = cmd_train(&manifest, &codebooks, &out, &opts.resolve()?)?;
            println!(
                "planes={} working_set={} xi={:.6} violation={:.3e} converged={} nnz={} -> {}",
                r.planes,
                r.working_set,
                r.xi,
                r.violation,
                r.converged,
                r.weights.vector().nnz(),
                out.display()
            );
        }
        Command::Match { manifest, codebooks, weights, out, opts } => {
            let s = cmd_match(&manifest, &codebooks, &weights, &out, &opts.resolve()?)?;
            println!("probes={} galleries={}", s.probes, s.galleries);
            for (r, obj) in &s.objectives {
                println!("r={r} objective={obj:.6}");
            }
            if !s.cmc.is_empty() {
                println!("rank-1={:.4}", s.cmc.rate(1));
            }
        }
        Command::Bench { out, opts } => {
            let rows = cmd_bench(&out, &opts.resolve()?)?;
            println!("{} rows -> {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
