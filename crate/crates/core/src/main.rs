use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plan::cli;
use plan::config::RunConfig;
use plan::model::Variant;
use plan::thread::Dataset;
use plan::Error;

/// Rumour veracity classification with post-level attention over threads.
#[derive(Parser)]
#[command(name = "plan", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Record that the run must be bit-reproducible (training is always
    /// single-threaded, so this only gets persisted with the config).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config override, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw thread documents, build the vocabulary and write processed threads.
    Preprocess {
        #[arg(long)]
        raw_dir: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<Dataset>,
        /// Word vector file (`token v1 v2 ...` per line).
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Train a model on a processed directory.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Score a checkpoint on one of its splits.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// test, val, train or all.
        #[arg(long)]
        split: Option<String>,
    },
    /// Write post-level (and for sta-hitplan, token-level) explanations.
    Explain {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Claim id to explain; defaults to the test split. Repeatable.
        #[arg(long = "claim")]
        claims: Vec<String>,
        /// Fail unless the model can produce token heatmaps.
        #[arg(long)]
        heatmap: bool,
    },
    /// Print dataset statistics for raw or processed directories.
    Stats { dirs: Vec<PathBuf> },
}

fn run(args: Args) -> plan::Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.deterministic |= args.deterministic;
    if args.out.is_some() {
        cfg.out = args.out;
    }
    match args.command {
        Command::Preprocess {
            raw_dir,
            dataset,
            embeddings,
        } => {
            cfg.preprocess.raw_dir = raw_dir.or(cfg.preprocess.raw_dir);
            cfg.preprocess.dataset = dataset.or(cfg.preprocess.dataset);
            cfg.preprocess.embeddings = embeddings.or(cfg.preprocess.embeddings);
            let summary = cli::cmd_preprocess(&cfg)?;
            print!("{}", plan::thread::stats_csv(std::slice::from_ref(&summary.stats)));
            for (path, e) in &summary.failures {
                eprintln!("{}: {e}", path.display());
            }
            if !summary.failures.is_empty() {
                return Err(Error::Data(format!(
                    "{} of {} files failed",
                    summary.failures.len(),
                    summary.failures.len() + summary.threads
                )));
            }
        }
        Command::Train { data, variant } => {
            cfg.train.data = data.or(cfg.train.data);
            if let Some(v) = variant {
                cfg.model.variant = v;
            }
            let mut progress = |line: &str| eprintln!("{line}");
            let report = cli::cmd_train(&cfg, Some(&mut progress))?;
            print!("{}", report.to_csv());
        }
        Command::Eval { checkpoint, split } => {
            cfg.eval.checkpoint = checkpoint.or(cfg.eval.checkpoint);
            cfg.eval.split = split.or(cfg.eval.split);
            print!("{}", cli::cmd_eval(&cfg)?.to_csv());
        }
        Command::Explain {
            checkpoint,
            claims,
            heatmap,
        } => {
            cfg.explain.checkpoint = checkpoint.or(cfg.explain.checkpoint);
            if !claims.is_empty() {
                cfg.explain.claims = claims;
            }
            cfg.explain.heatmap |= heatmap;
            for e in cli::cmd_explain(&cfg)? {
                let top: Vec<String> = e.top3.iter().map(|r| format!("{}({})", r.post.post_id, r.votes)).collect();
                println!(
                    "{} predicted={} gold={} important={} top3=[{}]",
                    e.claim_id,
                    e.predicted_label,
                    e.gold_label,
                    e.important_post.post_id,
                    top.join(" ")
                );
            }
        }
        Command::Stats { dirs } => print!("{}", cli::cmd_stats(&cfg, &dirs)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Usage(_)) { 2 } else { 1 })
        }
    }
}
