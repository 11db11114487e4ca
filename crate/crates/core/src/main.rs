use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use matchvoice::cli::{self, CliError, PipelineConfig};
use matchvoice::dataset::Split;
use matchvoice::prosody;

#[derive(Debug, Parser)]
#[command(name = "matchvoice", version, about = "Win/lose prediction from post-match interview speech")]
struct Args {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subset {
    Train,
    Validation,
    Test,
}

impl From<Subset> for Split {
    fn from(s: Subset) -> Self {
        match s {
            Subset::Train => Split::Train,
            Subset::Validation => Split::Validation,
            Subset::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment recordings and export the athlete's turns.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute prosodic features for extracted segments.
    Features {
        /// Print the feature names and exit.
        #[arg(long)]
        schema: bool,
        #[arg(long, required_unless_present = "schema")]
        manifest: Option<PathBuf>,
        #[arg(long, required_unless_present = "schema")]
        segments: Option<PathBuf>,
        #[arg(long, required_unless_present = "schema")]
        out: Option<PathBuf>,
    },
    /// Mean-pool precomputed embeddings per recording.
    Pool {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Speaker-disjoint train/validation/test split.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the classifier.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report ACC, PRC, RCL and F1 on one split.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        subset: Subset,
    },
    /// Shapley attributions and the feature ranking.
    Explain {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        subset: Subset,
        /// Defaults to `explain.top_k`.
        #[arg(long)]
        topk: Option<usize>,
    },
}

fn run(args: Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_overrides(&args.overrides)?;
    cfg.validate()?;
    match args.command {
        Command::Extract { manifest, out } => {
            let s = cli::cmd_extract(&manifest, &out, &cfg)?;
            println!("{} extracted, {} without speech, {} failed", s.ok, s.no_speech, s.failed);
        }
        Command::Features {
            schema,
            manifest,
            segments,
            out,
        } => {
            if schema {
                for name in prosody::schema() {
                    println!("{name}");
                }
                return Ok(());
            }
            let (Some(manifest), Some(segments), Some(out)) = (manifest, segments, out) else {
                return Err(CliError::Usage("--manifest, --segments and --out are required".into()));
            };
            let rows = cli::cmd_features(&manifest, &segments, &out)?;
            println!("{} segment feature rows", rows.len());
        }
        Command::Pool { manifest, out } => {
            let rows = cli::cmd_pool(&manifest, &out)?;
            println!("{} recordings pooled", rows.len());
        }
        Command::Split { manifest, out } => {
            let a = cli::cmd_split(&manifest, &out, &cfg)?;
            for split in Split::ALL {
                println!("{split}: {}", a.values().filter(|&&s| s == split).count());
            }
        }
        Command::Train { features, split, out } => {
            let t = cli::cmd_train(&features, &split, &out, &cfg)?;
            println!("best epoch {}", t.history.best_epoch);
        }
        Command::Eval {
            features,
            split,
            model,
            subset,
        } => {
            println!("{}", cli::cmd_eval(&features, &split, &model, subset.into())?);
        }
        Command::Explain {
            features,
            split,
            model,
            out,
            subset,
            topk,
        } => {
            let top_k = topk.unwrap_or(cfg.explain_top_k);
            let e = cli::cmd_explain(&features, &split, &model, &out, subset.into(), top_k, &cfg)?;
            print!("{}", cli::format_ranking(&e.ranking));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
