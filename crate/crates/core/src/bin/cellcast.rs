use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cellcast::experiment::{self as ex, ExperimentConfig, ExperimentKind, RunOptions, Scheme};
use cellcast::Result;

#[derive(Parser)]
#[command(
    name = "cellcast",
    version,
    about = "Cellular traffic forecasting with meta-learning and conformal intervals"
)]
struct Cli {
    /// Master seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent experiment points.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Icp,
    Ccp,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Point,
    Ablation,
    RatioSweep,
    IntervalSweep,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated traffic, events, image and cell positions as CSV.
    Simulate,
    /// Meta-train on simulated auxiliary tasks and save a checkpoint.
    TrainMeta,
    /// Fine-tune a checkpoint on the target training windows.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Predict the target test windows with a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output CSV; defaults to `<out>/predictions.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Calibrate intervals from a meta-trained checkpoint.
    Conformal {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "alpha", required = true)]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, value_enum, default_value = "ccp")]
        scheme: SchemeArg,
        /// Split each level across cells.
        #[arg(long)]
        bonferroni: bool,
    },
    /// Score a `t,cell_id,yhat` file against the target test truth.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Run a full experiment from the config.
    Experiment {
        /// Overrides `kind` in the config file.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    match cli.command {
        Command::Simulate => {
            for p in ex::simulate_to_dir(&cfg, &out)? {
                println!("{}", p.display());
            }
        }
        Command::TrainMeta => println!("{}", ex::train_meta_to_dir(&cfg, &out)?.display()),
        Command::Finetune { checkpoint } => println!("{}", ex::finetune_to_dir(&cfg, &checkpoint, &out)?.display()),
        Command::Predict { checkpoint, output } => {
            let path = output.unwrap_or_else(|| out.join("predictions.csv"));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| cellcast::Error::io(dir, e))?;
            }
            ex::predict_to_file(&cfg, &checkpoint, &path)?;
            println!("{}", path.display());
        }
        Command::Conformal {
            checkpoint,
            alphas,
            folds,
            scheme,
            bonferroni,
        } => {
            let scheme = match scheme {
                SchemeArg::Icp => Scheme::Icp,
                SchemeArg::Ccp => Scheme::Ccp,
            };
            for m in ex::conformal_to_dir(&cfg, &checkpoint, scheme, folds, &alphas, bonferroni, &out)? {
                println!("{}", serde_json::to_string(&m)?);
            }
        }
        Command::Evaluate { predictions } => {
            println!(
                "{}",
                serde_json::to_string_pretty(&ex::evaluate_file(&cfg, &predictions)?)?
            );
        }
        Command::Experiment { kind } => {
            if let Some(k) = kind {
                cfg.kind = match k {
                    KindArg::Point => ExperimentKind::Point,
                    KindArg::Ablation => ExperimentKind::Ablation,
                    KindArg::RatioSweep => ExperimentKind::RatioSweep,
                    KindArg::IntervalSweep => ExperimentKind::IntervalSweep,
                };
            }
            let opts = RunOptions {
                out_dir: Some(out),
                jobs: cli.jobs,
            };
            let summary = ex::run_experiment(&cfg, &opts)?;
            println!("{}", summary.report_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
