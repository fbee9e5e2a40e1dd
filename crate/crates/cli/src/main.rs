//! Batch entry point: dataset generation, training, rollout, evaluation,
//! and ablation sweeps, driven by one TOML experiment config.
//!
//! Exit codes: 0 success, 1 validation failure, 2 numerical failure.
//! Thread count follows `RAYON_NUM_THREADS`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use patchflow_core::config::ExperimentConfig;
use patchflow_core::pipeline::Pipeline;
use patchflow_core::Error;

#[derive(Parser)]
#[command(name = "patchflow", version, about = "Subdomain latent surrogates for transient PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/test dataset containers and a manifest.
    Generate(Common),
    /// Train one autoencoder per field.
    TrainAe {
        #[command(flatten)]
        common: Common,
        /// Continue from the saved checkpoint and loss curve.
        #[arg(long)]
        resume: bool,
    },
    /// Train the latent time integrator (autoencoders must exist).
    TrainTi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resume: bool,
    },
    /// Roll out every test sample and write prediction containers.
    Rollout(Common),
    /// Score predictions against ground truth (nRMSE + persistence).
    Eval(Common),
    /// Run the configured ablation axis end to end.
    Sweep(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Generate(c) | Command::Rollout(c) | Command::Eval(c) | Command::Sweep(c) => c,
            Command::TrainAe { common, .. } | Command::TrainTi { common, .. } => common,
        }
    }
}

fn build_pipeline(common: &Common) -> Result<Pipeline, Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::invalid("no output directory: set `out` in the config or pass --out"))?;
    Pipeline::new(cfg, out)
}

fn run(cli: Cli) -> Result<(), Error> {
    let pipeline = build_pipeline(cli.command.common())?;
    match cli.command {
        Command::Generate(_) => {
            let (train, test) = pipeline.generate()?;
            println!(
                "generated {train} train + {test} test samples into {}",
                pipeline.data_dir().display()
            );
        }
        Command::TrainAe { resume, .. } => {
            for (field, report) in pipeline.train_ae(resume)? {
                let last = report.epochs.last();
                println!(
                    "ae `{field}`: {} epochs, best val {:.3e} at epoch {}, final train {:.3e}",
                    report.epochs.len(),
                    report.best_val,
                    report.best_epoch,
                    last.map(|e| e.train_loss).unwrap_or(f64::NAN),
                );
            }
        }
        Command::TrainTi { resume, .. } => {
            let report = pipeline.train_ti(resume)?;
            println!(
                "ti: {} epochs, best val {:.3e} at epoch {}",
                report.epochs.len(),
                report.best_val,
                report.best_epoch
            );
        }
        Command::Rollout(_) => {
            let n = pipeline.rollout()?;
            println!("rolled out {n} test samples into {}", pipeline.out.join("pred").display());
        }
        Command::Eval(_) => {
            let s = pipeline.eval()?;
            println!("aggregate nRMSE {:.6e}  |  persistence baseline {:.6e}", s.model.aggregate, s.baseline.aggregate);
            for (i, (m, b)) in s.model.per_sample.iter().zip(&s.baseline.per_sample).enumerate() {
                println!("  sample {i}: model {m:.6e}  baseline {b:.6e}");
            }
            for w in &s.model.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Sweep(_) => {
            for (value, model, baseline) in pipeline.sweep()? {
                println!("{value}: nRMSE {model:.6e}  baseline {baseline:.6e}");
            }
            println!("comparison written to {}", pipeline.out.join("sweep/sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
