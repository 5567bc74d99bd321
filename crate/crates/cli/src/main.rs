//! Command-line front end over the experiment harness.
//!
//! Single runs print their metrics JSON to stdout; sweeps echo their result
//! CSV. When any sweep row fails, a `failures.json` manifest lands next to
//! the table and the process exits nonzero.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coco_imc::data::read_labels;
use coco_imc::evaluate::{build_common_representation, pca_2d, score};
use coco_imc::experiment::{self, AblationRow, ExperimentConfig, SweepRow};
use coco_imc::networks::load_checkpoint;

#[derive(Parser)]
#[command(
    name = "coco-imc",
    version,
    about = "Incomplete two-view clustering: train, sweep, ablate, score"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its artifact set.
    Run(ConfigArgs),
    /// Ten runs over missing rates 0.0..=0.9; writes sweep_missing.csv.
    SweepMissing(ConfigArgs),
    /// Runs over the momentum grid; writes sweep_momentum.csv.
    SweepMomentum(ConfigArgs),
    /// Eleven runs toggling loss terms; writes ablation.csv.
    Ablate(ConfigArgs),
    /// Project a finished run's representation to 2-D from its checkpoint.
    ExportEmbedding(ConfigArgs),
    /// Compare two label files and print ACC/NMI/ARI as JSON.
    Score {
        /// Predicted labels, one integer per line.
        predicted: PathBuf,
        /// Ground-truth labels, one integer per line.
        truth: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (TOML); defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the training seed from the config.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Maximum concurrent runs within a sweep.
    #[arg(long, value_name = "INT", default_value_t = 1)]
    jobs: usize,
    /// Override the output directory from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn materialize(&self) -> Result<ExperimentConfig> {
        if self.jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(serde::Serialize)]
struct Failure {
    run: String,
    error: String,
}

fn main() -> ExitCode {
    let env = env_logger::Env::default().filter_or("COCO_IMC_LOG", "info");
    env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.materialize()?;
            let art = experiment::run(&cfg)?;
            if let Some(metrics) = art.metrics {
                println!("{}", serde_json::to_string_pretty(&metrics)?);
            } else {
                log::info!("no ground-truth labels; skipping scoring");
            }
            log::info!("artifacts in {}", art.out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepMissing(args) => {
            let cfg = args.materialize()?;
            let rows = experiment::sweep_missing(&cfg, args.jobs)?;
            let failures = sweep_failures(&rows, experiment::missing_run_tag);
            finish_table(&cfg, "sweep_missing.csv", failures)
        }
        Command::SweepMomentum(args) => {
            let cfg = args.materialize()?;
            let rows = experiment::sweep_momentum(&cfg, None, args.jobs)?;
            let failures = sweep_failures(&rows, experiment::momentum_run_tag);
            finish_table(&cfg, "sweep_momentum.csv", failures)
        }
        Command::Ablate(args) => {
            let cfg = args.materialize()?;
            let rows = experiment::ablation(&cfg, args.jobs)?;
            let failures = ablation_failures(&rows);
            finish_table(&cfg, "ablation.csv", failures)
        }
        Command::ExportEmbedding(args) => {
            let cfg = args.materialize()?;
            export_embedding(&cfg)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Score { predicted, truth } => {
            let pred = read_labels(&predicted)?;
            let truth = read_labels(&truth)?;
            let report = score(&pred, &truth)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn sweep_failures(rows: &[SweepRow], tag: impl Fn(f64) -> String) -> Vec<Failure> {
    rows.iter()
        .filter_map(|row| {
            row.error.as_ref().map(|e| Failure {
                run: tag(row.factor),
                error: e.clone(),
            })
        })
        .collect()
}

fn ablation_failures(rows: &[AblationRow]) -> Vec<Failure> {
    rows.iter()
        .filter_map(|row| {
            row.error.as_ref().map(|e| Failure {
                run: experiment::ablation_run_tag(row.index),
                error: e.clone(),
            })
        })
        .collect()
}

/// Echoes the finished table to stdout; on any per-row failure also writes
/// `failures.json` beside it and signals failure through the exit code.
fn finish_table(cfg: &ExperimentConfig, file: &str, failures: Vec<Failure>) -> Result<ExitCode> {
    let dir = cfg.out_dir();
    let table = dir.join(file);
    print!(
        "{}",
        fs::read_to_string(&table).with_context(|| format!("reading {}", table.display()))?
    );
    if failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    let manifest = dir.join("failures.json");
    fs::write(&manifest, serde_json::to_string_pretty(&failures)? + "\n")
        .with_context(|| format!("writing {}", manifest.display()))?;
    log::error!(
        "{} of the runs failed; see {}",
        failures.len(),
        manifest.display()
    );
    Ok(ExitCode::FAILURE)
}

/// Reloads a run's checkpoint, rebuilds the common representation on the
/// config's dataset, and writes its 2-D projection as CSV.
fn export_embedding(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.out_dir();
    let ckpt = dir.join("checkpoint.bin");
    if !ckpt.exists() {
        bail!(
            "no checkpoint at {}; `coco-imc run` must finish first",
            ckpt.display()
        );
    }
    let bundle = load_checkpoint(&ckpt)?;
    let ds = experiment::load_dataset(cfg)?;
    let z = build_common_representation(&bundle, &ds)?;
    let out = dir.join("embedding_export.csv");
    coco_imc::data::write_view_csv(&out, &pca_2d(&z)?)?;
    println!("{}", out.display());
    Ok(())
}
