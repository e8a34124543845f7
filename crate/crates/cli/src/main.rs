use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stdgi_cli::{
    cmd_compare, cmd_embed, cmd_eval, cmd_pretrain, cmd_synth, cmd_train, exit_code, ExperimentConfig,
};
use stdgi_core::{Error, Mode, Result};

/// Spatio-temporal graph infomax embeddings and LSTM traffic forecasting.
#[derive(Parser)]
#[command(name = "stdgi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON). Missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Restrict `train`/`eval` to one mode; both run by default.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the effective config and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic dataset and its graph.
    Synth,
    /// Train the encoder and discriminators.
    Pretrain,
    /// Export embeddings and their 2-D projection.
    Embed,
    /// Train the forecaster.
    Train,
    /// Score the forecaster on the test split.
    Eval,
    /// Compare baseline and stdgi reports across seeds.
    Compare,
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    if cli.print_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let modes = match &cli.mode {
        Some(m) => vec![m.parse::<Mode>()?],
        None => vec![Mode::Baseline, Mode::Stdgi],
    };
    match cli.command {
        Command::Synth => {
            let s = cmd_synth(&cfg)?;
            println!(
                "synthetic dataset: N = {}, T = {}, alpha = {}, {} edges -> {}",
                s.nodes,
                s.steps,
                s.alpha,
                s.edges,
                s.features.display()
            );
        }
        Command::Pretrain => {
            for &seed in &cfg.seeds {
                let h = cmd_pretrain(&cfg, seed)?;
                println!(
                    "seed {seed}: loss {:.4} -> {:.4}, held-out accuracy {:.4} -> {:.4}",
                    h.initial_loss,
                    h.final_loss().unwrap_or(f64::NAN),
                    h.initial_accuracy.unwrap_or(f64::NAN),
                    h.final_accuracy().unwrap_or(f64::NAN)
                );
            }
        }
        Command::Embed => {
            for &seed in &cfg.seeds {
                let s = cmd_embed(&cfg, seed)?;
                println!("seed {seed}: embeddings {:?}, {} projected points", s.dims, s.pca_rows);
            }
        }
        Command::Train => {
            for &seed in &cfg.seeds {
                for &mode in &modes {
                    let s = cmd_train(&cfg, seed, mode)?;
                    println!(
                        "seed {seed} {mode}: input dim {}, val MAE {:.4} -> {:.4} (best epoch {})",
                        s.input_dim, s.initial_val_mae, s.best_val_mae, s.best_epoch
                    );
                }
            }
        }
        Command::Eval => {
            for &seed in &cfg.seeds {
                for &mode in &modes {
                    let r = cmd_eval(&cfg, seed, mode)?;
                    println!("{}", serde_json::to_string(&r).map_err(Error::from)?);
                }
            }
        }
        Command::Compare => {
            let (_, table) = cmd_compare(&cfg)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
