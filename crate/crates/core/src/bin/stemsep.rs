//! Command-line front end. Every command reads one `key = value` config
//! file (defaults apply when omitted), prints a short summary on success,
//! and fails with a one-line diagnostic and a nonzero exit code.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use stemsep::commands;
use stemsep::config::ExperimentConfig;
use stemsep::training::LOSS_LOG_FILE;

#[derive(Parser)]
#[command(
    name = "stemsep",
    version,
    about = "Semi-supervised adversarial source separation on a synthetic corpus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the toy corpus (WAVs plus manifest) under data.root.
    Generate(ConfigArg),
    /// Train a run; resumes when its directory already holds checkpoints.
    Train(ConfigArg),
    /// Score a checkpoint on the held-out paired tracks.
    Evaluate(ConfigArg),
    /// Render a source estimate next to the critic's input-gradient heatmap.
    Visualize(ConfigArg),
    /// Merge evaluated runs into one metric-by-mode comparison.
    Report(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    /// Path to a `key = value` config file; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> stemsep::Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> stemsep::Result<()> {
    match cli.command {
        Command::Generate(arg) => {
            let root = commands::cmd_generate(&arg.load()?)?;
            println!("corpus written to {}", root.display());
        }
        Command::Train(arg) => {
            let cfg = arg.load()?;
            println!(
                "training {} (follow {})",
                cfg.run_dir().display(),
                cfg.run_dir().join(LOSS_LOG_FILE).display()
            );
            let s = commands::cmd_train(&cfg)?;
            if let Some(epoch) = s.resumed_at {
                println!("resumed from epoch {epoch}");
            }
            println!(
                "finished after epoch {}; best epoch {} (validation loss {:.6})",
                s.final_epoch, s.best_epoch, s.best_validation
            );
        }
        Command::Evaluate(arg) => {
            let s = commands::cmd_evaluate(&arg.load()?)?;
            print!("{}", s.report.means_table());
            println!("written to {}", s.out_dir.display());
        }
        Command::Visualize(arg) => {
            let dir = commands::cmd_visualize(&arg.load()?)?;
            println!("heatmaps written to {}", dir.display());
        }
        Command::Report(arg) => {
            let s = commands::cmd_report(&arg.load()?)?;
            print!("{}", s.table);
            println!("written to {}", s.out_dir.display());
        }
    }
    Ok(())
}
