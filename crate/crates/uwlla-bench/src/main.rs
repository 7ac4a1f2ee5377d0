use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use uwlla_bench::{config::ExperimentConfig, curves, experiment};

#[derive(Parser)]
#[command(
    name = "uwlla-bench",
    about = "Corruption-sweep experiment driver for robust weighted-regression classification",
    version
)]
struct Cli {
    /// Worker threads for evaluation: 0 = one per core, 1 = sequential.
    /// Overrides the config's [run].workers.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replace a non-empty output directory instead of refusing to run.
    #[arg(long, global = true)]
    overwrite: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the corruption sweep described by a TOML config file.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
    },
    /// Write the rank-surrogate comparison table (sigma 0..6, step 0.05).
    RankCurves {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the kernel-density table over residuals in [-3, 3].
    WeightCurves {
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic PGM dataset with a manifest and example config.
    DemoSynthetic {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let mut experiment_config = ExperimentConfig::from_path(&config)?;
            if let Some(workers) = cli.workers {
                experiment_config.run.workers = workers;
            }
            for (w, r) in experiment_config.variants() {
                let solver_config = experiment_config.solver_config(w, r)?;
                for note in solver_config.conformance_notes() {
                    eprintln!("note [{}]: {note}", uwlla_bench::variant_name(w, r));
                }
            }
            experiment::run_experiment(&experiment_config, cli.overwrite)?;
        }
        Command::RankCurves { out } => {
            curves::emit_rank_curves(&curves::default_sigma_grid(), &out)?;
        }
        Command::WeightCurves { out } => {
            curves::emit_weight_curves(&curves::density_params(), &out)?;
        }
        Command::DemoSynthetic { seed, out } => {
            experiment::demo_synthetic(seed, &out, cli.overwrite)?;
        }
    }
    Ok(())
}
