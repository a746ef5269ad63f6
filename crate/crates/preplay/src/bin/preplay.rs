//! Experiment CLI: run presets, sweep transfer curves, emit plot data,
//! validate configs, and round-trip maze files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use preplay::gridworld::{parse_maze, render_maze};
use preplay::harness::{
    emit_plots, load_summary, run_experiment, transfer_sweep, ExperimentConfig, HarnessError,
};

#[derive(Parser)]
#[command(name = "preplay", version, about = "Goal-conditioned tabular RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment preset end to end (train, evaluate, summarize).
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a fixed-budget transfer sweep over the preset's seed counts.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Emit plot-data files from one or more run summaries.
    Plot {
        summaries: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Check a config file and its environment without running it.
    Validate { config: PathBuf },
    /// Parse a maze file and print its canonical rendering.
    RenderMaze { file: PathBuf },
}

#[derive(clap::Args)]
struct Common {
    /// Override the preset's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Force the fixed single-threaded interleaving and zero wall-clock
    /// fields, making record streams byte-identical across repeats.
    #[arg(long)]
    deterministic: bool,
    /// Override the preset's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_with_overrides(config: &PathBuf, common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = common.seed {
        cfg.run.base_seed = seed;
    }
    if common.deterministic {
        cfg.run.deterministic = true;
    }
    if let Some(out) = &common.out {
        cfg.run.out_dir = out.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, common } => {
            let cfg = load_with_overrides(&config, &common)?;
            let out = run_experiment(&cfg)?;
            println!(
                "{}: agent {:?}, success {:.3}, reuse {}",
                cfg.name,
                cfg.agent.kind,
                out.summary.success_rate,
                out.summary
                    .reuse_rate
                    .map_or("na".to_string(), |r| format!("{r:.3}")),
            );
            if let Some(mean) = out.summary.mean_return {
                println!(
                    "held-out return: {:.3} +/- {:.3}",
                    mean,
                    out.summary.return_stderr.unwrap_or(0.0)
                );
            }
            println!("records: {}", out.records_path.display());
            println!("summary: {}", out.summary_path.display());
            Ok(())
        }
        Command::Sweep { config, common } => {
            let cfg = load_with_overrides(&config, &common)?;
            let sweep = transfer_sweep(&cfg)?;
            for p in &sweep.points {
                println!(
                    "{:?} @ {} train seeds: {:.3} +/- {:.3}",
                    p.agent, p.n_train_seeds, p.mean_return, p.stderr
                );
            }
            println!("summary: {}", cfg.run.out_dir.join("sweep_summary.toml").display());
            Ok(())
        }
        Command::Plot { summaries, out } => {
            if summaries.is_empty() {
                return Err(HarnessError::invalid("summaries", "need at least one file"));
            }
            let loaded: Result<Vec<_>, _> = summaries.iter().map(|p| load_summary(p)).collect();
            let files = emit_plots(&loaded?, &out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("ok: {} ({:?})", cfg.name, cfg.agent.kind);
            Ok(())
        }
        Command::RenderMaze { file } => {
            let text = std::fs::read_to_string(&file)
                .map_err(|e| HarnessError::EnvironmentLoadFailed(format!("{}: {e}", file.display())))?;
            let maze = parse_maze(&text)
                .map_err(|e| HarnessError::EnvironmentLoadFailed(e.to_string()))?;
            print!("{}", render_maze(&maze));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
