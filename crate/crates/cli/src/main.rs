//! `qstar`: generate workloads, extract circuit features, simulate, train,
//! evaluate and serve the placement environment.
//!
//! Exit status: 0 on success, 1 when the command finished with warnings
//! (skipped inputs, truncated rounds), 2 on invalid configuration or input.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{RunConfig, TrainerConfig};
use qstar::agents::{DqnConfig, QLearningConfig};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Warnings,
}

#[derive(Parser)]
#[command(
    name = "qstar",
    version,
    about = "Quantum cloud task-placement simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Existing directory for output files.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Trainer {
    Qlearning,
    Dqn,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic task dataset to DIR/dataset.csv.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of subsets (episodes).
        #[arg(long)]
        subsets: Option<usize>,
        /// Tasks per subset.
        #[arg(long)]
        tasks: Option<usize>,
    },
    /// Extract circuit features from QASM files or directories into DIR/features.csv.
    Extract {
        #[command(flatten)]
        common: Common,
        paths: Vec<PathBuf>,
    },
    /// Run a policy over dataset rounds; writes DIR/trace.csv and DIR/stats.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "N")]
        round: Option<usize>,
        /// greedy, random, round_robin, or a policy file.
        #[arg(long, value_name = "PATH")]
        policy: Option<String>,
    },
    /// Train a policy; writes the policy file, DIR/curve.csv and DIR/train.json.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        trainer: Option<Trainer>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Compare policies over full episodes; writes DIR/evaluation.json.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// greedy, random, round_robin, or a policy file; repeatable.
        #[arg(long, value_name = "PATH")]
        policy: Vec<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Serve the environment over the line-JSON protocol.
    ServeEnv {
        #[command(flatten)]
        common: Common,
        #[arg(
            long,
            value_name = "HOST:PORT",
            conflicts_with = "stdio",
            required_unless_present = "stdio"
        )]
        listen: Option<String>,
        #[arg(long)]
        stdio: bool,
    },
}

fn load(common: Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    cfg.apply_common(common.seed, common.out);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Status, CliError> {
    match cli.command {
        Command::Generate {
            common,
            subsets,
            tasks,
        } => {
            let mut cfg = load(common)?;
            if let Some(n) = subsets {
                cfg.generation.n_subsets = n;
            }
            if let Some(n) = tasks {
                cfg.generation.tasks_per_subset = n;
            }
            commands::generate(&cfg)
        }
        Command::Extract { common, paths } => commands::extract(&paths, &load(common)?),
        Command::Simulate {
            common,
            round,
            policy,
        } => {
            let mut cfg = load(common)?;
            if round.is_some() {
                cfg.round = round;
            }
            if let Some(p) = policy {
                cfg.policies = vec![p];
            }
            commands::simulate_cmd(&cfg)
        }
        Command::Train {
            common,
            trainer,
            iterations,
        } => {
            let mut cfg = load(common)?;
            match (trainer, &cfg.trainer) {
                (Some(Trainer::Qlearning), TrainerConfig::Dqn(_)) => {
                    cfg.trainer = TrainerConfig::Qlearning(QLearningConfig::default())
                }
                (Some(Trainer::Dqn), TrainerConfig::Qlearning(_)) => {
                    cfg.trainer = TrainerConfig::Dqn(DqnConfig::default())
                }
                _ => {}
            }
            if let Some(n) = iterations {
                cfg.iterations = n;
            }
            commands::train(&cfg)
        }
        Command::Evaluate {
            common,
            policy,
            episodes,
        } => {
            let mut cfg = load(common)?;
            if !policy.is_empty() {
                cfg.policies = policy;
            }
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            commands::evaluate_cmd(&cfg)
        }
        Command::ServeEnv { common, listen, .. } => {
            commands::serve_env(&load(common)?, listen.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Warnings) => ExitCode::from(1),
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
