//! Command implementations behind the `idxsel` binary.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::RunConfig;

/// Exit status for configuration and usage problems.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures while running.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Bad input data (schema, workload, checkpoint shape).
    #[error("{0}")]
    Input(idxsel_core::Error),
    #[error("{0}")]
    Runtime(idxsel_core::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => EXIT_USAGE,
            CliError::Runtime(_) | CliError::Failed(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "idxsel", version, about = "Budgeted index selection with a masked TD3 learner")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a generated schema and workload.
    Gen {
        /// tiny, small or tpch_like.
        #[arg(long)]
        profile: Option<String>,
        /// Number of query templates.
        #[arg(long)]
        templates: Option<usize>,
        /// Number of queries drawn from the templates.
        #[arg(long)]
        queries: Option<usize>,
    },
    /// Print the candidate pool as JSON lines followed by a count line.
    Enumerate {
        /// Maximum index width.
        #[arg(long)]
        w_max: Option<usize>,
    },
    /// Train an agent; writes a checkpoint, the trace CSV and a run manifest.
    Train {
        #[arg(long)]
        episodes: Option<usize>,
        /// Continue from an existing checkpoint with the same pool size.
        #[arg(long)]
        init_from: Option<PathBuf>,
    },
    /// Roll out a checkpoint without exploration and print the result.
    Evaluate {
        /// Defaults to `<out>/checkpoint`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Storage budget in units of 128 MiB.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Run methods over budgets, instances and episode counts; prints CSV.
    Compare,
    /// Finite-difference check of every agent network.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, hide = true)]
        corrupt: Option<CorruptActivation>,
    },
    /// Serve the analytic cost model over the external protocol on stdio.
    #[command(hide = true)]
    CostServer {
        #[arg(long)]
        fault: Option<Fault>,
        /// Number of evaluate requests answered correctly before the fault.
        #[arg(long, default_value_t = 0)]
        fault_after: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorruptActivation {
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Answer with a line that is not JSON.
    Malformed,
    /// Answer with a report whose total disagrees with its per-query costs.
    Invariant,
    /// Stop answering.
    Hang,
}

/// Loads the configuration and applies the global flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Gen {
            profile,
            templates,
            queries,
        } => {
            let mut cfg = cfg;
            if let Some(p) = profile {
                cfg.profile = p;
            }
            cfg.templates = templates.unwrap_or(cfg.templates);
            cfg.queries = queries.unwrap_or(cfg.queries);
            cfg.validate()?;
            commands::gen(&cfg, &mut out)
        }
        Command::Enumerate { w_max } => {
            let mut cfg = cfg;
            cfg.w_max = w_max.unwrap_or(cfg.w_max);
            cfg.validate()?;
            commands::enumerate(&cfg, &mut out)
        }
        Command::Train {
            episodes,
            init_from,
        } => {
            let mut cfg = cfg;
            cfg.episodes = episodes.unwrap_or(cfg.episodes);
            commands::train(&cfg, init_from.as_deref(), &mut out)
        }
        Command::Evaluate { checkpoint, budget } => {
            commands::evaluate(&cfg, checkpoint.as_deref(), budget, &mut out)
        }
        Command::Compare => commands::compare(&cfg, &mut out),
        Command::Gradcheck { seeds, corrupt } => commands::gradcheck(&cfg, seeds, corrupt, &mut out),
        Command::CostServer { fault, fault_after } => {
            let stdin = std::io::stdin().lock();
            commands::cost_server(&cfg, fault, fault_after, stdin, &mut out)
        }
    }
}
