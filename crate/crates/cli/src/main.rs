//! `ppanel`: clean-control policy evaluation from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "ppanel",
    version,
    about = "Bias-aware evaluation of overlapping environmental markets"
)]
struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Summary statistics of a prepared panel
    Describe(Args),
    /// Region groups per period and the eight clean designs
    Partition {
        /// Period index 0..5; all periods when absent
        #[arg(long)]
        period: Option<u8>,
        #[command(flatten)]
        args: Args,
    },
    /// TWFE difference-in-differences
    Did(Args),
    /// Event-study leads and lags
    Eventstudy(Args),
    /// Group-time ATTs and their aggregates
    Csdid(Args),
    /// Artificial counterfactual with control averages
    Arco(Args),
    /// Generate a synthetic panel
    Simulate(SimArgs),
    /// Monte Carlo bias demonstrations
    DemoBias {
        #[arg(long, value_enum, default_value_t = Scenario::Staggered)]
        scenario: Scenario,
        /// Replications
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// All eight panels and the static designs through DiD and ArCo
    ReplicateAll {
        /// Simulated panel preset used when no --data is given
        #[arg(long, default_value = "replication")]
        preset: String,
        #[command(flatten)]
        args: Args,
    },
}

#[derive(clap::Args, Debug, Clone)]
struct Args {
    #[command(flatten)]
    run: RunConfig,
}

#[derive(clap::Args, Debug, Clone)]
struct SimArgs {
    /// Shipped configuration name
    #[arg(long)]
    preset: Option<String>,
    /// DGP configuration file (TOML or JSON)
    #[arg(long)]
    dgp: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Scenario {
    Staggered,
    Contamination,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}

fn merged(file: &Option<PathBuf>, flags: &RunConfig) -> policy_panel::Result<RunConfig> {
    let base = match file {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.overlay(flags);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> policy_panel::Result<()> {
    let file = &cli.config;
    match cli.command {
        Command::Describe(a) => commands::describe(&merged(file, &a.run)?),
        Command::Partition { period, args } => commands::partition(&merged(file, &args.run)?, period),
        Command::Did(a) => commands::estimate(&merged(file, &a.run)?, policy_panel::pipeline::Estimator::Did),
        Command::Eventstudy(a) => {
            commands::estimate(&merged(file, &a.run)?, policy_panel::pipeline::Estimator::EventStudy)
        }
        Command::Csdid(a) => commands::estimate(&merged(file, &a.run)?, policy_panel::pipeline::Estimator::Csdid),
        Command::Arco(a) => commands::estimate(&merged(file, &a.run)?, policy_panel::pipeline::Estimator::Arco),
        Command::Simulate(s) => {
            let cfg = merged(file, &s.run)?;
            commands::simulate(
                &cfg,
                &commands::load_dgp(s.preset.as_deref(), s.dgp.as_deref(), &cfg, "placebo")?,
            )
        }
        Command::DemoBias { scenario, reps, sim } => {
            let cfg = merged(file, &sim.run)?;
            let default = match scenario {
                Scenario::Staggered => "staggered_bias",
                Scenario::Contamination => "contamination",
            };
            let dgp = commands::load_dgp(sim.preset.as_deref(), sim.dgp.as_deref(), &cfg, default)?;
            commands::demo_bias(&cfg, &dgp, scenario == Scenario::Contamination, reps)
        }
        Command::ReplicateAll { preset, args } => commands::replicate_all(&merged(file, &args.run)?, &preset),
    }
}
