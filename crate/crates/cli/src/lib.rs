//! Command-line pipeline around the agent: gather a random walk, estimate
//! beliefs, train the learning system, run and evaluate the agent, and serve
//! the teacher loop.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod metrics;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "manic", version, about = "Model-based agent pipeline")]
pub struct Cli {
    /// JSON config file; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed (the MANIC_SEED variable wins over both).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record a random walk of the configured environment.
    Collect(commands::CollectArgs),
    /// Estimate initial beliefs from a walk.
    Bootstrap(commands::BootstrapArgs),
    /// Train transition, decoder and encoder from estimated beliefs.
    Pretrain(commands::PretrainArgs),
    /// Run the agent for one episode and write its trace.
    Run(commands::RunArgs),
    /// Score rollouts and beliefs of a trained model.
    Eval(commands::EvalArgs),
    /// Serve the teacher ranking API.
    Teach(commands::TeachArgs),
    /// Evolve a contentment model against a state objective.
    Evolve(commands::EvolveArgs),
}

impl Cli {
    /// Loads the config, applies overrides and dispatches.
    pub fn execute(&self) -> CliResult<serde_json::Value> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let cfg = cfg.resolve(std::env::var(config::SEED_ENV).ok().as_deref())?;
        match &self.command {
            Command::Collect(a) => commands::collect(&cfg, a),
            Command::Bootstrap(a) => commands::bootstrap(&cfg, a),
            Command::Pretrain(a) => commands::pretrain_cmd(&cfg, a),
            Command::Run(a) => commands::run(&cfg, a),
            Command::Eval(a) => commands::eval(&cfg, a),
            Command::Teach(a) => commands::teach(&cfg, a),
            Command::Evolve(a) => commands::evolve(&cfg, a),
        }
    }
}
