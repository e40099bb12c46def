use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reasoning_agent::error::EXIT_SCHEMA;
use reasoning_agent::{run, sweep};

/// Simulate a Bayesian Q-learning agent that pays for reasoning.
///
/// Set AGENT_OUTPUT_DIR to override the output directory of `run` and the
/// root directory of `sweep`.
#[derive(Parser)]
#[command(name = "agent", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write trajectory.csv and summary.json.
    Run { config: PathBuf },
    /// Run the Cartesian product of a sweep specification.
    Sweep {
        spec: PathBuf,
        /// Concurrent cells; 0 uses one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Check a configuration and solve its ground truth without simulating.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_SCHEMA)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Run { config } => run::cmd_run(&config).map(|dir| println!("wrote {}", dir.display())),
        Command::Sweep { spec, jobs } => sweep::cmd_sweep(&spec, jobs).map(|dir| println!("wrote {}", dir.display())),
        Command::Validate { config } => run::cmd_validate(&config).map(|v| {
            println!("n_states: {}", v.n_states);
            println!("n_actions: {}", v.n_actions);
            println!("bellman_residual: {:e}", v.bellman_residual);
            println!("value_iterations: {}", v.value_iterations);
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
