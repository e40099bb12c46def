//! Single runs and validation.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use reasoning_agent_core::env::bellman_residual;
use reasoning_agent_core::{solve_ground_truth, Simulation};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::{BeliefSnapshot, Summary, TrajectoryWriter};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

/// Run `config` and write its outputs into `dir`.
///
/// Trajectory rows are streamed as periods complete, so a run that fails
/// midway leaves the rows it finished.
pub fn run_into(config: &RunConfig, dir: &Path) -> Result<Summary, CliError> {
    let prepared = config.prepare()?;
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let snapshot_dir = dir.join(SNAPSHOT_DIR);
    if prepared.snapshot_every > 0 {
        fs::create_dir_all(&snapshot_dir).map_err(CliError::io(&snapshot_dir))?;
    }

    let trajectory_path = dir.join(TRAJECTORY_FILE);
    let file = File::create(&trajectory_path).map_err(CliError::io(&trajectory_path))?;
    let csv_error = |e: csv::Error| CliError::Io {
        path: trajectory_path.clone(),
        source: e.into(),
    };
    let mut trajectory = TrajectoryWriter::new(BufWriter::new(file)).map_err(csv_error)?;

    let mut sim = Simulation::new(&prepared.mdp, prepared.agent.clone())?;
    let mut records = Vec::with_capacity(prepared.agent.horizon);
    for _ in 0..prepared.agent.horizon {
        let record = match sim.run_period() {
            Ok(r) => r,
            Err(e) => {
                trajectory.finish().map_err(CliError::io(&trajectory_path))?;
                return Err(e.into());
            }
        };
        trajectory.write(&record).map_err(csv_error)?;
        let belief = sim.belief();
        if prepared.snapshot_every > 0 && belief.period % prepared.snapshot_every as u64 == 0 {
            let path = snapshot_dir.join(format!("belief_{:06}.json", belief.period));
            write_json(&path, &BeliefSnapshot::from(belief))?;
        }
        records.push(record);
    }
    trajectory.finish().map_err(CliError::io(&trajectory_path))?;

    let summary = Summary::from_records(&records);
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// `agent run`: returns the output directory on success.
pub fn cmd_run(config_path: &Path) -> Result<std::path::PathBuf, CliError> {
    let (config, _) = RunConfig::load(config_path)?;
    let dir = config.output_dir();
    run_into(&config, &dir)?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub n_states: usize,
    pub n_actions: usize,
    pub bellman_residual: f64,
    pub value_iterations: usize,
}

/// `agent validate`: schema and invariant checks plus the ground-truth solve.
pub fn cmd_validate(config_path: &Path) -> Result<Validation, CliError> {
    let (config, _) = RunConfig::load(config_path)?;
    let prepared = config.prepare()?;
    let mdp = &prepared.mdp;
    let truth = solve_ground_truth(
        mdp,
        prepared.agent.ground_truth_tol,
        prepared.agent.ground_truth_max_iter,
    )?;
    Ok(Validation {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        bellman_residual: bellman_residual(mdp, &truth.q_star),
        value_iterations: truth.iterations,
    })
}
