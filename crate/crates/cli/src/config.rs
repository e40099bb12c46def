//! Run configuration: a single JSON document with `"schema_version": 1`.
//!
//! Parsing happens in two stages. [`RunConfig::from_value`] checks the shape
//! of the document (unknown fields are rejected), then [`RunConfig::prepare`]
//! turns it into an [`MdpSpec`] and an [`AgentConfig`], running every model
//! invariant check. Failures at either stage are schema violations.

use std::path::{Path, PathBuf};

use reasoning_agent_core::{
    make_bandit, make_consumption_savings, make_gridworld, AgentConfig, BeliefState, ConsumptionSavings, Grid,
    KernelSpec, MdpSpec, MeanReading, SolverConfig, StateMetric,
};
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;
use crate::formats::MdpDocument;

pub const SCHEMA_VERSION: u32 = 1;

/// Default output directory when neither the config nor `AGENT_OUTPUT_DIR` names one.
pub const DEFAULT_OUTPUT_DIR: &str = "agent-output";

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "AGENT_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub horizon: usize,
    pub environment: EnvironmentConfig,
    pub kernel: KernelConfig,
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub experience_noise_var: f64,
    /// Discount inside the experience signal; defaults to the environment's.
    #[serde(default)]
    pub agent_beta: Option<f64>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub ground_truth: GroundTruthSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    Bandit {
        means: Vec<f64>,
        #[serde(default)]
        noise_sd: f64,
        beta: f64,
    },
    Gridworld {
        width: usize,
        height: usize,
        goal: usize,
        step_cost: f64,
        beta: f64,
    },
    ConsumptionSavings {
        asset_grid_size: usize,
        asset_max: f64,
        income_values: Vec<f64>,
        income_transition: Vec<Vec<f64>>,
        crra_sigma: f64,
        rate: f64,
        beta: f64,
    },
    Mdp(MdpDocument),
}

/// A length scale that may be infinite (`"inf"` in JSON).
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum LengthScale {
    Finite(f64),
    Named(InfiniteTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum InfiniteTag {
    #[serde(rename = "inf")]
    Inf,
}

impl LengthScale {
    fn value(self) -> f64 {
        match self {
            LengthScale::Finite(v) => v,
            LengthScale::Named(InfiniteTag::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub state_length_scale: LengthScale,
    #[serde(default)]
    pub action_coupling: f64,
    pub prior_variance: f64,
    #[serde(default)]
    pub prior_mean: f64,
    #[serde(default)]
    pub state_metric: MetricConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricConfig {
    #[default]
    Index,
    /// One coordinate vector per state.
    Coordinates { coords: Vec<Vec<f64>> },
    /// Euclidean distance between gridworld cells; gridworld environments only.
    GridCoordinates,
    /// Full `n_states × n_states` distance table.
    Table { distances: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kappa: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default)]
    pub costless_reasoning: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub delta_max: f64,
    pub max_iter: usize,
    pub mean_reading: MeanReadingConfig,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            delta_max: d.delta_max,
            max_iter: d.max_iter,
            mean_reading: MeanReadingConfig::Realized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanReadingConfig {
    #[default]
    Realized,
    PreReasoning,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundTruthSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GroundTruthSection {
    fn default() -> Self {
        let d = AgentConfig::default();
        Self {
            tol: d.ground_truth_tol,
            max_iter: d.ground_truth_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Write a belief snapshot every this many periods; 0 disables snapshots.
    pub snapshot_every: usize,
}

/// Everything a run needs, fully validated.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mdp: MdpSpec,
    pub agent: AgentConfig,
    pub snapshot_every: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, Value), CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        Ok((Self::from_value(&value)?, value))
    }

    pub fn from_value(value: &Value) -> Result<Self, CliError> {
        let config: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Schema(inner.to_string())
            } else {
                CliError::Schema(format!("{path}: {inner}"))
            }
        })?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Schema(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn build_mdp(&self) -> Result<MdpSpec, CliError> {
        let mdp = match &self.environment {
            EnvironmentConfig::Bandit { means, noise_sd, beta } => make_bandit(means, *noise_sd, *beta),
            EnvironmentConfig::Gridworld {
                width,
                height,
                goal,
                step_cost,
                beta,
            } => make_gridworld(*width, *height, *goal, *step_cost, *beta),
            EnvironmentConfig::ConsumptionSavings {
                asset_grid_size,
                asset_max,
                income_values,
                income_transition,
                crra_sigma,
                rate,
                beta,
            } => {
                let ny = income_values.len();
                let transition = square_rows("environment.income_transition", income_transition, ny)?;
                make_consumption_savings(&ConsumptionSavings {
                    asset_grid_size: *asset_grid_size,
                    asset_max: *asset_max,
                    income_values: income_values.clone(),
                    income_transition: transition,
                    crra_sigma: *crra_sigma,
                    rate: *rate,
                    beta: *beta,
                })
            }
            EnvironmentConfig::Mdp(doc) => return doc.to_spec().map_err(|e| model_error("environment", e)),
        };
        mdp.map_err(|e| model_error("environment", e))
    }

    fn state_metric(&self, n_states: usize) -> Result<StateMetric, CliError> {
        match &self.kernel.state_metric {
            MetricConfig::Index => Ok(StateMetric::Index),
            MetricConfig::Coordinates { coords } => {
                if coords.len() != n_states {
                    return Err(CliError::Schema(format!(
                        "kernel.state_metric.coords: expected {n_states} rows, got {}",
                        coords.len()
                    )));
                }
                let dim = coords.first().map_or(0, Vec::len);
                if coords.iter().any(|c| c.len() != dim) {
                    return Err(CliError::Schema(
                        "kernel.state_metric.coords: rows differ in length".into(),
                    ));
                }
                Ok(StateMetric::Coordinates {
                    dim,
                    coords: coords.concat(),
                })
            }
            MetricConfig::GridCoordinates => match &self.environment {
                EnvironmentConfig::Gridworld { width, height, .. } => Ok(StateMetric::Coordinates {
                    dim: 2,
                    coords: reasoning_agent_core::env::gridworld_coordinates(*width, *height),
                }),
                _ => Err(CliError::Schema(
                    "kernel.state_metric: grid_coordinates requires a gridworld environment".into(),
                )),
            },
            MetricConfig::Table { distances } => Ok(StateMetric::Table(square_rows(
                "kernel.state_metric.distances",
                distances,
                n_states,
            )?)),
        }
    }

    /// Build and validate the environment, the prior and the agent settings.
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let mdp = self.build_mdp()?;
        let kernel = KernelSpec {
            state_length_scale: self.kernel.state_length_scale.value(),
            action_coupling: self.kernel.action_coupling,
            prior_variance: self.kernel.prior_variance,
            prior_mean: self.kernel.prior_mean,
            state_metric: self.state_metric(mdp.n_states())?,
        };
        BeliefState::prior(&kernel, Grid::new(mdp.n_actions(), mdp.n_states()))
            .map_err(|e| model_error("kernel", e))?;
        if !(self.solver.delta_max > 0.0 && self.solver.delta_max.is_finite()) {
            return Err(CliError::Schema("solver.delta_max: must be positive and finite".into()));
        }
        if self.solver.max_iter == 0 {
            return Err(CliError::Schema("solver.max_iter: must be at least 1".into()));
        }
        if self.ground_truth.tol.is_nan() || self.ground_truth.tol <= 0.0 {
            return Err(CliError::Schema("ground_truth.tol: must be positive".into()));
        }
        let agent = AgentConfig {
            kernel,
            kappa: self.objective.kappa,
            w: self.objective.w,
            h: self.objective.h,
            costless_reasoning: self.objective.costless_reasoning,
            agent_beta: self.agent_beta,
            experience_noise_var: self.experience_noise_var,
            horizon: self.horizon,
            seed: self.seed,
            solver: SolverConfig {
                delta_max: self.solver.delta_max,
                max_iter: self.solver.max_iter,
                mean_reading: match self.solver.mean_reading {
                    MeanReadingConfig::Realized => MeanReading::Realized,
                    MeanReadingConfig::PreReasoning => MeanReading::PreReasoning,
                },
            },
            ground_truth_tol: self.ground_truth.tol,
            ground_truth_max_iter: self.ground_truth.max_iter,
        };
        agent.validate(&mdp).map_err(|e| model_error("objective", e))?;
        Ok(Prepared {
            mdp,
            agent,
            snapshot_every: self.output.snapshot_every,
        })
    }

    /// Output directory: `AGENT_OUTPUT_DIR` if set, else `output.dir`, else
    /// [`DEFAULT_OUTPUT_DIR`].
    pub fn output_dir(&self) -> PathBuf {
        resolve_output_dir(self.output.dir.as_deref())
    }
}

pub fn resolve_output_dir(configured: Option<&Path>) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured.map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR), Path::to_path_buf),
    }
}

fn square_rows(field: &str, rows: &[Vec<f64>], n: usize) -> Result<Vec<f64>, CliError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Schema(format!("{field}: expected a {n}×{n} table")));
    }
    Ok(rows.concat())
}

/// Model-level validation failures are schema violations, prefixed with the
/// config section they came from.
fn model_error(section: &str, e: reasoning_agent_core::Error) -> CliError {
    CliError::Schema(format!("{section}: {e}"))
}
