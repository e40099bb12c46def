//! On-disk formats: the trajectory CSV, the run summary, belief snapshots and
//! the inline MDP document.
//!
//! Every real number in the CSV is written with 17 significant digits
//! (`{:.16e}`), which round-trips an `f64` exactly. Non-finite values appear
//! as `inf`, `-inf` or `NaN`. List-valued columns join their entries with `;`.

use std::io::Write;

use reasoning_agent_core::{BeliefState, Error, MdpSpec, PeriodRecord, SolveStatus};
use serde::{Deserialize, Serialize};

/// Column order of `trajectory.csv`.
///
/// | column | meaning |
/// |---|---|
/// | `period` | period index, from 0 |
/// | `state`, `action`, `next_state` | ids |
/// | `flow_utility` | `u(action, state)` |
/// | `delta` | softmax temperature |
/// | `status` | `unconstrained`, `binding` or `capped` |
/// | `entropy`, `entropy_bound` | policy entropy and its floor `h·Σσ²` |
/// | `objective_value` | period objective at the solution |
/// | `solver_iterations` | temperature root-finding steps |
/// | `threshold` | water level `κ/(w+δh)` |
/// | `info_cost_nats` | information acquired by reasoning |
/// | `active_directions` | eigen-directions observed |
/// | `posterior_trace_at_state`, `posterior_trace` | remaining variance |
/// | `belief_rmse_vs_qstar` | RMSE of the posterior mean against `Q*` |
/// | `instant_regret` | `V*(state) − Q*(action, state)` |
/// | `experience_innovation` | TD residual before the update; empty in period 0 |
/// | `experience_greedy_action` | greedy substitute at the new state; empty in period 0 |
/// | `experience_applied` | `0` when the update was skipped as degenerate; empty in period 0 |
/// | `policy` | action probabilities |
/// | `prior_eigenvalues`, `target_eigenvalues`, `noise_variances` | reasoning plan, descending order |
pub const TRAJECTORY_HEADER: [&str; 25] = [
    "period",
    "state",
    "action",
    "next_state",
    "flow_utility",
    "delta",
    "status",
    "entropy",
    "entropy_bound",
    "objective_value",
    "solver_iterations",
    "threshold",
    "info_cost_nats",
    "active_directions",
    "posterior_trace_at_state",
    "posterior_trace",
    "belief_rmse_vs_qstar",
    "instant_regret",
    "experience_innovation",
    "experience_greedy_action",
    "experience_applied",
    "policy",
    "prior_eigenvalues",
    "target_eigenvalues",
    "noise_variances",
];

pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| format_real(x)).collect::<Vec<_>>().join(";")
}

pub fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Unconstrained => "unconstrained",
        SolveStatus::Binding => "binding",
        SolveStatus::Capped => "capped",
    }
}

pub fn trajectory_row(r: &PeriodRecord) -> Vec<String> {
    let (innovation, greedy, applied) = match &r.experience {
        Some(e) => (
            format_real(e.innovation),
            e.greedy_action.to_string(),
            u8::from(e.applied).to_string(),
        ),
        None => (String::new(), String::new(), String::new()),
    };
    vec![
        r.period.to_string(),
        r.state.to_string(),
        r.action.to_string(),
        r.next_state.to_string(),
        format_real(r.flow_utility),
        format_real(r.delta),
        status_name(r.status).to_string(),
        format_real(r.entropy),
        format_real(r.entropy_bound),
        format_real(r.objective_value),
        r.solver_iterations.to_string(),
        format_real(r.threshold),
        format_real(r.info_cost_nats),
        r.active_directions.to_string(),
        format_real(r.posterior_trace_at_state),
        format_real(r.posterior_trace),
        format_real(r.belief_rmse_vs_qstar),
        format_real(r.instant_regret),
        innovation,
        greedy,
        applied,
        format_list(&r.policy),
        format_list(&r.prior_eigenvalues),
        format_list(&r.target_eigenvalues),
        format_list(&r.noise_variances),
    ]
}

/// Streaming writer for `trajectory.csv`.
pub struct TrajectoryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(sink: W) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(sink);
        inner.write_record(TRAJECTORY_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &PeriodRecord) -> csv::Result<()> {
        self.inner.write_record(trajectory_row(record))
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// End-of-run metrics. Quartile `q` holds periods `i` with `⌊4i/n⌋ = q`; a
/// quartile with no periods is `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub periods: usize,
    pub mean_regret: f64,
    pub mean_delta: f64,
    pub mean_regret_by_quartile: [Option<f64>; 4],
    pub mean_delta_by_quartile: [Option<f64>; 4],
    /// `belief_rmse_vs_qstar` of the last period.
    pub final_belief_rmse: f64,
}

/// Mean of `values` within each quartile of their positions.
pub fn quartile_means(values: &[f64]) -> [Option<f64>; 4] {
    let n = values.len();
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for (i, v) in values.iter().enumerate() {
        let q = 4 * i / n;
        sums[q] += v;
        counts[q] += 1;
    }
    std::array::from_fn(|q| (counts[q] > 0).then(|| sums[q] / counts[q] as f64))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

impl Summary {
    /// Summary of a nonempty record sequence.
    pub fn from_records(records: &[PeriodRecord]) -> Self {
        let regret: Vec<f64> = records.iter().map(|r| r.instant_regret).collect();
        let delta: Vec<f64> = records.iter().map(|r| r.delta).collect();
        Self {
            periods: records.len(),
            mean_regret: mean(&regret),
            mean_delta: mean(&delta),
            mean_regret_by_quartile: quartile_means(&regret),
            mean_delta_by_quartile: quartile_means(&delta),
            final_belief_rmse: records.last().map_or(f64::NAN, |r| r.belief_rmse_vs_qstar),
        }
    }
}

/// Belief snapshot document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub period: u64,
    pub n_actions: usize,
    pub n_states: usize,
    pub mean: Vec<f64>,
    pub cov_row_major: Vec<f64>,
}

impl From<&BeliefState> for BeliefSnapshot {
    fn from(b: &BeliefState) -> Self {
        Self {
            period: b.period,
            n_actions: b.grid.n_actions,
            n_states: b.grid.n_states,
            mean: b.mean.iter().copied().collect(),
            cov_row_major: b.cov_row_major(),
        }
    }
}

/// JSON form of an [`MdpSpec`] with nested arrays indexed `[action][state]`
/// (and `[action][state][next_state]` for transitions). Utilities of
/// infeasible pairs may be `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub utility: Vec<Vec<Option<f64>>>,
    pub transition: Vec<Vec<Vec<f64>>>,
    /// Defaults to every pair feasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible: Option<Vec<Vec<bool>>>,
    pub beta: f64,
    pub initial_state_distribution: Vec<f64>,
}

fn check_len(expected: usize, got: usize) -> Result<(), Error> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

impl MdpDocument {
    pub fn to_spec(&self) -> Result<MdpSpec, Error> {
        let (ns, na) = (self.n_states, self.n_actions);
        check_len(na, self.utility.len())?;
        check_len(na, self.transition.len())?;
        let feasible: Vec<bool> = match &self.feasible {
            Some(rows) => {
                check_len(na, rows.len())?;
                for row in rows {
                    check_len(ns, row.len())?;
                }
                rows.concat()
            }
            None => vec![true; na * ns],
        };
        let mut utility = Vec::with_capacity(na * ns);
        let mut transition = Vec::with_capacity(na * ns * ns);
        for a in 0..na {
            check_len(ns, self.utility[a].len())?;
            check_len(ns, self.transition[a].len())?;
            for s in 0..ns {
                let u = self.utility[a][s];
                if feasible[a * ns + s] && u.is_none() {
                    return Err(Error::InvalidParameter {
                        name: "utility",
                        reason: format!("missing utility for feasible pair (action {a}, state {s})"),
                    });
                }
                utility.push(u.unwrap_or(f64::NEG_INFINITY));
                check_len(ns, self.transition[a][s].len())?;
                transition.extend_from_slice(&self.transition[a][s]);
            }
        }
        MdpSpec::new(
            ns,
            na,
            utility,
            transition,
            feasible,
            self.beta,
            self.initial_state_distribution.clone(),
        )
    }

    pub fn from_spec(mdp: &MdpSpec) -> Self {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let all_feasible = mdp.feasibility_table().iter().all(|&f| f);
        Self {
            n_states: ns,
            n_actions: na,
            utility: (0..na)
                .map(|a| {
                    (0..ns)
                        .map(|s| mdp.is_feasible(a, s).then(|| mdp.utility(a, s)))
                        .collect()
                })
                .collect(),
            transition: (0..na)
                .map(|a| (0..ns).map(|s| mdp.transition_row(a, s).to_vec()).collect())
                .collect(),
            feasible: (!all_feasible).then(|| {
                (0..na)
                    .map(|a| (0..ns).map(|s| mdp.is_feasible(a, s)).collect())
                    .collect()
            }),
            beta: mdp.beta(),
            initial_state_distribution: mdp.initial_state_distribution().to_vec(),
        }
    }
}
