//! The per-period loop: experience update, joint reasoning/policy solve,
//! action sampling and environment step.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::belief::{BeliefState, Grid, KernelSpec};
use crate::env::{sample_index, solve_ground_truth, GroundTruth, MdpSpec};
use crate::error::{invalid, Error, Result};
use crate::experience::{apply_experience_update, build_experience_signal};
use crate::policy::{solve_period, ObjectiveParams, SolveStatus, SolverConfig};

/// Independent random streams, one per stochastic channel, all derived from
/// the run seed. Consuming draws on one never shifts another.
#[derive(Debug, Clone)]
pub struct Streams {
    pub initial: ChaCha8Rng,
    pub transition: ChaCha8Rng,
    pub reasoning: ChaCha8Rng,
    pub action: ChaCha8Rng,
}

impl Streams {
    pub const INITIAL: u64 = 0;
    pub const TRANSITION: u64 = 1;
    pub const REASONING: u64 = 2;
    pub const ACTION: u64 = 3;

    pub fn new(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            initial: stream(Self::INITIAL),
            transition: stream(Self::TRANSITION),
            reasoning: stream(Self::REASONING),
            action: stream(Self::ACTION),
        }
    }

    fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.reasoning.sample(StandardNormal)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub kernel: KernelSpec,
    pub kappa: f64,
    pub w: f64,
    pub h: f64,
    pub costless_reasoning: bool,
    /// Discount used inside the experience signal; defaults to the MDP's.
    pub agent_beta: Option<f64>,
    /// Noise variance σ²_E of the experience signal.
    pub experience_noise_var: f64,
    pub horizon: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub ground_truth_tol: f64,
    pub ground_truth_max_iter: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            kappa: 1.0,
            w: 0.1,
            h: 0.1,
            costless_reasoning: false,
            agent_beta: None,
            experience_noise_var: 0.0,
            horizon: 100,
            seed: 0,
            solver: SolverConfig::default(),
            ground_truth_tol: 1e-10,
            ground_truth_max_iter: 1_000_000,
        }
    }
}

impl AgentConfig {
    pub fn objective(&self, mdp: &MdpSpec) -> ObjectiveParams {
        ObjectiveParams {
            kappa: self.kappa,
            w: self.w,
            h: self.h,
            beta: self.agent_beta.unwrap_or(mdp.beta()),
            costless_reasoning: self.costless_reasoning,
        }
    }

    pub fn validate(&self, mdp: &MdpSpec) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if !(self.experience_noise_var >= 0.0 && self.experience_noise_var.is_finite()) {
            return Err(invalid("experience_noise_var", "must be finite and nonnegative"));
        }
        self.objective(mdp).validate()
    }
}

/// What happened on the experience channel at the start of a period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperienceLog {
    pub prev_action: usize,
    pub prev_state: usize,
    pub greedy_action: usize,
    pub utility: f64,
    /// Temporal-difference residual before the update.
    pub innovation: f64,
    /// False when the belief already pinned the signal down exactly
    /// (predictive variance below the floor) and the update was skipped.
    pub applied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub period: u64,
    pub state: usize,
    pub action: usize,
    pub flow_utility: f64,
    pub next_state: usize,
    pub delta: f64,
    pub status: SolveStatus,
    pub entropy: f64,
    pub entropy_bound: f64,
    pub objective_value: f64,
    pub solver_iterations: usize,
    pub threshold: f64,
    pub info_cost_nats: f64,
    pub active_directions: usize,
    pub prior_eigenvalues: Vec<f64>,
    pub target_eigenvalues: Vec<f64>,
    pub noise_variances: Vec<f64>,
    pub policy: Vec<f64>,
    pub posterior_trace_at_state: f64,
    pub posterior_trace: f64,
    pub belief_rmse_vs_qstar: f64,
    pub instant_regret: f64,
    pub experience: Option<ExperienceLog>,
}

impl PeriodRecord {
    pub fn experience_innovation(&self) -> Option<f64> {
        self.experience.map(|e| e.innovation)
    }
}

/// Root-mean-square error of the belief mean against `Q*` over feasible pairs.
pub fn belief_rmse(belief: &BeliefState, mdp: &MdpSpec, truth: &GroundTruth) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for a in 0..mdp.n_actions() {
        for s in 0..mdp.n_states() {
            if mdp.is_feasible(a, s) {
                let e = belief.mean_at(a, s) - truth.q(a, s);
                total += e * e;
                count += 1;
            }
        }
    }
    libm::sqrt(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PreviousStep {
    action: usize,
    state: usize,
    utility: f64,
}

/// One agent interacting with one environment.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    mdp: &'a MdpSpec,
    config: AgentConfig,
    params: ObjectiveParams,
    truth: GroundTruth,
    belief: BeliefState,
    state: usize,
    prev: Option<PreviousStep>,
    streams: Streams,
    period: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(mdp: &'a MdpSpec, config: AgentConfig) -> Result<Self> {
        config.validate(mdp)?;
        let truth = solve_ground_truth(mdp, config.ground_truth_tol, config.ground_truth_max_iter)?;
        Self::with_truth(mdp, config, truth)
    }

    /// Like [`Simulation::new`] with a precomputed ground truth.
    pub fn with_truth(mdp: &'a MdpSpec, config: AgentConfig, truth: GroundTruth) -> Result<Self> {
        config.validate(mdp)?;
        let belief = BeliefState::prior(&config.kernel, Grid::new(mdp.n_actions(), mdp.n_states()))?;
        let mut streams = Streams::new(config.seed);
        let state = sample_index(mdp.initial_state_distribution(), streams.initial.random::<f64>());
        Ok(Self {
            mdp,
            params: config.objective(mdp),
            config,
            truth,
            belief,
            state,
            prev: None,
            streams,
            period: 0,
        })
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn into_belief(self) -> BeliefState {
        self.belief
    }

    /// Run one period and advance the environment.
    pub fn run_period(&mut self) -> Result<PeriodRecord> {
        let period = self.period;
        self.run_period_inner().map_err(|e| Error::Period {
            period,
            source: Box::new(e),
        })
    }

    fn run_period_inner(&mut self) -> Result<PeriodRecord> {
        let mdp = self.mdp;
        let state = self.state;
        let feasible = mdp.feasible_at(state);

        let mut belief = self.belief.clone();
        let experience = match self.prev {
            Some(prev) => {
                let signal = build_experience_signal(
                    &belief,
                    prev.action,
                    prev.state,
                    state,
                    prev.utility,
                    self.params.beta,
                    self.config.experience_noise_var,
                    &feasible,
                )?;
                let innovation = signal.innovation(&belief);
                let applied = match apply_experience_update(&belief, &signal) {
                    Ok(post) => {
                        belief = post;
                        true
                    }
                    Err(Error::DegenerateSignal { .. }) => false,
                    Err(e) => return Err(e),
                };
                Some(ExperienceLog {
                    prev_action: prev.action,
                    prev_state: prev.state,
                    greedy_action: signal.greedy_action_at_new_state,
                    utility: prev.utility,
                    innovation,
                    applied,
                })
            }
            None => None,
        };

        let draws = self.streams.normals(mdp.n_actions());
        let true_q = self.truth.q_at_state(state, mdp.n_actions());
        let solution = solve_period(
            &belief,
            state,
            &feasible,
            &self.params,
            &true_q,
            &draws,
            &self.config.solver,
        )?;

        let action = sample_index(&solution.policy, self.streams.action.random::<f64>());
        let flow_utility = mdp.utility(action, state);
        let next_state = mdp.step(state, action, self.streams.transition.random::<f64>())?;

        let mut posterior = solution.posterior;
        posterior.period = self.period + 1;
        let (_, slice) = posterior.state_slice(state)?;
        let plan = &solution.plan;
        let record = PeriodRecord {
            period: self.period,
            state,
            action,
            flow_utility,
            next_state,
            delta: solution.delta,
            status: solution.status,
            entropy: solution.entropy,
            entropy_bound: solution.entropy_bound,
            objective_value: solution.objective_value,
            solver_iterations: solution.diagnostics.iterations,
            threshold: plan.threshold,
            info_cost_nats: plan.info_cost_nats,
            active_directions: plan.active_directions(),
            prior_eigenvalues: plan.prior_eigenvalues.clone(),
            target_eigenvalues: plan.target_eigenvalues.clone(),
            noise_variances: plan.noise_variances.clone(),
            policy: solution.policy,
            posterior_trace_at_state: slice.trace(),
            posterior_trace: posterior.trace(),
            belief_rmse_vs_qstar: belief_rmse(&posterior, mdp, &self.truth),
            instant_regret: self.truth.v_star[state] - self.truth.q(action, state),
            experience,
        };

        self.belief = posterior;
        self.prev = Some(PreviousStep {
            action,
            state,
            utility: flow_utility,
        });
        self.state = next_state;
        self.period += 1;
        Ok(record)
    }
}

/// Records and final state of a finished run.
#[derive(Debug, Clone)]
pub struct Episode {
    pub records: Vec<PeriodRecord>,
    pub final_belief: BeliefState,
    pub truth: GroundTruth,
}

/// Run `config.horizon` periods.
pub fn run_episode(mdp: &MdpSpec, config: &AgentConfig) -> Result<Episode> {
    run_episode_with(mdp, config, |_, _| {})
}

/// Run `config.horizon` periods, calling `observe` after each with the record
/// and the end-of-period belief.
pub fn run_episode_with<F>(mdp: &MdpSpec, config: &AgentConfig, mut observe: F) -> Result<Episode>
where
    F: FnMut(&PeriodRecord, &BeliefState),
{
    let mut sim = Simulation::new(mdp, config.clone())?;
    let mut records = Vec::with_capacity(config.horizon);
    for _ in 0..config.horizon {
        let record = sim.run_period()?;
        observe(&record, sim.belief());
        records.push(record);
    }
    let truth = sim.truth().clone();
    Ok(Episode {
        records,
        final_belief: sim.into_belief(),
        truth,
    })
}
