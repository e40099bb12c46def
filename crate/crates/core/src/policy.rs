//! Softmax policy with an endogenous temperature, and the period's joint
//! choice of reasoning plan and action distribution.
//!
//! The temperature `δ` is the multiplier on the entropy floor
//! `H(π) ≥ h Σ_a σ²(a, s)`. Raising `δ` both flattens the softmax and lowers
//! the reasoning threshold `κ / (w + δh)`, so the slack
//! `H(π_δ) - h Σ σ²_δ` rises with `δ`; the period solution is its root.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::belief::{BeliefState, Grid};
use crate::error::{invalid, Error, Result};
use crate::reasoning::{eigendecompose_slice, synthesize_reasoning_signal, ReasoningPlan, ReasoningSignal};

/// Temperature used when the entropy floor cannot be met at any finite `δ`.
pub const DELTA_MAX: f64 = 1e8;
/// Lower end of the temperature bracket.
pub const DELTA_MIN: f64 = 1e-8;
/// Entropy targets at or below this are treated as zero.
pub const ENTROPY_FLOOR: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 200;

fn check_feasible(q_values: &[f64], feasible: &[bool]) -> Result<usize> {
    if q_values.len() != feasible.len() {
        return Err(Error::DimensionMismatch {
            expected: q_values.len(),
            got: feasible.len(),
        });
    }
    let count = feasible.iter().filter(|&&f| f).count();
    if count == 0 {
        return Err(invalid("feasible", "no feasible action"));
    }
    Ok(count)
}

/// `exp(q/δ)` normalized over feasible actions; infeasible actions get zero.
pub fn softmax_policy(q_values: &[f64], feasible: &[bool], delta: f64) -> Result<Vec<f64>> {
    check_feasible(q_values, feasible)?;
    if !(delta > 0.0) {
        return Err(invalid("delta", "softmax needs a positive temperature"));
    }
    let max = q_values
        .iter()
        .zip(feasible)
        .filter(|(_, &f)| f)
        .map(|(&q, _)| q)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = q_values
        .iter()
        .zip(feasible)
        .map(|(&q, &f)| if f { libm::exp((q - max) / delta) } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    Ok(out)
}

/// Probability one on the feasible argmax, ties to the lowest action id.
pub fn greedy_policy(q_values: &[f64], feasible: &[bool]) -> Result<Vec<f64>> {
    check_feasible(q_values, feasible)?;
    let mut best = None;
    for (a, (&q, &f)) in q_values.iter().zip(feasible).enumerate() {
        if f && best.is_none_or(|(_, b)| q > b) {
            best = Some((a, q));
        }
    }
    let mut out = alloc::vec![0.0; q_values.len()];
    out[best.map(|(a, _)| a).unwrap_or(0)] = 1.0;
    Ok(out)
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn policy_entropy(policy: &[f64]) -> f64 {
    policy
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * libm::log(p))
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemperatureStatus {
    /// Zero target: greedy policy.
    Greedy,
    /// Entropy matched by a finite positive temperature.
    Interior,
    /// Target at or above `ln N`: capped at the maximum temperature.
    Capped,
    /// All feasible values equal; the policy is uniform for every `δ`.
    Indifferent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperature {
    pub delta: f64,
    pub status: TemperatureStatus,
}

impl Temperature {
    pub fn policy(&self, q_values: &[f64], feasible: &[bool]) -> Result<Vec<f64>> {
        match self.status {
            TemperatureStatus::Greedy => greedy_policy(q_values, feasible),
            TemperatureStatus::Indifferent => {
                let n = check_feasible(q_values, feasible)? as f64;
                Ok(feasible.iter().map(|&f| if f { 1.0 / n } else { 0.0 }).collect())
            }
            TemperatureStatus::Interior | TemperatureStatus::Capped => softmax_policy(q_values, feasible, self.delta),
        }
    }
}

/// Temperature whose softmax has entropy `target_entropy`, by bisection on `ln δ`.
pub fn solve_temperature(
    q_values: &[f64],
    feasible: &[bool],
    target_entropy: f64,
    delta_max: f64,
) -> Result<Temperature> {
    let n = check_feasible(q_values, feasible)?;
    if !(target_entropy >= 0.0) {
        return Err(invalid("target_entropy", "must be nonnegative"));
    }
    if target_entropy <= ENTROPY_FLOOR {
        return Ok(Temperature {
            delta: 0.0,
            status: TemperatureStatus::Greedy,
        });
    }
    let max_entropy = libm::log(n as f64);
    let mut values = q_values.iter().zip(feasible).filter(|(_, &f)| f).map(|(&q, _)| q);
    let first = values.next().unwrap_or(0.0);
    if values.all(|q| q == first) {
        if target_entropy <= max_entropy {
            return Ok(Temperature {
                delta: 0.0,
                status: TemperatureStatus::Indifferent,
            });
        }
        return Ok(Temperature {
            delta: delta_max,
            status: TemperatureStatus::Capped,
        });
    }
    if target_entropy >= max_entropy - 1e-9 {
        return Ok(Temperature {
            delta: delta_max,
            status: TemperatureStatus::Capped,
        });
    }

    let entropy_at = |delta: f64| -> Result<f64> { Ok(policy_entropy(&softmax_policy(q_values, feasible, delta)?)) };
    let (mut lo, mut hi) = (libm::log(DELTA_MIN), libm::log(delta_max));
    if entropy_at(DELTA_MIN)? >= target_entropy {
        return Ok(Temperature {
            delta: DELTA_MIN,
            status: TemperatureStatus::Interior,
        });
    }
    for _ in 0..DEFAULT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let h = entropy_at(libm::exp(mid))?;
        if (h - target_entropy).abs() <= 1e-13 {
            return Ok(Temperature {
                delta: libm::exp(mid),
                status: TemperatureStatus::Interior,
            });
        }
        if h < target_entropy {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 {
            break;
        }
    }
    Ok(Temperature {
        delta: libm::exp(hi),
        status: TemperatureStatus::Interior,
    })
}

/// Cost and preference parameters of the period objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParams {
    /// Marginal cost of information (per nat).
    pub kappa: f64,
    /// Weight on remaining variance (dissonance cost).
    pub w: f64,
    /// Experimentation weight in the entropy floor.
    pub h: f64,
    pub beta: f64,
    /// Treat reasoning as free: `kappa` is ignored and every uncertain
    /// direction at the current state is observed exactly.
    pub costless_reasoning: bool,
}

impl ObjectiveParams {
    pub fn validate(&self) -> Result<()> {
        if !self.costless_reasoning && !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(invalid(
                "kappa",
                "must be positive and finite unless costless_reasoning is set",
            ));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(invalid("w", "must be finite and nonnegative"));
        }
        if !(self.h >= 0.0 && self.h.is_finite()) {
            return Err(invalid("h", "must be finite and nonnegative"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(invalid("beta", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn effective_kappa(&self) -> f64 {
        if self.costless_reasoning {
            0.0
        } else {
            self.kappa
        }
    }
}

/// Which Q estimates enter the softmax and the exploitation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanReading {
    /// Posterior means after this period's realized reasoning signals.
    #[default]
    Realized,
    /// Means before reasoning (after the experience update).
    PreReasoning,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub delta_max: f64,
    pub max_iter: usize,
    pub mean_reading: MeanReading,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta_max: DELTA_MAX,
            max_iter: DEFAULT_MAX_ITER,
            mean_reading: MeanReading::Realized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// The entropy floor is (numerically) zero: `δ = 0`, greedy policy.
    Unconstrained,
    /// The floor binds at a positive temperature.
    Binding,
    /// The floor exceeds the attainable entropy even at `delta_max`.
    Capped,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub delta_trace: Vec<f64>,
    /// `entropy - entropy_bound` at the returned solution.
    pub residual: f64,
    /// `|solve_temperature(q, bound) - δ|` for binding solutions.
    pub fixed_point_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSolution {
    /// Probabilities over all actions; zero on infeasible ones.
    pub policy: Vec<f64>,
    pub delta: f64,
    pub status: SolveStatus,
    pub plan: ReasoningPlan,
    pub signal: ReasoningSignal,
    pub posterior: BeliefState,
    /// Q estimates the policy was computed from, indexed by action
    /// (infeasible entries hold the posterior mean but carry no weight).
    pub policy_values: Vec<f64>,
    pub entropy: f64,
    pub entropy_bound: f64,
    pub objective_value: f64,
    pub diagnostics: SolverDiagnostics,
}

struct Candidate {
    delta: f64,
    plan: ReasoningPlan,
    signal: ReasoningSignal,
    post_cov_trace: f64,
    q_policy: Vec<f64>,
    policy: Vec<f64>,
    entropy: f64,
    bound: f64,
}

impl Candidate {
    fn slack(&self) -> f64 {
        self.entropy - self.bound
    }
}

struct SliceProblem<'a> {
    state: usize,
    actions: Vec<usize>,
    slice_belief: BeliefState,
    eigenvalues: Vec<f64>,
    eigenvectors: nalgebra::DMatrix<f64>,
    true_q: Vec<f64>,
    draws: &'a [f64],
    params: &'a ObjectiveParams,
    reading: MeanReading,
}

impl SliceProblem<'_> {
    fn evaluate(&self, delta: f64) -> Result<Candidate> {
        let p = self.params;
        let plan = ReasoningPlan::from_spectrum(
            self.state,
            self.actions.clone(),
            self.eigenvalues.clone(),
            self.eigenvectors.clone(),
            p.effective_kappa(),
            p.w,
            delta,
            p.h,
        )?;
        let active = plan.active_directions();
        let signal = synthesize_reasoning_signal(&plan, &self.true_q, &self.draws[..active])?;
        let post = if active == 0 {
            self.slice_belief.clone()
        } else {
            self.slice_belief.condition(&signal.slice_observation())?
        };
        let q_policy: Vec<f64> = match self.reading {
            MeanReading::Realized => post.mean.iter().copied().collect(),
            MeanReading::PreReasoning => self.slice_belief.mean.iter().copied().collect(),
        };
        let all = alloc::vec![true; q_policy.len()];
        let policy = if delta > 0.0 {
            softmax_policy(&q_policy, &all, delta)?
        } else {
            greedy_policy(&q_policy, &all)?
        };
        let entropy = policy_entropy(&policy);
        let trace = post.cov.trace();
        Ok(Candidate {
            delta,
            plan,
            signal,
            post_cov_trace: trace,
            q_policy,
            policy,
            entropy,
            bound: p.h * trace,
        })
    }
}

/// Solve one period's joint reasoning and action choice at `state`.
///
/// `true_q_at_state` holds the ground-truth Q value of every action at
/// `state` (entries for infeasible actions are ignored). `frozen_draws` holds
/// at least one standard normal draw per feasible action; the same draws are
/// used for every temperature tried, so the solution is a deterministic
/// function of its inputs.
pub fn solve_period(
    belief: &BeliefState,
    state: usize,
    feasible: &[bool],
    params: &ObjectiveParams,
    true_q_at_state: &[f64],
    frozen_draws: &[f64],
    config: &SolverConfig,
) -> Result<PeriodSolution> {
    params.validate()?;
    let grid = belief.grid;
    if feasible.len() != grid.n_actions {
        return Err(Error::DimensionMismatch {
            expected: grid.n_actions,
            got: feasible.len(),
        });
    }
    if true_q_at_state.len() != grid.n_actions {
        return Err(Error::DimensionMismatch {
            expected: grid.n_actions,
            got: true_q_at_state.len(),
        });
    }
    let actions: Vec<usize> = (0..grid.n_actions).filter(|&a| feasible[a]).collect();
    if actions.is_empty() {
        return Err(Error::NoFeasibleAction { state });
    }
    if frozen_draws.len() < actions.len() {
        return Err(Error::DimensionMismatch {
            expected: actions.len(),
            got: frozen_draws.len(),
        });
    }
    if !(config.delta_max > DELTA_MIN) {
        return Err(invalid("delta_max", "must exceed the minimum temperature"));
    }

    let (mean, cov) = belief.slice(state, &actions)?;
    let (eigenvalues, eigenvectors) = eigendecompose_slice(&cov)?;
    let k = actions.len();
    let problem = SliceProblem {
        state,
        true_q: actions.iter().map(|&a| true_q_at_state[a]).collect(),
        actions: actions.clone(),
        slice_belief: BeliefState::from_parts(Grid::new(k, 1), mean, cov.clone(), 0)?,
        eigenvalues,
        eigenvectors,
        draws: frozen_draws,
        params,
        reading: config.mean_reading,
    };

    let mut diagnostics = SolverDiagnostics::default();
    let start = problem.evaluate(0.0)?;
    diagnostics.delta_trace.push(0.0);
    let (chosen, status) = if start.bound <= ENTROPY_FLOOR {
        (start, SolveStatus::Unconstrained)
    } else {
        let top = problem.evaluate(config.delta_max)?;
        diagnostics.delta_trace.push(config.delta_max);
        if top.slack() < 0.0 {
            (top, SolveStatus::Capped)
        } else {
            let bottom = problem.evaluate(DELTA_MIN)?;
            diagnostics.delta_trace.push(DELTA_MIN);
            if bottom.slack() >= 0.0 {
                (bottom, SolveStatus::Binding)
            } else {
                let (mut lo, mut hi) = (libm::log(DELTA_MIN), libm::log(config.delta_max));
                let mut best = top;
                let mut converged = false;
                for _ in 0..config.max_iter {
                    let mid = 0.5 * (lo + hi);
                    let c = problem.evaluate(libm::exp(mid))?;
                    diagnostics.delta_trace.push(c.delta);
                    if c.slack() >= 0.0 {
                        hi = mid;
                        best = c;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 1e-14 || best.slack().abs() <= 1e-13 && best.slack() >= 0.0 {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::SolverNonConvergence {
                        history: diagnostics.delta_trace,
                    });
                }
                (best, SolveStatus::Binding)
            }
        }
    };
    diagnostics.iterations = diagnostics.delta_trace.len();

    let posterior = if chosen.signal.values.is_empty() {
        belief.clone()
    } else {
        belief.condition(&chosen.signal.observation(grid))?
    };

    let kappa = params.effective_kappa();
    let reasoning_cost = if kappa > 0.0 {
        kappa * chosen.plan.info_cost_nats
    } else {
        0.0
    };
    let exploitation: f64 = chosen.q_policy.iter().zip(&chosen.policy).map(|(q, p)| q * p).sum();
    let objective_value = exploitation - params.w * chosen.post_cov_trace - reasoning_cost;

    diagnostics.residual = chosen.slack();
    if status == SolveStatus::Binding {
        let all = alloc::vec![true; k];
        let t = solve_temperature(&chosen.q_policy, &all, chosen.bound, config.delta_max)?;
        if t.status == TemperatureStatus::Interior {
            diagnostics.fixed_point_gap = Some((t.delta - chosen.delta).abs());
        }
    }

    let mut policy = alloc::vec![0.0; grid.n_actions];
    let mut policy_values: Vec<f64> = (0..grid.n_actions).map(|a| posterior.mean_at(a, state)).collect();
    for (j, &a) in actions.iter().enumerate() {
        policy[a] = chosen.policy[j];
        policy_values[a] = chosen.q_policy[j];
    }
    let delta = if status == SolveStatus::Unconstrained {
        0.0
    } else {
        chosen.delta
    };
    Ok(PeriodSolution {
        policy,
        delta,
        status,
        plan: chosen.plan,
        signal: chosen.signal,
        posterior,
        policy_values,
        entropy: chosen.entropy,
        entropy_bound: chosen.bound,
        objective_value,
        diagnostics,
    })
}

/// Objective `Σ Q̂π - w Σσ² - κ I` evaluated from explicit parts, where
/// `I` is `entropy_reduction(pre_slice, post_slice)`.
pub fn period_objective(
    q_values: &DVector<f64>,
    policy: &[f64],
    post_variances: &[f64],
    info_nats: f64,
    params: &ObjectiveParams,
) -> f64 {
    let exploitation: f64 = q_values.iter().zip(policy).map(|(q, p)| q * p).sum();
    let kappa = params.effective_kappa();
    let cost = if kappa > 0.0 { kappa * info_nats } else { 0.0 };
    exploitation - params.w * post_variances.iter().sum::<f64>() - cost
}
