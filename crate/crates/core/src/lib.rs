//! Bayesian Q-learning agent that combines a free experience channel with a
//! costly, endogenously chosen reasoning channel.
//!
//! Beliefs over the action-value table are multivariate Gaussian on a finite
//! (action, state) grid. Each period the agent
//!
//! 1. reads last period's flow utility as a temporal-difference signal
//!    ([`experience`]),
//! 2. picks a reasoning plan by reverse water-filling the eigenvalues of its
//!    current-state covariance ([`reasoning`]),
//! 3. acts through a softmax whose temperature is the multiplier on an
//!    entropy floor proportional to remaining uncertainty ([`policy`]).
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]
// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agent;
pub mod belief;
pub mod env;
pub mod error;
pub mod experience;
mod linalg;
pub mod policy;
pub mod reasoning;

pub use agent::{
    run_episode, run_episode_with, AgentConfig, Episode, ExperienceLog, PeriodRecord, Simulation, Streams,
};
pub use belief::{
    build_prior, condition, entropy_reduction, BeliefState, Grid, GridIndex, KernelSpec, LinearObservation, StateMetric,
};
pub use env::{
    make_bandit, make_consumption_savings, make_gridworld, solve_ground_truth, ConsumptionSavings, GroundTruth, MdpSpec,
};
pub use error::{Error, Result};
pub use experience::{apply_experience_update, build_experience_signal, ExperienceSignal};
pub use policy::{
    greedy_policy, policy_entropy, softmax_policy, solve_period, solve_temperature, MeanReading, ObjectiveParams,
    PeriodSolution, SolveStatus, SolverConfig,
};
pub use reasoning::{
    apply_reasoning_update, eigendecompose_slice, synthesize_reasoning_signal, water_fill, ReasoningPlan,
    ReasoningSignal, WaterFill,
};

pub use nalgebra::{DMatrix, DVector};
