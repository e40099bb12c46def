//! The costly reasoning channel.
//!
//! At the current state the agent observes noisy projections of the true Q
//! values onto the eigenvectors of its belief covariance. Directions whose
//! variance exceeds the threshold `κ / (w + δh)` are pushed down exactly to
//! the threshold (reverse water-filling); the rest are left alone.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::belief::{BeliefState, Grid, LinearObservation, PSEUDO_DET_CUTOFF};
use crate::error::{invalid, Error, Result};
use crate::linalg::sorted_eigen;

/// Eigenvalues (descending, negatives floored at zero) and orthonormal
/// eigenvectors (columns) of a symmetric slice covariance.
pub fn eigendecompose_slice(slice_cov: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if slice_cov.nrows() != slice_cov.ncols() {
        return Err(Error::DimensionMismatch {
            expected: slice_cov.nrows(),
            got: slice_cov.ncols(),
        });
    }
    let mut sym = slice_cov.clone();
    crate::linalg::symmetrize(&mut sym);
    let (mut values, vectors) = sorted_eigen(&sym);
    for v in &mut values {
        *v = v.max(0.0);
    }
    Ok((values, vectors))
}

/// Outcome of reverse water-filling over a descending spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    /// `κ / (w + δh)`; `+∞` when there is no benefit channel, `0` for costless reasoning.
    pub threshold: f64,
    pub target_eigenvalues: Vec<f64>,
    /// Per-direction signal noise variance; `+∞` for directions not acquired.
    pub noise_variances: Vec<f64>,
    pub info_cost_nats: f64,
    /// Set when `w + δh ≤ 0`: reasoning has no value and nothing is acquired.
    pub no_benefit: bool,
}

impl WaterFill {
    pub fn active_directions(&self) -> usize {
        self.noise_variances.iter().take_while(|v| v.is_finite()).count()
    }
}

/// Reverse water-filling of `prior_eigenvalues` (descending).
///
/// `kappa == 0` is the costless-reasoning limit: every direction with
/// non-negligible variance is observed without noise.
pub fn water_fill(prior_eigenvalues: &[f64], kappa: f64, w: f64, delta: f64, h: f64) -> Result<WaterFill> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(invalid("kappa", "must be finite and nonnegative"));
    }
    for (name, v) in [("w", w), ("delta", delta), ("h", h)] {
        if !(v >= 0.0) {
            return Err(invalid(name, "must be nonnegative"));
        }
    }
    if prior_eigenvalues.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("prior_eigenvalues", "must be finite and nonnegative"));
    }
    if prior_eigenvalues.windows(2).any(|p| p[0] < p[1]) {
        return Err(invalid("prior_eigenvalues", "must be sorted in descending order"));
    }

    let n = prior_eigenvalues.len();
    let benefit = w + delta * h;
    if kappa > 0.0 && !(benefit > 0.0) {
        return Ok(WaterFill {
            threshold: f64::INFINITY,
            target_eigenvalues: prior_eigenvalues.to_vec(),
            noise_variances: alloc::vec![f64::INFINITY; n],
            info_cost_nats: 0.0,
            no_benefit: true,
        });
    }

    let mut targets = prior_eigenvalues.to_vec();
    let mut noise = alloc::vec![f64::INFINITY; n];
    let mut info = 0.0;

    if kappa == 0.0 {
        let floor = PSEUDO_DET_CUTOFF * prior_eigenvalues.first().copied().unwrap_or(0.0);
        for (i, &lambda) in prior_eigenvalues.iter().enumerate() {
            if lambda <= floor || lambda == 0.0 {
                break;
            }
            targets[i] = 0.0;
            noise[i] = 0.0;
            info = f64::INFINITY;
        }
        return Ok(WaterFill {
            threshold: 0.0,
            target_eigenvalues: targets,
            noise_variances: noise,
            info_cost_nats: info,
            no_benefit: false,
        });
    }

    let threshold = kappa / benefit;
    for (i, &lambda) in prior_eigenvalues.iter().enumerate() {
        if lambda <= threshold {
            break;
        }
        targets[i] = threshold;
        noise[i] = kappa * lambda / (lambda * benefit - kappa);
        info += 0.5 * libm::log(lambda / threshold);
    }
    Ok(WaterFill {
        threshold,
        target_eigenvalues: targets,
        noise_variances: noise,
        info_cost_nats: info,
        no_benefit: false,
    })
}

/// Reasoning structure chosen for one period at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningPlan {
    pub state: usize,
    /// Actions spanned by the slice, in slice order.
    pub actions: Vec<usize>,
    /// Columns are the eigenvectors of the pre-reasoning slice covariance.
    pub omega: DMatrix<f64>,
    pub prior_eigenvalues: Vec<f64>,
    pub target_eigenvalues: Vec<f64>,
    pub noise_variances: Vec<f64>,
    pub threshold: f64,
    pub info_cost_nats: f64,
    pub no_benefit: bool,
}

impl ReasoningPlan {
    /// Plan for a slice covariance over `actions` at `state`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_slice(
        state: usize,
        actions: Vec<usize>,
        slice_cov: &DMatrix<f64>,
        kappa: f64,
        w: f64,
        delta: f64,
        h: f64,
    ) -> Result<Self> {
        if slice_cov.nrows() != actions.len() {
            return Err(Error::DimensionMismatch {
                expected: actions.len(),
                got: slice_cov.nrows(),
            });
        }
        let (values, vectors) = eigendecompose_slice(slice_cov)?;
        Self::from_spectrum(state, actions, values, vectors, kappa, w, delta, h)
    }

    /// Plan from an already computed spectrum; reused across temperature
    /// iterations, since the plan depends on δ only through the threshold.
    #[allow(clippy::too_many_arguments)]
    pub fn from_spectrum(
        state: usize,
        actions: Vec<usize>,
        prior_eigenvalues: Vec<f64>,
        omega: DMatrix<f64>,
        kappa: f64,
        w: f64,
        delta: f64,
        h: f64,
    ) -> Result<Self> {
        let fill = water_fill(&prior_eigenvalues, kappa, w, delta, h)?;
        Ok(Self {
            state,
            actions,
            omega,
            prior_eigenvalues,
            target_eigenvalues: fill.target_eigenvalues,
            noise_variances: fill.noise_variances,
            threshold: fill.threshold,
            info_cost_nats: fill.info_cost_nats,
            no_benefit: fill.no_benefit,
        })
    }

    pub fn active_directions(&self) -> usize {
        self.noise_variances.iter().take_while(|v| v.is_finite()).count()
    }
}

/// Plan reasoning at `state` over the actions in `actions`.
pub fn plan_reasoning(
    belief: &BeliefState,
    state: usize,
    actions: &[usize],
    kappa: f64,
    w: f64,
    delta: f64,
    h: f64,
) -> Result<ReasoningPlan> {
    let (_, cov) = belief.slice(state, actions)?;
    ReasoningPlan::from_slice(state, actions.to_vec(), &cov, kappa, w, delta, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningSignal {
    pub plan: ReasoningPlan,
    /// One value per active direction.
    pub values: Vec<f64>,
}

/// Realize the plan's signals against the true Q values at the plan's state.
///
/// `true_q_at_state` is indexed like `plan.actions`; `standard_normal_draws`
/// must hold exactly one draw per active direction.
pub fn synthesize_reasoning_signal(
    plan: &ReasoningPlan,
    true_q_at_state: &[f64],
    standard_normal_draws: &[f64],
) -> Result<ReasoningSignal> {
    let k = plan.actions.len();
    if true_q_at_state.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: true_q_at_state.len(),
        });
    }
    let active = plan.active_directions();
    if standard_normal_draws.len() != active {
        return Err(Error::DimensionMismatch {
            expected: active,
            got: standard_normal_draws.len(),
        });
    }
    let q = DVector::from_column_slice(true_q_at_state);
    let values = (0..active)
        .map(|i| plan.omega.column(i).dot(&q) + libm::sqrt(plan.noise_variances[i]) * standard_normal_draws[i])
        .collect();
    Ok(ReasoningSignal {
        plan: plan.clone(),
        values,
    })
}

impl ReasoningSignal {
    fn noise(&self) -> DMatrix<f64> {
        let active = self.values.len();
        DMatrix::from_fn(
            active,
            active,
            |r, c| if r == c { self.plan.noise_variances[r] } else { 0.0 },
        )
    }

    /// Observation on the slice alone (columns indexed like `plan.actions`).
    pub fn slice_observation(&self) -> LinearObservation {
        let active = self.values.len();
        let k = self.plan.actions.len();
        LinearObservation {
            loading: DMatrix::from_fn(active, k, |r, c| self.plan.omega[(c, r)]),
            noise_cov: self.noise(),
            value: DVector::from_column_slice(&self.values),
        }
    }

    /// Observation embedded into the full grid: eigenvector entries at the
    /// plan's state, zeros elsewhere.
    pub fn observation(&self, grid: Grid) -> LinearObservation {
        let active = self.values.len();
        let mut loading = DMatrix::zeros(active, grid.dim());
        for r in 0..active {
            for (c, &a) in self.plan.actions.iter().enumerate() {
                loading[(r, grid.flat(a, self.plan.state))] = self.plan.omega[(c, r)];
            }
        }
        LinearObservation {
            loading,
            noise_cov: self.noise(),
            value: DVector::from_column_slice(&self.values),
        }
    }
}

/// Bayesian update of the full belief on a reasoning signal.
pub fn apply_reasoning_update(belief: &BeliefState, signal: &ReasoningSignal) -> Result<BeliefState> {
    let grid = belief.grid;
    if signal.plan.state >= grid.n_states {
        return Err(Error::IndexOutOfRange {
            index: signal.plan.state,
            limit: grid.n_states,
        });
    }
    if let Some(&a) = signal.plan.actions.iter().find(|&&a| a >= grid.n_actions) {
        return Err(Error::IndexOutOfRange {
            index: a,
            limit: grid.n_actions,
        });
    }
    if signal.values.is_empty() {
        return Ok(belief.clone());
    }
    belief.condition(&signal.observation(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{build_prior, entropy_reduction, KernelSpec};
    use approx::assert_relative_eq;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(values))
    }

    #[test]
    fn eigendecomposition_examples() {
        let (values, vectors) = eigendecompose_slice(&diag(&[1.0, 3.0])).unwrap();
        assert_eq!(values, alloc::vec![3.0, 1.0]);
        assert_relative_eq!(vectors[(1, 0)].abs(), 1.0, epsilon = 1e-12);

        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (values, vectors) = eigendecompose_slice(&m).unwrap();
        assert_relative_eq!(values[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(values[1], 1.0, epsilon = 1e-12);
        let rebuilt = &vectors * diag(&values) * vectors.transpose();
        assert!((rebuilt - m).amax() < 1e-12);

        let eye = DMatrix::identity(3, 3);
        let (values, vectors) = eigendecompose_slice(&eye).unwrap();
        assert!(values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((vectors.transpose() * &vectors - &eye).amax() < 1e-12);
        assert!((&vectors * diag(&values) * vectors.transpose() - eye).amax() < 1e-12);
    }

    #[test]
    fn negative_eigenvalues_are_floored() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-15]);
        let (values, _) = eigendecompose_slice(&m).unwrap();
        assert_eq!(values[1], 0.0);
    }

    #[test]
    fn water_fill_threshold_example() {
        let fill = water_fill(&[5.0, 3.0, 1.0], 2.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(fill.threshold, 2.0);
        assert_eq!(fill.target_eigenvalues, alloc::vec![2.0, 2.0, 1.0]);
        assert_eq!(fill.active_directions(), 2);
        assert!(fill.noise_variances[2].is_infinite());
        let expected_info = 0.5 * (5.0f64 / 2.0).ln() + 0.5 * (3.0f64 / 2.0).ln();
        assert_relative_eq!(fill.info_cost_nats, expected_info, epsilon = 1e-14);
    }

    #[test]
    fn water_fill_noise_variance_example() {
        let fill = water_fill(&[5.0], 2.0, 1.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(fill.noise_variances[0], 10.0 / 3.0, epsilon = 1e-14);
        let s = fill.noise_variances[0];
        assert_relative_eq!(5.0 * s / (5.0 + s), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn expensive_reasoning_acquires_nothing() {
        let fill = water_fill(&[5.0, 3.0], 1e9, 1.0, 0.5, 0.5).unwrap();
        assert_eq!(fill.active_directions(), 0);
        assert_eq!(fill.info_cost_nats, 0.0);
        assert_eq!(fill.target_eigenvalues, alloc::vec![5.0, 3.0]);
    }

    #[test]
    fn no_benefit_channel_is_flagged() {
        let fill = water_fill(&[5.0, 3.0], 1.0, 0.0, 2.0, 0.0).unwrap();
        assert!(fill.no_benefit);
        assert_eq!(fill.active_directions(), 0);
        assert_eq!(fill.info_cost_nats, 0.0);
    }

    #[test]
    fn costless_reasoning_observes_everything() {
        let fill = water_fill(&[5.0, 3.0, 0.0], 0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(fill.active_directions(), 2);
        assert_eq!(fill.noise_variances[..2], [0.0, 0.0]);
        assert!(fill.info_cost_nats.is_infinite());
    }

    #[test]
    fn water_fill_rejects_unsorted_or_negative() {
        assert!(water_fill(&[1.0, 3.0], 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(water_fill(&[3.0, -1.0], 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(water_fill(&[3.0], -1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn threshold_is_monotone_in_parameters() {
        let t = |kappa, w, delta, h| water_fill(&[1.0], kappa, w, delta, h).unwrap().threshold;
        assert!(t(1.0, 1.0, 2.0, 1.0) < t(1.0, 1.0, 1.0, 1.0));
        assert!(t(1.0, 1.0, 1.0, 2.0) < t(1.0, 1.0, 1.0, 1.0));
        assert!(t(1.0, 2.0, 1.0, 1.0) < t(1.0, 1.0, 1.0, 1.0));
        assert!(t(2.0, 1.0, 1.0, 1.0) > t(1.0, 1.0, 1.0, 1.0));
    }

    fn single_state(slice: DMatrix<f64>) -> BeliefState {
        let k = slice.nrows();
        BeliefState::from_parts(Grid::new(k, 1), DVector::zeros(k), slice, 0).unwrap()
    }

    #[test]
    fn synthesis_and_update() {
        let belief = single_state(diag(&[5.0, 1.0]));
        let plan = plan_reasoning(&belief, 0, &[0, 1], 2.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(plan.active_directions(), 1);
        let q = [3.0, -1.0];
        let signal = synthesize_reasoning_signal(&plan, &q, &[0.7]).unwrap();
        let again = synthesize_reasoning_signal(&plan, &q, &[0.7]).unwrap();
        assert_eq!(signal, again);
        let projection = plan.omega.column(0).dot(&DVector::from_column_slice(&q));
        assert_relative_eq!(
            signal.values[0],
            projection + plan.noise_variances[0].sqrt() * 0.7,
            epsilon = 1e-14
        );

        let post = apply_reasoning_update(&belief, &signal).unwrap();
        let (_, slice) = post.state_slice(0).unwrap();
        let (values, _) = eigendecompose_slice(&slice).unwrap();
        assert_relative_eq!(values[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(values[1], 1.0, epsilon = 1e-8);
        assert!(synthesize_reasoning_signal(&plan, &q, &[]).is_err());
    }

    #[test]
    fn empty_signal_is_identity() {
        let belief = single_state(diag(&[1.0, 1.0]));
        let plan = plan_reasoning(&belief, 0, &[0, 1], 10.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(plan.active_directions(), 0);
        let signal = synthesize_reasoning_signal(&plan, &[1.0, 2.0], &[]).unwrap();
        assert!(signal.values.is_empty());
        assert_eq!(apply_reasoning_update(&belief, &signal).unwrap(), belief);
    }

    #[test]
    fn noiseless_direction_recovers_projection() {
        let belief = single_state(diag(&[4.0]));
        let plan = plan_reasoning(&belief, 0, &[0], 0.0, 0.0, 0.0, 0.0).unwrap();
        let signal = synthesize_reasoning_signal(&plan, &[2.5], &[1.3]).unwrap();
        assert_relative_eq!(signal.values[0].abs(), 2.5, epsilon = 1e-14);
        let post = apply_reasoning_update(&belief, &signal).unwrap();
        assert_relative_eq!(post.mean[0], 2.5, epsilon = 1e-12);
    }

    #[test]
    fn uncoupled_states_are_untouched() {
        let kernel = KernelSpec {
            state_length_scale: 1e-3,
            action_coupling: 0.5,
            prior_variance: 4.0,
            ..KernelSpec::default()
        };
        let belief = build_prior(&kernel, Grid::new(2, 3)).unwrap();
        let plan = plan_reasoning(&belief, 1, &[0, 1], 1.0, 1.0, 0.0, 0.0).unwrap();
        let signal =
            synthesize_reasoning_signal(&plan, &[1.0, 2.0], &alloc::vec![0.3; plan.active_directions()]).unwrap();
        let post = apply_reasoning_update(&belief, &signal).unwrap();
        for s in [0, 2] {
            assert_eq!(post.state_slice(s).unwrap(), belief.state_slice(s).unwrap());
        }
    }

    #[test]
    fn info_cost_matches_entropy_reduction() {
        let slice = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let belief = single_state(slice.clone());
        let plan = plan_reasoning(&belief, 0, &[0, 1, 2], 1.5, 0.5, 0.4, 0.5).unwrap();
        let draws = alloc::vec![0.1; plan.active_directions()];
        let signal = synthesize_reasoning_signal(&plan, &[0.0, 1.0, 2.0], &draws).unwrap();
        let post = apply_reasoning_update(&belief, &signal).unwrap();
        let got = entropy_reduction(&slice, &post.cov).unwrap();
        assert_relative_eq!(got, plan.info_cost_nats, epsilon = 1e-8);
    }

    #[test]
    fn plan_ignores_the_mean() {
        let mut belief = single_state(diag(&[3.0, 2.0]));
        let a = plan_reasoning(&belief, 0, &[0, 1], 1.0, 1.0, 0.0, 0.0).unwrap();
        belief.mean = DVector::from_column_slice(&[100.0, -7.0]);
        let b = plan_reasoning(&belief, 0, &[0, 1], 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(a, b);
    }
}
