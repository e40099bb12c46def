//! The cognitively free experience channel.
//!
//! Last period's flow utility is read as a temporal-difference functional of Q:
//! `u(a', s') ≈ Q(a', s') - β Q(g, s)`, where `s` is the newly realized state
//! and `g` is the greedy action at `s` under the current mean.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::belief::{BeliefState, LinearObservation};
use crate::error::{invalid, Error, Result};

/// Below this predictive variance the signal is considered uninformative.
pub const MIN_SIGNAL_VARIANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceSignal {
    pub utility_value: f64,
    pub prev_action: usize,
    pub prev_state: usize,
    pub new_state: usize,
    pub greedy_action_at_new_state: usize,
    pub loading: DVector<f64>,
    pub noise_variance: f64,
}

/// Feasible argmax of the mean at `state`; ties go to the lowest action id.
pub fn greedy_action(belief: &BeliefState, state: usize, feasible: &[bool]) -> Result<usize> {
    if state >= belief.grid.n_states {
        return Err(Error::IndexOutOfRange {
            index: state,
            limit: belief.grid.n_states,
        });
    }
    if feasible.len() != belief.grid.n_actions {
        return Err(Error::DimensionMismatch {
            expected: belief.grid.n_actions,
            got: feasible.len(),
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for (a, _) in feasible.iter().enumerate().filter(|(_, &f)| f) {
        let q = belief.mean_at(a, state);
        if best.is_none_or(|(_, b)| q > b) {
            best = Some((a, q));
        }
    }
    best.map(|(a, _)| a).ok_or(Error::NoFeasibleAction { state })
}

/// Build the temporal-difference signal revealed by last period's utility.
///
/// `feasible_at_new_state` restricts the greedy substitution at `new_state`.
#[allow(clippy::too_many_arguments)]
pub fn build_experience_signal(
    belief: &BeliefState,
    prev_action: usize,
    prev_state: usize,
    new_state: usize,
    utility_value: f64,
    beta: f64,
    noise_variance: f64,
    feasible_at_new_state: &[bool],
) -> Result<ExperienceSignal> {
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid("beta", "must lie in [0, 1)"));
    }
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(invalid("experience_noise_var", "must be finite and nonnegative"));
    }
    if !utility_value.is_finite() {
        return Err(invalid("utility_value", "must be finite"));
    }
    let grid = belief.grid;
    let prev = grid.index(prev_action, prev_state)?;
    let greedy = greedy_action(belief, new_state, feasible_at_new_state)?;
    let next = grid.flat(greedy, new_state);

    let mut loading = DVector::zeros(grid.dim());
    loading[prev.flat] += 1.0;
    loading[next] -= beta;
    Ok(ExperienceSignal {
        utility_value,
        prev_action,
        prev_state,
        new_state,
        greedy_action_at_new_state: greedy,
        loading,
        noise_variance,
    })
}

impl ExperienceSignal {
    pub fn observation(&self) -> LinearObservation {
        let n = self.loading.len();
        LinearObservation {
            loading: DMatrix::from_fn(1, n, |_, c| self.loading[c]),
            noise_cov: DMatrix::from_element(1, 1, self.noise_variance),
            value: DVector::from_element(1, self.utility_value),
        }
    }

    /// `u - (Q̂(prev) - β Q̂(greedy, new))` under `belief`.
    pub fn innovation(&self, belief: &BeliefState) -> f64 {
        self.utility_value - self.loading.dot(&belief.mean)
    }

    /// Predictive variance of the signal, `Var(loading·Q) + σ²_E`.
    pub fn predictive_variance(&self, belief: &BeliefState) -> f64 {
        (&belief.cov * &self.loading).dot(&self.loading) + self.noise_variance
    }

    /// Per-entry gain `Cov(η, Q(a,s)) / (Var(η) + σ²_E)`.
    ///
    /// This is a view for inspection; the update itself goes through
    /// [`BeliefState::condition`].
    pub fn gains(&self, belief: &BeliefState) -> Vec<f64> {
        let cross = &belief.cov * &self.loading;
        let var = cross.dot(&self.loading) + self.noise_variance;
        cross.iter().map(|c| c / var).collect()
    }
}

/// Bayesian update of `belief` on an experience signal.
pub fn apply_experience_update(belief: &BeliefState, signal: &ExperienceSignal) -> Result<BeliefState> {
    if signal.loading.len() != belief.dim() {
        return Err(Error::DimensionMismatch {
            expected: belief.dim(),
            got: signal.loading.len(),
        });
    }
    let variance = signal.predictive_variance(belief);
    if !(variance >= MIN_SIGNAL_VARIANCE) {
        return Err(Error::DegenerateSignal { variance });
    }
    belief.condition(&signal.observation())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{build_prior, Grid, KernelSpec};
    use approx::assert_relative_eq;

    fn diag_belief(grid: Grid, mean: &[f64], var: &[f64]) -> BeliefState {
        BeliefState::from_parts(
            grid,
            DVector::from_column_slice(mean),
            DMatrix::from_diagonal(&DVector::from_column_slice(var)),
            0,
        )
        .unwrap()
    }

    #[test]
    fn myopic_signal_is_direct_observation() {
        let grid = Grid::new(2, 2);
        let belief = diag_belief(grid, &[0.0; 4], &[1.0; 4]);
        let sig = build_experience_signal(&belief, 1, 0, 1, 2.0, 0.0, 0.0, &[true, true]).unwrap();
        let mut expected = DVector::zeros(4);
        expected[grid.flat(1, 0)] = 1.0;
        assert_eq!(sig.loading, expected);
    }

    #[test]
    fn greedy_substitution_uses_argmax() {
        let grid = Grid::new(2, 2);
        // means at state 1: action 0 -> 3, action 1 -> 5
        let belief = diag_belief(grid, &[0.0, 3.0, 0.0, 5.0], &[1.0; 4]);
        let sig = build_experience_signal(&belief, 0, 0, 1, 1.0, 0.9, 0.0, &[true, true]).unwrap();
        assert_eq!(sig.greedy_action_at_new_state, 1);
        let mut expected = DVector::zeros(4);
        expected[grid.flat(0, 0)] = 1.0;
        expected[grid.flat(1, 1)] = -0.9;
        assert_eq!(sig.loading, expected);

        let masked = build_experience_signal(&belief, 0, 0, 1, 1.0, 0.9, 0.0, &[true, false]).unwrap();
        assert_eq!(masked.greedy_action_at_new_state, 0);
        assert!(matches!(
            build_experience_signal(&belief, 0, 0, 1, 1.0, 0.9, 0.0, &[false, false]),
            Err(Error::NoFeasibleAction { state: 1 })
        ));
    }

    #[test]
    fn coinciding_entries_merge() {
        let grid = Grid::new(2, 1);
        let belief = diag_belief(grid, &[1.0, 0.0], &[1.0, 1.0]);
        let sig = build_experience_signal(&belief, 0, 0, 0, 1.0, 0.9, 0.0, &[true, true]).unwrap();
        assert_relative_eq!(sig.loading[0], 0.1, epsilon = 1e-15);
        assert_eq!(sig.loading[1], 0.0);
    }

    #[test]
    fn ties_break_to_lowest_action() {
        let grid = Grid::new(3, 1);
        let belief = diag_belief(grid, &[2.0, 2.0, 2.0], &[1.0; 3]);
        assert_eq!(greedy_action(&belief, 0, &[true, true, true]).unwrap(), 0);
        assert_eq!(greedy_action(&belief, 0, &[false, true, true]).unwrap(), 1);
    }

    #[test]
    fn gain_under_diagonal_prior() {
        let grid = Grid::new(2, 2);
        let (s1, s2, beta) = (2.0, 3.0, 0.8);
        let mut var = [1.0; 4];
        var[grid.flat(0, 0)] = s1;
        var[grid.flat(1, 1)] = s2;
        let mut mean = [0.0; 4];
        mean[grid.flat(1, 1)] = 1.0;
        let belief = diag_belief(grid, &mean, &var);
        let sig = build_experience_signal(&belief, 0, 0, 1, 0.7, beta, 0.0, &[true, true]).unwrap();
        assert_eq!(sig.greedy_action_at_new_state, 1);
        let gains = sig.gains(&belief);
        assert_relative_eq!(gains[grid.flat(0, 0)], s1 / (s1 + beta * beta * s2), epsilon = 1e-14);

        let post = apply_experience_update(&belief, &sig).unwrap();
        let innovation = sig.innovation(&belief);
        for (i, g) in gains.iter().enumerate() {
            assert_relative_eq!(post.mean[i], belief.mean[i] + g * innovation, epsilon = 1e-12);
        }
        // Covariance recursion: Σ - gain · Cov(η, ·)
        let cross = &belief.cov * &sig.loading;
        for (i, g) in gains.iter().enumerate() {
            for j in 0..4 {
                let expected = belief.cov[(i, j)] - g * cross[j];
                assert_relative_eq!(post.cov[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_innovation_leaves_mean_unchanged() {
        let kernel = KernelSpec {
            action_coupling: 0.5,
            prior_variance: 2.0,
            prior_mean: 1.0,
            ..KernelSpec::default()
        };
        let mut belief = build_prior(&kernel, Grid::new(2, 2)).unwrap();
        belief.mean = DVector::from_column_slice(&[1.0, 2.0, 0.5, 4.0]);
        let u = belief.mean_at(0, 0) - 0.9 * belief.mean_at(1, 1);
        let sig = build_experience_signal(&belief, 0, 0, 1, u, 0.9, 0.1, &[true, true]).unwrap();
        assert_eq!(sig.innovation(&belief), 0.0);
        let post = apply_experience_update(&belief, &sig).unwrap();
        for i in 0..4 {
            assert_relative_eq!(post.mean[i], belief.mean[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn degenerate_signal_is_rejected() {
        let grid = Grid::new(2, 1);
        let belief = diag_belief(grid, &[0.0, 0.0], &[0.0, 0.0]);
        let sig = build_experience_signal(&belief, 0, 0, 0, 1.0, 0.5, 0.0, &[true, true]).unwrap();
        assert!(matches!(
            apply_experience_update(&belief, &sig),
            Err(Error::DegenerateSignal { .. })
        ));
    }

    #[test]
    fn invalid_beta_is_rejected() {
        let belief = diag_belief(Grid::new(2, 1), &[0.0, 0.0], &[1.0, 1.0]);
        assert!(build_experience_signal(&belief, 0, 0, 0, 1.0, 1.0, 0.0, &[true, true]).is_err());
    }
}
