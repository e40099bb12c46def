//! Gaussian beliefs over the action-value table on a finite (action, state) grid.
//!
//! The table is flattened action-major: `flat = action * n_states + state`.
//! Every update goes through [`BeliefState::condition`], the single
//! linear-Gaussian conditioning path used by both learning channels.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{max_abs, project_psd, sorted_eigen, symmetrize};

/// Dimensions of the (action, state) grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub n_actions: usize,
    pub n_states: usize,
}

/// A position on the grid together with its flattened index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridIndex {
    pub action: usize,
    pub state: usize,
    pub flat: usize,
}

impl Grid {
    pub fn new(n_actions: usize, n_states: usize) -> Self {
        Self { n_actions, n_states }
    }

    pub fn dim(&self) -> usize {
        self.n_actions * self.n_states
    }

    pub fn flat(&self, action: usize, state: usize) -> usize {
        debug_assert!(action < self.n_actions && state < self.n_states);
        action * self.n_states + state
    }

    pub fn index(&self, action: usize, state: usize) -> Result<GridIndex> {
        if action >= self.n_actions {
            return Err(Error::IndexOutOfRange {
                index: action,
                limit: self.n_actions,
            });
        }
        if state >= self.n_states {
            return Err(Error::IndexOutOfRange {
                index: state,
                limit: self.n_states,
            });
        }
        Ok(GridIndex {
            action,
            state,
            flat: self.flat(action, state),
        })
    }

    pub fn unflatten(&self, flat: usize) -> Result<GridIndex> {
        if flat >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: flat,
                limit: self.dim(),
            });
        }
        Ok(GridIndex {
            action: flat / self.n_states,
            state: flat % self.n_states,
            flat,
        })
    }
}

/// Distance between state ids used by the prior kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum StateMetric {
    /// `|i - j|` on the state ids themselves.
    Index,
    /// Euclidean distance between per-state coordinate vectors, stored row-major
    /// with `dim` entries per state.
    Coordinates { dim: usize, coords: Vec<f64> },
    /// An explicitly declared `n_states × n_states` distance table (row-major).
    /// Nothing guarantees the resulting kernel is PSD; it is checked at construction.
    Table(Vec<f64>),
}

impl StateMetric {
    fn distance(&self, n_states: usize, i: usize, j: usize) -> f64 {
        match self {
            StateMetric::Index => (i as f64 - j as f64).abs(),
            StateMetric::Coordinates { dim, coords } => {
                let a = &coords[i * dim..(i + 1) * dim];
                let b = &coords[j * dim..(j + 1) * dim];
                libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
            }
            StateMetric::Table(table) => table[i * n_states + j],
        }
    }

    fn check(&self, n_states: usize) -> Result<()> {
        match self {
            StateMetric::Index => Ok(()),
            StateMetric::Coordinates { dim, coords } => {
                if *dim == 0 || coords.len() != dim * n_states {
                    return Err(Error::DimensionMismatch {
                        expected: dim * n_states,
                        got: coords.len(),
                    });
                }
                Ok(())
            }
            StateMetric::Table(table) => {
                if table.len() != n_states * n_states {
                    return Err(Error::DimensionMismatch {
                        expected: n_states * n_states,
                        got: table.len(),
                    });
                }
                if table.iter().any(|d| !d.is_finite() || *d < 0.0) {
                    return Err(invalid("state_metric", "distances must be finite and nonnegative"));
                }
                Ok(())
            }
        }
    }
}

/// Squared-exponential kernel over states times a two-level action coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    /// May be `f64::INFINITY` (every state perfectly correlated).
    pub state_length_scale: f64,
    /// Correlation between different actions at the same pair of states, in `[0, 1]`.
    pub action_coupling: f64,
    pub prior_variance: f64,
    pub prior_mean: f64,
    pub state_metric: StateMetric,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            state_length_scale: 1.0,
            action_coupling: 0.0,
            prior_variance: 1.0,
            prior_mean: 0.0,
            state_metric: StateMetric::Index,
        }
    }
}

impl KernelSpec {
    fn validate(&self, grid: Grid) -> Result<()> {
        if grid.n_actions == 0 || grid.n_states == 0 {
            return Err(invalid("grid", "need at least one action and one state"));
        }
        if !(self.state_length_scale > 0.0) {
            return Err(invalid("state_length_scale", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.action_coupling) {
            return Err(invalid("action_coupling", "must lie in [0, 1]"));
        }
        if !(self.prior_variance > 0.0 && self.prior_variance.is_finite()) {
            return Err(invalid("prior_variance", "must be positive and finite"));
        }
        if !self.prior_mean.is_finite() {
            return Err(invalid("prior_mean", "must be finite"));
        }
        self.state_metric.check(grid.n_states)
    }

    /// Kernel value between two grid points.
    pub fn covariance(&self, grid: Grid, a: GridIndex, b: GridIndex) -> f64 {
        let d = self.state_metric.distance(grid.n_states, a.state, b.state);
        let scaled = d / self.state_length_scale;
        let action_factor = if a.action == b.action {
            1.0
        } else {
            self.action_coupling
        };
        self.prior_variance * libm::exp(-0.5 * scaled * scaled) * action_factor
    }
}

/// A noisy linear observation `value = loading · Q + noise`.
///
/// Rows whose noise variance is `+∞` are treated as not acquired.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObservation {
    pub loading: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
    pub value: DVector<f64>,
}

impl LinearObservation {
    pub fn new(loading: DMatrix<f64>, noise_cov: DMatrix<f64>, value: DVector<f64>) -> Result<Self> {
        let m = loading.nrows();
        if noise_cov.nrows() != m || noise_cov.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: noise_cov.nrows(),
            });
        }
        if value.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: value.len(),
            });
        }
        if (0..m).any(|i| !(noise_cov[(i, i)] >= 0.0)) {
            return Err(invalid("noise_cov", "diagonal entries must be nonnegative"));
        }
        Ok(Self {
            loading,
            noise_cov,
            value,
        })
    }

    /// Independent rows with diagonal noise.
    pub fn diagonal(loading: DMatrix<f64>, noise_variances: &[f64], value: DVector<f64>) -> Result<Self> {
        let noise = DMatrix::from_diagonal(&DVector::from_column_slice(noise_variances));
        Self::new(loading, noise, value)
    }

    /// Drop rows whose noise variance is infinite.
    fn acquired(&self) -> Self {
        let keep: Vec<usize> = (0..self.loading.nrows())
            .filter(|&i| self.noise_cov[(i, i)].is_finite())
            .collect();
        if keep.len() == self.loading.nrows() {
            return self.clone();
        }
        let k = keep.len();
        Self {
            loading: DMatrix::from_fn(k, self.loading.ncols(), |r, c| self.loading[(keep[r], c)]),
            noise_cov: DMatrix::from_fn(k, k, |r, c| self.noise_cov[(keep[r], keep[c])]),
            value: DVector::from_fn(k, |r, _| self.value[keep[r]]),
        }
    }
}

/// Largest innovation-covariance condition number accepted by [`BeliefState::condition`].
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Multivariate Gaussian belief over the flattened Q table.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub grid: Grid,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub period: u64,
}

impl BeliefState {
    /// Prior implied by `kernel` on `grid`. Deterministic in its inputs.
    pub fn prior(kernel: &KernelSpec, grid: Grid) -> Result<Self> {
        kernel.validate(grid)?;
        let n = grid.dim();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let a = GridIndex {
                action: i / grid.n_states,
                state: i % grid.n_states,
                flat: i,
            };
            let b = GridIndex {
                action: j / grid.n_states,
                state: j % grid.n_states,
                flat: j,
            };
            kernel.covariance(grid, a, b)
        });
        let (values, _) = sorted_eigen(&cov);
        let min = values.last().copied().unwrap_or(0.0);
        if min < -1e-10 * kernel.prior_variance {
            return Err(Error::NonPsdKernel { min_eigenvalue: min });
        }
        Ok(Self {
            grid,
            mean: DVector::from_element(n, kernel.prior_mean),
            cov: project_psd(&cov),
            period: 0,
        })
    }

    pub fn from_parts(grid: Grid, mean: DVector<f64>, cov: DMatrix<f64>, period: u64) -> Result<Self> {
        let n = grid.dim();
        if mean.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: mean.len(),
            });
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cov.nrows(),
            });
        }
        Ok(Self {
            grid,
            mean,
            cov,
            period,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn mean_at(&self, action: usize, state: usize) -> f64 {
        self.mean[self.grid.flat(action, state)]
    }

    pub fn variance_at(&self, action: usize, state: usize) -> f64 {
        let i = self.grid.flat(action, state);
        self.cov[(i, i)]
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }

    /// Row-major copy of the covariance.
    pub fn cov_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.cov[(i, j)]);
            }
        }
        out
    }

    /// Check the symmetry and PSD invariants of the covariance.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Ok(());
        }
        let asym = max_abs(&(&self.cov - self.cov.transpose()));
        let tol = 1e-10 * (self.cov.trace().abs() / n as f64).max(f64::MIN_POSITIVE);
        if asym > tol {
            return Err(invalid("cov", "covariance is not symmetric"));
        }
        if (0..n).any(|i| self.cov[(i, i)] < 0.0) {
            return Err(invalid("cov", "negative variance on the diagonal"));
        }
        let (values, _) = sorted_eigen(&self.cov);
        let max = values[0];
        let min = values[n - 1];
        if min < -1e-8 * max.max(0.0) {
            return Err(invalid("cov", "covariance is not positive semidefinite"));
        }
        Ok(())
    }

    /// Posterior after observing `obs`. Rows with infinite noise are ignored;
    /// if none remain the belief is returned unchanged.
    pub fn condition(&self, obs: &LinearObservation) -> Result<Self> {
        if obs.loading.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: obs.loading.ncols(),
            });
        }
        let obs = obs.acquired();
        if obs.loading.nrows() == 0 {
            return Ok(self.clone());
        }
        let loading = &obs.loading;
        let cross = &self.cov * loading.transpose();
        let mut innovation_cov = loading * &cross + &obs.noise_cov;
        symmetrize(&mut innovation_cov);

        let (values, vectors) = sorted_eigen(&innovation_cov);
        let max = values[0];
        let min = values[values.len() - 1];
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_INNOVATION_CONDITION) {
            return Err(Error::DegenerateObservation { condition });
        }
        let mut scaled = vectors.clone();
        for (c, &v) in values.iter().enumerate() {
            scaled.column_mut(c).scale_mut(1.0 / v);
        }
        let inverse = scaled * vectors.transpose();
        let gain = &cross * inverse;

        let innovation = &obs.value - loading * &self.mean;
        let mean = &self.mean + &gain * innovation;
        let cov = &self.cov - &gain * cross.transpose();
        Ok(Self {
            grid: self.grid,
            mean,
            cov: project_psd(&cov),
            period: self.period,
        })
    }

    /// Mean and covariance of the Q values of every action at `state`.
    pub fn state_slice(&self, state: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let actions: Vec<usize> = (0..self.grid.n_actions).collect();
        self.slice(state, &actions)
    }

    /// Mean and covariance restricted to `actions` at `state`.
    pub fn slice(&self, state: usize, actions: &[usize]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if state >= self.grid.n_states {
            return Err(Error::IndexOutOfRange {
                index: state,
                limit: self.grid.n_states,
            });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.grid.n_actions) {
            return Err(Error::IndexOutOfRange {
                index: a,
                limit: self.grid.n_actions,
            });
        }
        let idx: Vec<usize> = actions.iter().map(|&a| self.grid.flat(a, state)).collect();
        let k = idx.len();
        let mean = DVector::from_fn(k, |r, _| self.mean[idx[r]]);
        let cov = DMatrix::from_fn(k, k, |r, c| self.cov[(idx[r], idx[c])]);
        Ok((mean, cov))
    }
}

/// Free-function form of [`BeliefState::prior`].
pub fn build_prior(kernel: &KernelSpec, grid: Grid) -> Result<BeliefState> {
    BeliefState::prior(kernel, grid)
}

/// Free-function form of [`BeliefState::condition`].
pub fn condition(belief: &BeliefState, obs: &LinearObservation) -> Result<BeliefState> {
    belief.condition(obs)
}

/// Eigenvalues below this fraction of the largest eigenvalue of `before` are
/// treated as zero by [`entropy_reduction`].
pub const PSEUDO_DET_CUTOFF: f64 = 1e-12;

/// `½ ln(det(before) / det(after))` in nats.
///
/// Singular directions are handled with pseudo-determinants: both matrices are
/// restricted to the support of `after` (eigenvalues above
/// [`PSEUDO_DET_CUTOFF`] times the largest eigenvalue of `before`).
pub fn entropy_reduction(before: &DMatrix<f64>, after: &DMatrix<f64>) -> Result<f64> {
    if before.shape() != after.shape() || before.nrows() != before.ncols() {
        return Err(Error::DimensionMismatch {
            expected: before.nrows(),
            got: after.nrows(),
        });
    }
    if before.nrows() == 0 {
        return Ok(0.0);
    }
    let mut before = before.clone();
    let mut after = after.clone();
    symmetrize(&mut before);
    symmetrize(&mut after);

    let (before_values, _) = sorted_eigen(&before);
    let scale = before_values[0].max(0.0);
    let (gap_values, _) = sorted_eigen(&(&before - &after));
    let worst = gap_values[gap_values.len() - 1];
    if worst < -1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::OrderingViolation { eigenvalue: worst });
    }
    if scale <= 0.0 {
        return Ok(0.0);
    }

    let cutoff = PSEUDO_DET_CUTOFF * scale;
    let (after_values, after_vectors) = sorted_eigen(&after);
    let support: Vec<usize> = (0..after_values.len()).filter(|&i| after_values[i] > cutoff).collect();
    if support.is_empty() {
        return Ok(0.0);
    }
    let basis = DMatrix::from_fn(after.nrows(), support.len(), |r, c| after_vectors[(r, support[c])]);
    let restricted = basis.transpose() * &before * &basis;
    let (restricted_values, _) = sorted_eigen(&restricted);
    let log_before: f64 = restricted_values.iter().map(|v| libm::log(v.max(cutoff))).sum();
    let log_after: f64 = support.iter().map(|&i| libm::log(after_values[i])).sum();
    Ok((0.5 * (log_before - log_after)).max(0.0))
}
