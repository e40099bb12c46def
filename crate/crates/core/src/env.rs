//! Finite MDPs with known primitives and a value-iteration oracle for the
//! optimal action values.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Finite MDP. Tables are action-major: `utility[a * n_states + s]`,
/// `transition[(a * n_states + s) * n_states + s_next]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    n_states: usize,
    n_actions: usize,
    utility: Vec<f64>,
    transition: Vec<f64>,
    feasible: Vec<bool>,
    beta: f64,
    initial: Vec<f64>,
}

const ROW_TOL: f64 = 1e-12;

impl MdpSpec {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        utility: Vec<f64>,
        transition: Vec<f64>,
        feasible: Vec<bool>,
        beta: f64,
        initial_state_distribution: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("mdp", "need at least one state and one action"));
        }
        let pairs = n_states * n_actions;
        for (got, expected) in [
            (utility.len(), pairs),
            (transition.len(), pairs * n_states),
            (feasible.len(), pairs),
            (initial_state_distribution.len(), n_states),
        ] {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(invalid("beta", "must lie in [0, 1)"));
        }
        for s in 0..n_states {
            if !(0..n_actions).any(|a| feasible[a * n_states + s]) {
                return Err(Error::NoFeasibleAction { state: s });
            }
        }
        for a in 0..n_actions {
            for s in 0..n_states {
                let i = a * n_states + s;
                if feasible[i] && !utility[i].is_finite() {
                    return Err(invalid("utility", "feasible entries must be finite"));
                }
                let row = &transition[i * n_states..(i + 1) * n_states];
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_TOL {
                    return Err(Error::TransitionRow {
                        action: a,
                        state: s,
                        sum,
                    });
                }
            }
        }
        let total: f64 = initial_state_distribution.iter().sum();
        if initial_state_distribution.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(invalid("initial_state_distribution", "must be a probability vector"));
        }
        Ok(Self {
            n_states,
            n_actions,
            utility,
            transition,
            feasible,
            beta,
            initial: initial_state_distribution,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn utility(&self, action: usize, state: usize) -> f64 {
        self.utility[action * self.n_states + state]
    }

    pub fn is_feasible(&self, action: usize, state: usize) -> bool {
        self.feasible[action * self.n_states + state]
    }

    /// Feasibility of every action at `state`.
    pub fn feasible_at(&self, state: usize) -> Vec<bool> {
        (0..self.n_actions).map(|a| self.is_feasible(a, state)).collect()
    }

    pub fn transition_row(&self, action: usize, state: usize) -> &[f64] {
        let i = action * self.n_states + state;
        &self.transition[i * self.n_states..(i + 1) * self.n_states]
    }

    pub fn initial_state_distribution(&self) -> &[f64] {
        &self.initial
    }

    pub fn utility_table(&self) -> &[f64] {
        &self.utility
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    pub fn feasibility_table(&self) -> &[bool] {
        &self.feasible
    }

    /// Sample the next state from `F(·|state, action)` by inverse CDF.
    ///
    /// A draw exactly on a CDF boundary selects the lower state.
    pub fn step(&self, state: usize, action: usize, uniform_draw: f64) -> Result<usize> {
        if state >= self.n_states {
            return Err(Error::IndexOutOfRange {
                index: state,
                limit: self.n_states,
            });
        }
        if action >= self.n_actions {
            return Err(Error::IndexOutOfRange {
                index: action,
                limit: self.n_actions,
            });
        }
        if !self.is_feasible(action, state) {
            return Err(Error::InfeasibleAction { action, state });
        }
        Ok(sample_index(self.transition_row(action, state), uniform_draw))
    }
}

/// Inverse-CDF sampling over a probability vector (right-closed intervals,
/// zero-probability entries never selected).
pub fn sample_index(probabilities: &[f64], uniform_draw: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        last = i;
        if uniform_draw <= cumulative {
            return i;
        }
    }
    last
}

/// Optimal action values, state values and policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    n_states: usize,
    /// Action-major; infeasible entries hold `f64::NEG_INFINITY`.
    pub q_star: Vec<f64>,
    pub v_star: Vec<f64>,
    pub pi_star: Vec<usize>,
    pub solver_residual: f64,
    pub iterations: usize,
}

impl GroundTruth {
    pub fn q(&self, action: usize, state: usize) -> f64 {
        self.q_star[action * self.n_states + state]
    }

    /// Q values of every action at `state`.
    pub fn q_at_state(&self, state: usize, n_actions: usize) -> Vec<f64> {
        (0..n_actions).map(|a| self.q(a, state)).collect()
    }
}

fn feasible_max(mdp: &MdpSpec, q: &[f64], state: usize) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    let mut found = false;
    for a in 0..mdp.n_actions {
        if mdp.is_feasible(a, state) {
            let v = q[a * mdp.n_states + state];
            if !found || v > best.1 {
                best = (a, v);
                found = true;
            }
        }
    }
    best
}

fn bellman(mdp: &MdpSpec, v: &[f64]) -> Vec<f64> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut out = alloc::vec![f64::NEG_INFINITY; ns * na];
    for a in 0..na {
        for s in 0..ns {
            if !mdp.is_feasible(a, s) {
                continue;
            }
            let expected: f64 = mdp
                .transition_row(a, s)
                .iter()
                .zip(v)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, x)| p * x)
                .sum();
            out[a * ns + s] = mdp.utility(a, s) + mdp.beta * expected;
        }
    }
    out
}

/// Largest `|Q(a,s) - u(a,s) - β E[V(s')]|` over feasible pairs, with `V` the
/// feasible maximum of `q`.
pub fn bellman_residual(mdp: &MdpSpec, q: &[f64]) -> f64 {
    let v: Vec<f64> = (0..mdp.n_states).map(|s| feasible_max(mdp, q, s).1).collect();
    let next = bellman(mdp, &v);
    q.iter()
        .zip(&next)
        .zip(&mdp.feasible)
        .filter(|(_, &f)| f)
        .map(|((a, b), _)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Value iteration on Q from `Q ≡ 0`, stopped once the sup-norm change is at
/// most `tol (1 - β) / (2β)`.
pub fn solve_ground_truth(mdp: &MdpSpec, tol: f64, max_iter: usize) -> Result<GroundTruth> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let stop = if mdp.beta > 0.0 {
        tol * (1.0 - mdp.beta) / (2.0 * mdp.beta)
    } else {
        f64::INFINITY
    };
    let mut q: Vec<f64> = (0..ns * na)
        .map(|i| if mdp.feasible[i] { 0.0 } else { f64::NEG_INFINITY })
        .collect();
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let v: Vec<f64> = (0..ns).map(|s| feasible_max(mdp, &q, s).1).collect();
        let next = bellman(mdp, &v);
        change = next
            .iter()
            .zip(&q)
            .zip(&mdp.feasible)
            .filter(|(_, &f)| f)
            .map(|((a, b), _)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        iterations += 1;
        if change <= stop {
            break;
        }
    }
    if change > stop {
        return Err(Error::GroundTruthNonConvergence {
            iterations,
            residual: change,
        });
    }
    let (pi_star, v_star) = (0..ns).map(|s| feasible_max(mdp, &q, s)).unzip();
    let solver_residual = bellman_residual(mdp, &q);
    Ok(GroundTruth {
        n_states: ns,
        q_star: q,
        v_star,
        pi_star,
        solver_residual,
        iterations,
    })
}

/// Bandit with the given arm means. With `noise_sd > 0` there are two
/// equally likely i.i.d. shock states adding `±noise_sd` to every arm.
pub fn make_bandit(means: &[f64], noise_sd: f64, beta: f64) -> Result<MdpSpec> {
    if means.len() < 2 {
        return Err(invalid("means", "a bandit needs at least two arms"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(invalid("noise_sd", "must be finite and nonnegative"));
    }
    let na = means.len();
    if noise_sd == 0.0 {
        return MdpSpec::new(
            1,
            na,
            means.to_vec(),
            alloc::vec![1.0; na],
            alloc::vec![true; na],
            beta,
            alloc::vec![1.0],
        );
    }
    let ns = 2;
    let shocks = [noise_sd, -noise_sd];
    let mut utility = Vec::with_capacity(na * ns);
    for &m in means {
        for shock in shocks {
            utility.push(m + shock);
        }
    }
    MdpSpec::new(
        ns,
        na,
        utility,
        alloc::vec![0.5; na * ns * ns],
        alloc::vec![true; na * ns],
        beta,
        alloc::vec![0.5, 0.5],
    )
}

/// Gridworld actions in id order.
pub const GRID_MOVES: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

/// `width × height` grid, state id `y * width + x`, actions up/down/left/right
/// (moves off the grid stay put). Every move outside the goal costs
/// `step_cost`; any action at the goal is free and returns to cell 0.
pub fn make_gridworld(width: usize, height: usize, goal: usize, step_cost: f64, beta: f64) -> Result<MdpSpec> {
    let ns = width * height;
    if ns < 2 {
        return Err(invalid("gridworld", "needs at least two cells"));
    }
    if goal >= ns || goal == 0 {
        return Err(invalid("goal", "must be a cell other than the start cell 0"));
    }
    if !step_cost.is_finite() {
        return Err(invalid("step_cost", "must be finite"));
    }
    let na = GRID_MOVES.len();
    let mut utility = alloc::vec![0.0; na * ns];
    let mut transition = alloc::vec![0.0; na * ns * ns];
    for (a, (dx, dy)) in GRID_MOVES.iter().enumerate() {
        for s in 0..ns {
            let i = a * ns + s;
            let next = if s == goal {
                0
            } else {
                utility[i] = -step_cost;
                let (x, y) = ((s % width) as i64, (s / width) as i64);
                let nx = (x + dx).clamp(0, width as i64 - 1);
                let ny = (y + dy).clamp(0, height as i64 - 1);
                (ny * width as i64 + nx) as usize
            };
            transition[i * ns + next] = 1.0;
        }
    }
    let mut initial = alloc::vec![0.0; ns];
    initial[0] = 1.0;
    MdpSpec::new(ns, na, utility, transition, alloc::vec![true; na * ns], beta, initial)
}

/// Grid coordinates `(x, y)` of each gridworld cell, row-major.
pub fn gridworld_coordinates(width: usize, height: usize) -> Vec<f64> {
    (0..width * height)
        .flat_map(|s| [(s % width) as f64, (s / width) as f64])
        .collect()
}

/// Partial-equilibrium consumption-savings problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionSavings {
    pub asset_grid_size: usize,
    pub asset_max: f64,
    pub income_values: Vec<f64>,
    /// Row-major `n_income × n_income` Markov matrix.
    pub income_transition: Vec<f64>,
    pub crra_sigma: f64,
    pub rate: f64,
    pub beta: f64,
}

impl ConsumptionSavings {
    pub fn asset_grid(&self) -> Vec<f64> {
        let n = self.asset_grid_size;
        (0..n).map(|i| self.asset_max * i as f64 / (n - 1) as f64).collect()
    }

    /// CRRA utility; the log limit is used when `σ` is within `1e-12` of one.
    pub fn utility(&self, consumption: f64) -> f64 {
        if (self.crra_sigma - 1.0).abs() <= 1e-12 {
            libm::log(consumption)
        } else {
            libm::pow(consumption, 1.0 - self.crra_sigma) / (1.0 - self.crra_sigma)
        }
    }

    /// `(asset index, income index)` of state `s`.
    pub fn decode_state(&self, s: usize) -> (usize, usize) {
        (s / self.income_values.len(), s % self.income_values.len())
    }
}

/// States are `(asset i, income j)` flattened as `i * n_income + j`; action
/// `k` chooses next period's asset `grid[k]`. Consumption is
/// `(1 + r) a_i + y_j - a_k`, feasible only when positive.
pub fn make_consumption_savings(params: &ConsumptionSavings) -> Result<MdpSpec> {
    let p = params;
    if p.asset_grid_size < 2 {
        return Err(invalid("asset_grid_size", "needs at least two points"));
    }
    let ny = p.income_values.len();
    if ny == 0 {
        return Err(invalid("income_values", "needs at least one income state"));
    }
    if p.income_transition.len() != ny * ny {
        return Err(Error::DimensionMismatch {
            expected: ny * ny,
            got: p.income_transition.len(),
        });
    }
    if !(p.crra_sigma > 0.0) {
        return Err(invalid("crra_sigma", "must be positive"));
    }
    if !(p.asset_max > 0.0) {
        return Err(invalid("asset_max", "must be positive"));
    }
    if !(p.rate > -1.0) || !(p.rate * p.beta < 1.0) {
        return Err(invalid("rate", "need rate > -1 and rate * beta < 1"));
    }
    let grid = p.asset_grid();
    let na = p.asset_grid_size;
    let ns = na * ny;
    let mut utility = alloc::vec![0.0; na * ns];
    let mut feasible = alloc::vec![false; na * ns];
    let mut transition = alloc::vec![0.0; na * ns * ns];
    for k in 0..na {
        for s in 0..ns {
            let (i, j) = p.decode_state(s);
            let idx = k * ns + s;
            let c = (1.0 + p.rate) * grid[i] + p.income_values[j] - grid[k];
            if c > 0.0 {
                feasible[idx] = true;
                utility[idx] = p.utility(c);
            }
            for jn in 0..ny {
                transition[idx * ns + k * ny + jn] = p.income_transition[j * ny + jn];
            }
        }
    }
    let mut initial = alloc::vec![0.0; ns];
    // start with no assets, income drawn uniformly
    for p0 in initial.iter_mut().take(ny) {
        *p0 = 1.0 / ny as f64;
    }
    MdpSpec::new(ns, na, utility, transition, feasible, p.beta, initial)
}
