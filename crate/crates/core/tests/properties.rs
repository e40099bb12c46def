//! Property tests for the invariants every module promises.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reasoning_agent_core::env::sample_index;
use reasoning_agent_core::reasoning::plan_reasoning;
use reasoning_agent_core::{
    apply_reasoning_update, entropy_reduction, make_bandit, make_consumption_savings, make_gridworld, policy_entropy,
    run_episode, softmax_policy, solve_ground_truth, solve_period, synthesize_reasoning_signal, water_fill,
    AgentConfig, BeliefState, ConsumptionSavings, Grid, KernelSpec, LinearObservation, ObjectiveParams, SolverConfig,
    StateMetric,
};

fn psd_from(entries: &[f64], n: usize, floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| entries[i * n + j]);
    &a * a.transpose() + DMatrix::identity(n, n) * floor
}

fn belief_strategy(n: usize) -> impl Strategy<Value = BeliefState> {
    (
        prop::collection::vec(-1.0f64..1.0, n * n),
        prop::collection::vec(-2.0f64..2.0, n),
    )
        .prop_map(move |(a, m)| {
            BeliefState::from_parts(Grid::new(n, 1), DVector::from_vec(m), psd_from(&a, n, 0.05), 0).unwrap()
        })
}

fn observation_strategy(rows: usize, n: usize) -> impl Strategy<Value = LinearObservation> {
    (
        prop::collection::vec(-1.0f64..1.0, rows * n),
        prop::collection::vec(0.05f64..2.0, rows),
        prop::collection::vec(-3.0f64..3.0, rows),
    )
        .prop_map(move |(l, noise, y)| {
            LinearObservation::diagonal(DMatrix::from_row_slice(rows, n, &l), &noise, DVector::from_vec(y)).unwrap()
        })
}

fn stack(a: &LinearObservation, b: &LinearObservation) -> LinearObservation {
    let (ra, rb, n) = (a.loading.nrows(), b.loading.nrows(), a.loading.ncols());
    let loading = DMatrix::from_fn(ra + rb, n, |r, c| {
        if r < ra {
            a.loading[(r, c)]
        } else {
            b.loading[(r - ra, c)]
        }
    });
    let noise = DMatrix::from_fn(ra + rb, ra + rb, |r, c| match (r < ra, c < ra) {
        (true, true) => a.noise_cov[(r, c)],
        (false, false) => b.noise_cov[(r - ra, c - ra)],
        _ => 0.0,
    });
    let value = DVector::from_fn(ra + rb, |r, _| if r < ra { a.value[r] } else { b.value[r - ra] });
    LinearObservation::new(loading, noise, value).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sequential_and_stacked_conditioning_agree(
        belief in belief_strategy(4),
        first in observation_strategy(2, 4),
        second in observation_strategy(1, 4),
    ) {
        let sequential = belief.condition(&first).unwrap().condition(&second).unwrap();
        let stacked = belief.condition(&stack(&first, &second)).unwrap();
        prop_assert!((sequential.mean - &stacked.mean).amax() < 1e-8);
        prop_assert!((sequential.cov - &stacked.cov).amax() < 1e-8);
    }

    #[test]
    fn conditioning_never_raises_a_variance(belief in belief_strategy(4), obs in observation_strategy(2, 4)) {
        let post = belief.condition(&obs).unwrap();
        for i in 0..4 {
            prop_assert!(post.cov[(i, i)] <= belief.cov[(i, i)] + 1e-12);
        }
        prop_assert!(post.check_invariants().is_ok());
    }

    #[test]
    fn unacquired_rows_leave_the_belief_alone(belief in belief_strategy(3), obs in observation_strategy(2, 3)) {
        let mut silent = obs.clone();
        for i in 0..2 {
            silent.noise_cov[(i, i)] = f64::INFINITY;
        }
        prop_assert_eq!(belief.condition(&silent).unwrap(), belief);
    }

    #[test]
    fn prior_is_symmetric_psd(
        n_actions in 1usize..4,
        n_states in 1usize..6,
        length in 0.1f64..5.0,
        coupling in 0.0f64..=1.0,
        variance in 0.1f64..10.0,
    ) {
        let kernel = KernelSpec {
            state_length_scale: length,
            action_coupling: coupling,
            prior_variance: variance,
            prior_mean: 0.0,
            state_metric: StateMetric::Index,
        };
        let prior = BeliefState::prior(&kernel, Grid::new(n_actions, n_states)).unwrap();
        prop_assert!(prior.check_invariants().is_ok());
        prop_assert_eq!(&prior, &BeliefState::prior(&kernel, Grid::new(n_actions, n_states)).unwrap());
    }

    #[test]
    fn water_fill_is_self_consistent(
        mut eigs in prop::collection::vec(0.01f64..10.0, 1..6),
        kappa in 0.01f64..5.0,
        w in 0.0f64..2.0,
        delta in 0.0f64..10.0,
        h in 0.0f64..1.0,
    ) {
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let wf = water_fill(&eigs, kappa, w, delta, h).unwrap();
        prop_assume!(!wf.no_benefit);
        for ((&prior, &target), &noise) in eigs.iter().zip(&wf.target_eigenvalues).zip(&wf.noise_variances) {
            prop_assert!(target <= prior);
            prop_assert!((target - prior.min(wf.threshold)).abs() <= 1e-12 * prior);
            if noise.is_finite() {
                // 1/target = 1/prior + 1/noise
                let implied = 1.0 / (1.0 / prior + 1.0 / noise);
                prop_assert!((implied - target).abs() <= 1e-9 * target);
            } else {
                prop_assert!(prior <= wf.threshold);
            }
        }
    }

    #[test]
    fn realized_posterior_hits_the_targets_and_pays_the_cost(
        belief in belief_strategy(3),
        kappa in 0.05f64..2.0,
        w in 0.0f64..1.0,
        delta in 0.0f64..5.0,
        h in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let actions = [0, 1, 2];
        let plan = plan_reasoning(&belief, 0, &actions, kappa, w, delta, h).unwrap();
        prop_assume!(!plan.no_benefit);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..plan.active_directions()).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let truth: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let signal = synthesize_reasoning_signal(&plan, &truth, &draws).unwrap();
        let post = apply_reasoning_update(&belief, &signal).unwrap();

        let mut eigs: Vec<f64> = post.cov.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (got, want) in eigs.iter().zip(&plan.target_eigenvalues) {
            prop_assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{got} vs {want}");
        }
        let reduction = entropy_reduction(&belief.cov, &post.cov).unwrap();
        prop_assert!((reduction - plan.info_cost_nats).abs() < 1e-8);
    }

    #[test]
    fn plan_ignores_the_mean(belief in belief_strategy(3), shift in prop::collection::vec(-5.0f64..5.0, 3)) {
        let shifted = BeliefState::from_parts(
            belief.grid, &belief.mean + DVector::from_vec(shift), belief.cov.clone(), 0).unwrap();
        let a = plan_reasoning(&belief, 0, &[0, 1, 2], 0.5, 0.1, 1.0, 0.2).unwrap();
        let b = plan_reasoning(&shifted, 0, &[0, 1, 2], 0.5, 0.1, 1.0, 0.2).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn entropy_rises_with_temperature(q in prop::collection::vec(-3.0f64..3.0, 2..6), d1 in 0.0f64..20.0, d2 in 0.0f64..20.0) {
        let feasible = vec![true; q.len()];
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let h_lo = policy_entropy(&softmax_policy(&q, &feasible, lo).unwrap());
        let h_hi = policy_entropy(&softmax_policy(&q, &feasible, hi).unwrap());
        prop_assert!(h_lo <= h_hi + 1e-12);
    }

    #[test]
    fn softmax_ignores_constant_shifts(q in prop::collection::vec(-3.0f64..3.0, 2..6), c in -100.0f64..100.0, delta in 0.01f64..10.0) {
        let feasible = vec![true; q.len()];
        let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
        let a = softmax_policy(&q, &feasible, delta).unwrap();
        let b = softmax_policy(&shifted, &feasible, delta).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_a_distribution_on_feasible_actions(
        q in prop::collection::vec(-1e3f64..1e3, 3),
        mask in prop::collection::vec(any::<bool>(), 3),
        delta in 0.0f64..1e4,
    ) {
        prop_assume!(mask.iter().any(|&m| m));
        let p = softmax_policy(&q, &mask, delta).unwrap();
        prop_assert!(((p.iter().sum::<f64>()) - 1.0).abs() < 1e-12);
        for (pi, &m) in p.iter().zip(&mask) {
            prop_assert!(pi.is_finite() && *pi >= 0.0);
            if !m {
                prop_assert_eq!(*pi, 0.0);
            }
        }
    }

    #[test]
    fn period_solution_satisfies_complementary_slackness(
        belief in belief_strategy(3),
        kappa in 0.05f64..2.0,
        w in 0.0f64..1.0,
        h in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let params = ObjectiveParams { kappa, w, h, beta: 0.9, costless_reasoning: false };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..3).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let truth: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sol = solve_period(&belief, 0, &[true; 3], &params, &truth, &draws, &SolverConfig::default()).unwrap();
        prop_assert!(((sol.policy.iter().sum::<f64>()) - 1.0).abs() < 1e-12);
        prop_assert!(sol.delta >= 0.0);
        if sol.status != reasoning_agent_core::SolveStatus::Capped {
            prop_assert!(sol.entropy >= sol.entropy_bound - 1e-6);
            prop_assert!(sol.delta * (sol.entropy - sol.entropy_bound) <= 1e-6);
        }
        prop_assert!(sol.posterior.check_invariants().is_ok());
    }

    #[test]
    fn step_frequencies_match_the_transition_row(row in prop::collection::vec(0.01f64..1.0, 2..5), seed in any::<u64>()) {
        let total: f64 = row.iter().sum();
        let p: Vec<f64> = row.iter().map(|v| v / total).collect();
        let n = 100_000;
        let mut counts = vec![0usize; p.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            counts[sample_index(&p, rng.random::<f64>())] += 1;
        }
        for (c, pi) in counts.iter().zip(&p) {
            let se = (pi * (1.0 - pi) / n as f64).sqrt();
            // 4 standard errors keeps the per-case false alarm rate near 1e-4
            prop_assert!((*c as f64 / n as f64 - pi).abs() < 4.0 * se, "{c} vs {pi}");
        }
    }
}

/// δ can only fall (weakly) when information gets cheaper.
#[test]
fn temperature_weakly_falls_with_cheaper_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let a: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let belief = BeliefState::from_parts(Grid::new(3, 1), mean.clone(), psd_from(&a, 3, 0.05), 0).unwrap();
        let truth: Vec<f64> = mean.iter().copied().collect();
        let zeros = [0.0; 3];
        let config = SolverConfig {
            mean_reading: reasoning_agent_core::MeanReading::PreReasoning,
            ..Default::default()
        };
        let mut last = f64::INFINITY;
        for kappa in [2.0, 1.0, 0.5, 0.25, 0.1] {
            let params = ObjectiveParams {
                kappa,
                w: 0.05,
                h: 0.2,
                beta: 0.9,
                costless_reasoning: false,
            };
            let sol = solve_period(&belief, 0, &[true; 3], &params, &truth, &zeros, &config).unwrap();
            assert!(
                sol.delta <= last * (1.0 + 1e-6) + 1e-9,
                "kappa {kappa}: {} after {last}",
                sol.delta
            );
            last = sol.delta;
        }
    }
}

#[test]
fn factories_produce_valid_mdps_with_accurate_ground_truth() {
    let tol = 1e-10;
    let mdps = [
        make_bandit(&[0.0, 1.0, 0.5], 0.0, 0.9).unwrap(),
        make_bandit(&[0.0, 1.0], 0.3, 0.9).unwrap(),
        make_gridworld(3, 3, 8, -1.0, 0.9).unwrap(),
        make_consumption_savings(&ConsumptionSavings {
            asset_grid_size: 6,
            asset_max: 5.0,
            income_values: vec![0.5, 1.5],
            income_transition: vec![0.8, 0.2, 0.2, 0.8],
            crra_sigma: 2.0,
            rate: 0.02,
            beta: 0.9,
        })
        .unwrap(),
    ];
    for mdp in &mdps {
        let truth = solve_ground_truth(mdp, tol, 1_000_000).unwrap();
        assert!(truth.solver_residual <= 10.0 * tol);
        for s in 0..mdp.n_states() {
            assert!(mdp.feasible_at(s).iter().any(|&f| f));
        }
    }
}

/// Noiseless experience on a deterministic environment: the temporal-difference
/// residual shrinks as the agent accumulates experience.
#[test]
fn experience_residual_shrinks_on_deterministic_mdp() {
    let mdp = make_gridworld(2, 2, 3, -1.0, 0.9).unwrap();
    let config = AgentConfig {
        kernel: KernelSpec {
            prior_variance: 25.0,
            ..Default::default()
        },
        kappa: 5.0,
        w: 0.0,
        h: 0.05,
        experience_noise_var: 0.0,
        horizon: 10_000,
        seed: 11,
        ..Default::default()
    };
    let episode = run_episode(&mdp, &config).unwrap();
    let residuals: Vec<f64> = episode
        .records
        .iter()
        .filter_map(|r| r.experience_innovation())
        .map(f64::abs)
        .collect();
    let head: f64 = residuals[..100].iter().sum::<f64>() / 100.0;
    let tail: f64 = residuals[residuals.len() - 100..].iter().sum::<f64>() / 100.0;
    assert!(tail < head, "first 100 mean {head}, last 100 mean {tail}");
}
