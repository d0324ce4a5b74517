mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dtpp::maxsum::{decode_assignment, run_maxsum, MaxSumConfig};
use dtpp::momdp::{belief_update, build_grid_momdp, Cell, GridAction, GridWorldSpec, TransitionMode};
use dtpp::resolution::{forward_dp, LocalConfig};
use dtpp::scenario::ScenarioConfig;
use dtpp::sim::run_episode;
use dtpp::task::{marginal_from_probs, poisson_binomial, reward_term};

use common::*;

fn probs(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 0..=max)
}

fn rewards(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..20.0, n + 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn count_distribution_is_a_distribution(p in probs(12)) {
        let dist = poisson_binomial(&p);
        prop_assert_eq!(dist.len(), p.len() + 1);
        prop_assert!(dist.iter().all(|x| *x >= 0.0));
        prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mean: f64 = dist.iter().enumerate().map(|(i, x)| i as f64 * x).sum();
        prop_assert!((mean - p.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn count_distribution_matches_enumeration(p in probs(8)) {
        for (a, b) in poisson_binomial(&p).iter().zip(enumerate_counts(&p)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn marginal_is_the_gain_from_one_agent(p in probs(6), r in rewards(7), pi in 0.0f64..=1.0) {
        let reward = |i: usize| r[i];
        let with = {
            let mut all = p.clone();
            all.push(pi);
            reward_term(reward, &all)
        };
        let without = reward_term(reward, &p);
        let delta = marginal_from_probs(reward, &p);
        prop_assert!((with - without - pi * delta).abs() < 1e-9);
    }

    #[test]
    fn belief_stays_normalized(
        priors in prop::collection::vec(0.05f64..0.95, 1..=3),
        x in 0usize..4,
        y in 0usize..3,
        a in 0usize..5,
        seed in any::<u64>(),
    ) {
        let mut spec = GridWorldSpec::new(4, 3);
        spec.uncertain_cells = [Cell::new(1, 1), Cell::new(2, 1), Cell::new(3, 2)][..priors.len()].to_vec();
        prop_assume!(spec.uncertain_index(Cell::new(x, y)).is_none());
        let model = build_grid_momdp(&spec, TransitionMode::Planning).unwrap();
        let belief = spec.belief_from_priors(&priors).unwrap();
        let s = spec.state_of(Cell::new(x, y));
        let action = GridAction::from_index(a).unwrap();
        let e = (seed % spec.num_env_states() as u64) as usize;
        let next = spec.step(s, action, e);
        for o in 0..spec.num_env_states() {
            if let Ok(post) = belief_update(&model, &belief, s, a, next, o) {
                prop_assert!((post.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(post.probs().iter().all(|p| *p >= 0.0));
            }
        }
    }

    #[test]
    fn maxsum_is_exact_on_trees(seed in any::<u64>()) {
        let graph = random_tree_graph(&mut ChaCha8Rng::seed_from_u64(seed), 6);
        let messages = run_maxsum(&graph, &MaxSumConfig::default());
        prop_assert!(messages.converged);
        let (best, value) = brute_force_argmax(&graph);
        let decoded = decode_assignment(&graph, &messages);
        prop_assert!((graph.objective(&decoded) - value).abs() < 1e-9);
        prop_assert_eq!(decoded, best);
    }

    #[test]
    fn trimming_never_changes_the_plan(seed in any::<u64>()) {
        let case = random_conflict(&mut ChaCha8Rng::seed_from_u64(seed));
        let trimmed = LocalConfig { lookahead: 2, ..LocalConfig::default() };
        let full = LocalConfig { trim_dominated: false, ..trimmed };
        let a = forward_dp(&case.agents, &case.execution, case.t, &trimmed);
        let b = forward_dp(&case.agents, &case.execution, case.t, &full);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.value, b.value);
                prop_assert_eq!(a.sequence, b.sequence);
                prop_assert!(a.stats.kept <= b.stats.kept);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn scenario_toml_round_trips(seed in any::<u64>()) {
        let cfg = random_scenario(&mut ChaCha8Rng::seed_from_u64(seed), seed, 4, 20);
        let text = cfg.to_toml_string().unwrap();
        prop_assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn episodes_never_collide(seed in any::<u64>()) {
        let cfg = random_scenario(&mut ChaCha8Rng::seed_from_u64(seed), seed, 4, 25);
        let episode = run_episode(&cfg).unwrap();
        for r in &episode.records {
            for i in 0..r.next_states.len() {
                for j in i + 1..r.next_states.len() {
                    prop_assert_ne!(r.states[i], r.states[j]);
                    prop_assert_ne!(r.next_states[i], r.next_states[j]);
                }
            }
            prop_assert!((r.belief.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
