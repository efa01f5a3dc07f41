use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smfe::dynamics::{belief_step_or_prior, mean_field_step, DecisionRule, Prescription};
use smfe::games::{InfectionParams, TechAdoptionParams};
use smfe::grid::GridTable;
use smfe::oracle::TinyGame;
use smfe::solver::{backward_pass, forward_pass, solve_stationary, ForwardOptions};
use smfe::spec::Horizon;
use smfe::stage::SolverConfig;

fn small() -> SolverConfig {
    SolverConfig {
        z_resolution: Some(20),
        value_tol: 1e-7,
        ..Default::default()
    }
}

// Starting tables on the scale of the values. Rougher starts can select a
// different stationary equilibrium.
#[test]
fn stationary_solution_does_not_depend_on_starting_tables() {
    let config = small();
    let specs = [
        InfectionParams::default().build(Horizon::Infinite).unwrap(),
        TechAdoptionParams::default().build(Horizon::Infinite).unwrap(),
    ];
    for spec in specs {
        let from_zero = solve_stationary(&spec, &config, None).unwrap();
        let grid = config.grid(&spec).unwrap();
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut random = |states: usize| {
                let values = (0..grid.len() * states).map(|_| rng.random_range(-1.0..1.0)).collect();
                GridTable::from_values(grid.clone(), states, values).unwrap()
            };
            let start = (random(spec.n_follower_states()), random(spec.n_leader_states()));
            let from_random = solve_stationary(&spec, &config, Some(start)).unwrap();
            let bound = 10.0 * config.value_tol;
            assert!(from_zero.follower.sup_distance(&from_random.follower) <= bound);
            assert!(from_zero.leader.sup_distance(&from_random.leader) <= bound);
        }
    }
}

#[test]
fn two_leader_types_use_a_joint_grid() {
    let game = TinyGame::random(4, 2, 2).unwrap();
    let config = game.solver_config();
    let solution = backward_pass(&game.spec, &config).unwrap();
    let grid = config.grid(&game.spec).unwrap();
    assert_eq!(grid.len(), grid.belief().len() * grid.mean_field().len());
    assert_eq!(grid.belief().len(), 5);
    assert_eq!(solution.generator.len(), 2);

    for (pi, z) in &game.initial_points {
        let path = forward_pass(&game.spec, &solution.generator, pi, z, &ForwardOptions::default()).unwrap();
        let mass: f64 = path.steps.last().unwrap().iter().map(|n| n.weight).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        for node in path.steps.iter().flatten() {
            assert!((node.belief.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(node.belief.iter().all(|&p| p >= 0.0));
        }
    }
}

#[test]
fn horizon_extension_only_prepends_stages() {
    let spec = InfectionParams::default().build(Horizon::Finite(3)).unwrap();
    let short = backward_pass(&spec, &small()).unwrap();
    let long = backward_pass(&spec.with_horizon(Horizon::Finite(5)), &small()).unwrap();
    // the last three stages of the longer game are the shorter game
    for t in 0..=3 {
        assert_eq!(short.tables.follower[t].values(), long.tables.follower[t + 2].values());
        assert_eq!(short.tables.leader[t].values(), long.tables.leader[t + 2].values());
    }
}

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0) + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn rule(rng: &mut ChaCha8Rng, states: usize, actions: usize) -> DecisionRule {
    let rows: Vec<Vec<f64>> = (0..states).map(|_| simplex(rng, actions)).collect();
    DecisionRule::from_rows(&rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dynamics_stay_on_the_simplex(game_seed in 0u64..50, draw in 0u64..1_000, types in 1usize..=2) {
        let spec = TinyGame::random(game_seed, types, 2).unwrap().spec;
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let pi = simplex(&mut rng, spec.n_leader_states());
        let z = simplex(&mut rng, spec.n_follower_states());
        let gamma = Prescription {
            leader: rule(&mut rng, spec.n_leader_states(), spec.n_leader_actions()),
            follower: rule(&mut rng, spec.n_follower_states(), spec.n_follower_actions()),
        };
        let next = mean_field_step(&spec, &pi, &z, &gamma);
        prop_assert!((next.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(next.iter().all(|&v| v >= 0.0));
        for a in 0..spec.n_leader_actions() {
            let (post, _) = belief_step_or_prior(&spec, &pi, &z, &gamma.leader, a, 1e-12);
            prop_assert!((post.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(post.iter().all(|&v| v >= 0.0));
        }
    }
}
