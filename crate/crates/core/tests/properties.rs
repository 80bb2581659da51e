mod common;

use std::collections::{BTreeSet, VecDeque};

use proptest::prelude::*;
use rand::Rng;
use sgcheck::engines::{
    best_response_value, bounded_reach, csg_zero_sum_reach, mdp_max_reach, tsg_zero_sum_reach, EngineSettings,
    Objective,
};
use sgcheck::game::{as_mdp, coalition_view, validate, CoalitionSpec, Distribution, GameModel, Player, StateSet};
use sgcheck::matrix::{
    duality_gap, select_equilibrium, solve_bimatrix_all_ne, solve_correlated_eq, solve_matrix_game, BimatrixGame,
    Criterion, Matrix,
};
use sgcheck::query::{Optimum, Query};
use sgcheck::{parse_game, parse_game_bytes, parse_query, print_query, serialize_game, PlayerNames};

use common::*;

fn goal_of(m: &GameModel, name: &str) -> StateSet {
    StateSet::from_states(m.states, m.labels[name].iter().copied())
}

fn random_model(seed: u64) -> GameModel {
    let mut r = rng(seed);
    let n = r.gen_range(1..=6);
    let players = r.gen_range(1..=3);
    let mut m = if r.gen_bool(0.5) {
        random_tsg(&mut r, n, players, 3)
    } else {
        random_csg(&mut r, n, players, 3)
    };
    if r.gen_bool(0.5) {
        add_rewards(&mut r, &mut m);
    }
    m.initial = r.gen_range(0..n);
    m
}

fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(m, n)| prop::collection::vec(prop::collection::vec(-5.0..5.0f64, n), m))
}

fn bimatrix_strategy(max_dim: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(m, n)| {
        let one = prop::collection::vec(prop::collection::vec(-5.0..5.0f64, n), m);
        (one.clone(), one)
    })
}

fn guaranteed(z: &[Vec<f64>], p: &[f64]) -> f64 {
    (0..z[0].len())
        .map(|j| p.iter().zip(z).map(|(w, row)| w * row[j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn reachable(m: &GameModel) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([m.initial]);
    let mut queue = VecDeque::from([m.initial]);
    while let Some(s) = queue.pop_front() {
        for ((_, _), d) in m.transitions.range((s, Vec::new())..).take_while(|((t, _), _)| *t == s) {
            for t in d.support() {
                if seen.insert(t) {
                    queue.push_back(t);
                }
            }
        }
    }
    seen
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn query_print_then_parse_is_identity(seed in any::<u64>(), players in 2usize..=4) {
        let q = random_query(&mut rng(seed), players);
        let names = PlayerNames::numbered(players);
        let text = print_query(&q, &names);
        prop_assert_eq!(parse_query(&text, &names).map_err(|e| TestCaseError::fail(format!("{text}: {e:?}")))?, q);
    }

    #[test]
    fn equilibrium_coalitions_must_partition_players(
        players in 2usize..=4,
        first in prop::collection::btree_set(1usize..=4, 1..=3),
        second in prop::collection::btree_set(1usize..=4, 1..=3),
    ) {
        let first: BTreeSet<usize> = first.into_iter().filter(|&p| p <= players).collect();
        let second: BTreeSet<usize> = second.into_iter().filter(|&p| p <= players).collect();
        prop_assume!(!first.is_empty() && !second.is_empty());
        let partition = first.is_disjoint(&second) && first.len() + second.len() == players;
        let q = Query::Equilibrium {
            coalitions: [CoalitionSpec::new(first), CoalitionSpec::new(second)],
            targets: ["goal".into(), "goal2".into()],
            kind: None,
            criterion: None,
        };
        let names = PlayerNames::numbered(players);
        let parsed = parse_query(&print_query(&q, &names), &names);
        prop_assert_eq!(parsed.is_ok(), partition);
    }

    #[test]
    fn serialize_then_parse_is_identity(seed in any::<u64>()) {
        let mut model = random_model(seed);
        let text = serialize_game(&model).text;
        let back = parse_game(&text).map_err(|e| TestCaseError::fail(format!("{e:?}\n{text}")))?;
        model.labels.retain(|_, s| !s.is_empty());
        prop_assert_eq!(back, model);
    }

    #[test]
    fn parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        if let Err(errors) = parse_game_bytes(&bytes) {
            prop_assert!(!errors.is_empty());
        }
    }

    #[test]
    fn parser_never_panics_on_near_valid_text(seed in any::<u64>(), cut in any::<prop::sample::Index>(), junk in "[ -~\n]{0,12}") {
        let text = serialize_game(&random_model(seed)).text;
        let at = cut.index(text.len() + 1);
        let mutated = format!("{}{junk}{}", &text[..at], &text[at..]);
        if let Err(errors) = parse_game(&mutated) {
            prop_assert!(!errors.is_empty());
        }
    }

    #[test]
    fn invalid_distribution_is_rejected(seed in any::<u64>(), scale in 0.5f64..0.99) {
        let mut model = random_model(seed);
        let key = model.transitions.keys().next().cloned().unwrap();
        let d = &model.transitions[&key];
        let shrunk = Distribution::new(d.iter().map(|(t, p)| (t, p * scale)).collect());
        model.transitions.insert(key, shrunk);
        prop_assert!(validate(&model).is_err());
    }

    #[test]
    fn coalition_view_maps_back_to_original_transitions(seed in any::<u64>(), members in prop::collection::btree_set(1usize..=3, 1..=3)) {
        let model = random_model(seed);
        let members: BTreeSet<usize> = members.into_iter().filter(|&p| p <= model.players).collect();
        prop_assume!(!members.is_empty());
        let g = coalition_view(&model, &CoalitionSpec::new(members)).unwrap();
        for s in 0..model.states {
            let mut seen = BTreeSet::new();
            for a in 0..g.num_actions(Player::One, s) {
                for b in 0..g.num_actions(Player::Two, s) {
                    let joint = g.original_action(s, a, b).clone();
                    let d = g.transition(s, a, b);
                    prop_assert_eq!(d, &model.transitions[&(s, joint.clone())]);
                    prop_assert!((d.sum() - 1.0).abs() <= 1e-9);
                    prop_assert!(seen.insert(joint), "joint action mapped twice at state {}", s);
                }
            }
            let all: BTreeSet<Vec<usize>> = model.joint_actions(s).into_iter().collect();
            prop_assert_eq!(seen, all);
        }
    }

    #[test]
    fn mdp_view_keeps_reachability_and_labels(seed in any::<u64>()) {
        let model = random_model(seed);
        let mdp = as_mdp(&model).unwrap();
        prop_assert_eq!(mdp.reachable().iter().collect::<BTreeSet<_>>(), reachable(&model));
        prop_assert_eq!(mdp.labels(), &model.labels);
    }

    #[test]
    fn matrix_value_is_shift_and_scale_covariant(z in matrix_strategy(5), alpha in 0.1f64..10.0, beta in -10.0f64..10.0) {
        let base = solve_matrix_game(&Matrix::from_rows(&z).unwrap()).unwrap();
        let moved = Matrix::from_rows(&z).unwrap().map(|v| alpha * v + beta);
        let sol = solve_matrix_game(&moved).unwrap();
        prop_assert!((sol.value - (alpha * base.value + beta)).abs() <= 1e-7 * alpha.max(1.0));
        prop_assert!(guaranteed(&z, &sol.row) >= base.value - 1e-7);
    }

    #[test]
    fn matrix_primal_and_dual_agree(z in matrix_strategy(6)) {
        let m = Matrix::from_rows(&z).unwrap();
        let sol = solve_matrix_game(&m).unwrap();
        prop_assert!(duality_gap(&m, &sol) <= 1e-9);
        prop_assert!((sol.row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!((sol.col.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn nash_profiles_admit_no_profitable_deviation((z1, z2) in bimatrix_strategy(4)) {
        let g = BimatrixGame::new(Matrix::from_rows(&z1).unwrap(), Matrix::from_rows(&z2).unwrap()).unwrap();
        let all = solve_bimatrix_all_ne(&g).unwrap();
        prop_assert!(!all.is_empty());
        for e in &all {
            let (r1, r2) = regret(&z1, &z2, &e.p, &e.q);
            prop_assert!(r1 <= 1e-7 && r2 <= 1e-7, "regrets {} {}", r1, r2);
        }
    }

    #[test]
    fn two_by_two_mixed_equilibrium_matches_indifference(
        base in prop::collection::vec(-5.0..5.0f64, 4),
        gaps in prop::collection::vec(0.05..5.0f64, 4),
        coordinate in any::<bool>(),
    ) {
        // Row player wants to match columns; the column player wants to
        // match rows (coordination) or avoid them (pennies). Either way the
        // game has a unique interior mixed equilibrium.
        let z1 = vec![vec![base[0] + gaps[0], base[1]], vec![base[0], base[1] + gaps[1]]];
        let z2 = if coordinate {
            vec![vec![base[2] + gaps[2], base[2]], vec![base[3], base[3] + gaps[3]]]
        } else {
            vec![vec![base[2], base[2] + gaps[2]], vec![base[3] + gaps[3], base[3]]]
        };
        // q makes the row player indifferent, p the column player.
        let d1 = z1[0][0] - z1[0][1] - z1[1][0] + z1[1][1];
        let d2 = z2[0][0] - z2[0][1] - z2[1][0] + z2[1][1];
        let q0 = (z1[1][1] - z1[0][1]) / d1;
        let p0 = (z2[1][1] - z2[1][0]) / d2;
        let g = BimatrixGame::new(Matrix::from_rows(&z1).unwrap(), Matrix::from_rows(&z2).unwrap()).unwrap();
        let all = solve_bimatrix_all_ne(&g).unwrap();
        prop_assert!(all.iter().any(|e| (e.p[0] - p0).abs() <= 1e-7 && (e.q[0] - q0).abs() <= 1e-7), "{:?} vs ({}, {})", all, p0, q0);
        prop_assert_eq!(all.len(), if coordinate { 3 } else { 1 });
    }

    #[test]
    fn correlated_welfare_is_at_least_nash_welfare((z1, z2) in bimatrix_strategy(3)) {
        let g = BimatrixGame::new(Matrix::from_rows(&z1).unwrap(), Matrix::from_rows(&z2).unwrap()).unwrap();
        let ne = select_equilibrium(&solve_bimatrix_all_ne(&g).unwrap(), Criterion::SocialWelfare).unwrap();
        let ce = solve_correlated_eq(&g, Criterion::SocialWelfare).unwrap();
        prop_assert!(ce.payoffs.0 + ce.payoffs.1 >= ne.payoffs.0 + ne.payoffs.1 - 1e-7);
    }

    #[test]
    fn bounded_reach_rises_monotonically_to_unbounded(seed in any::<u64>(), max in any::<bool>()) {
        let mut r = rng(seed);
        let n = r.gen_range(1..=5);
        let model = random_csg(&mut r, n, 2, 3);
        let g = coalition_view(&model, &CoalitionSpec::new([1])).unwrap();
        let goal = goal_of(&model, "goal");
        let optimum = if max { Optimum::Max } else { Optimum::Min };
        let settings = EngineSettings::default();
        let limit = csg_zero_sum_reach(&g, &goal, optimum, &settings).unwrap().values.values;
        let mut prev = vec![0.0; n];
        for k in 0..40 {
            let x = bounded_reach(&g, &goal, k, optimum, &settings).unwrap().values;
            for s in 0..n {
                prop_assert!((0.0..=1.0).contains(&x[s]));
                prop_assert!(x[s] >= prev[s] - 1e-12, "k {} state {}: {} after {}", k, s, x[s], prev[s]);
                prop_assert!(x[s] <= limit[s] + 1e-5);
            }
            prev = x;
        }
    }

    #[test]
    fn single_action_opponent_collapses_engines(seed in any::<u64>()) {
        let (tsg, csg) = dummy_pair(seed);
        let settings = EngineSettings::default();
        let goal = goal_of(&tsg, "goal");
        let t = tsg_zero_sum_reach(&coalition_view(&tsg, &CoalitionSpec::new([1])).unwrap(), &goal, Optimum::Max, &settings).unwrap();
        let c = csg_zero_sum_reach(&coalition_view(&csg, &CoalitionSpec::new([1])).unwrap(), &goal, Optimum::Max, &settings).unwrap();
        let m = mdp_max_reach(&as_mdp(&csg).unwrap(), &goal, &settings).unwrap();
        for s in 0..goal.universe() {
            prop_assert!((t.values.values[s] - c.values.values[s]).abs() <= 1e-9);
            prop_assert!((t.values.values[s] - m.values[s]).abs() <= 1e-9);
        }
    }

    #[test]
    fn turn_based_strategies_form_a_saddle_point(seed in any::<u64>(), max in any::<bool>()) {
        let mut r = rng(seed);
        let n = r.gen_range(1..=8);
        let model = random_tsg(&mut r, n, 2, 3);
        let g = coalition_view(&model, &CoalitionSpec::new([1])).unwrap();
        let goal = goal_of(&model, "goal");
        let optimum = if max { Optimum::Max } else { Optimum::Min };
        let settings = EngineSettings::default();
        let res = tsg_zero_sum_reach(&g, &goal, optimum, &settings).unwrap();
        prop_assert!(res.strategies.iter().all(|s| s.is_deterministic()));
        // Each strategy guarantees what the other concedes: a saddle point.
        // The reported value may trail it on slowly contracting games, since
        // VI stops on the residual.
        let floor = best_response_value(&g, &res.strategies[0], &Objective::Reach { goal: goal.clone(), maximize: !max }).unwrap();
        let ceiling = best_response_value(&g, &res.strategies[1], &Objective::Reach { goal: goal.clone(), maximize: max }).unwrap();
        for s in 0..n {
            prop_assert!((floor.values[s] - ceiling.values[s]).abs() <= 10.0 * settings.epsilon, "state {}: {} vs {}", s, floor.values[s], ceiling.values[s]);
            prop_assert!((floor.values[s] - res.values.values[s]).abs() <= 1e-3);
        }
    }
}
