use proptest::prelude::*;
use pursuit_core::arena::*;
use pursuit_core::dynamics::UavState;
use pursuit_core::opponents::*;

/// Exhaustive maximin: summed row minima, first maximal row.
fn oracle_maximin(ms: &[Vec<Vec<f64>>]) -> usize {
    let rows = ms[0].len();
    let scores: Vec<f64> = (0..rows)
        .map(|i| ms.iter().map(|m| m[i].iter().cloned().fold(f64::INFINITY, f64::min)).sum())
        .collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|s| *s == best).unwrap()
}

fn matrix_set() -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
    (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(r, c, k)| {
        // small integers make ties common
        prop::collection::vec(prop::collection::vec(prop::collection::vec((-3i32..4).prop_map(f64::from), c), r), k)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn maximin_matches_exhaustive_search(ms in matrix_set()) {
        let mats: Vec<PayoffMatrix> = ms.iter().map(|m| PayoffMatrix::from_rows(m).unwrap()).collect();
        prop_assert_eq!(maximin_action(&mats).unwrap(), oracle_maximin(&ms));
    }

    #[test]
    fn episodes_replay_from_their_seed(seed in any::<u64>(), blue in prop_oneof![Just(BluePolicy::StraightLine), Just(BluePolicy::Circling), Just(BluePolicy::Random), Just(BluePolicy::Mixed)]) {
        let ctx = SimContext::default();
        let sc = ScenarioConfig { blue_policy: blue, time_limit_s: 20.0, ..ScenarioConfig::versus(2, 2) };
        let run = || {
            let mut red = ScriptedRed::new(ScriptedKind::Random, ScriptedConfig::default(), seed);
            run_episode(&ctx, &sc, seed, "h", &mut red, true).unwrap()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(a.outcome, b.outcome);
        prop_assert_eq!(a.steps, b.steps);
        prop_assert_eq!(a.trajectory, b.trajectory);
        prop_assert!(a.steps <= sc.limit_steps(ctx.physics.dt));
    }
}

#[test]
fn outcome_agrees_with_survivors() {
    let ctx = SimContext::default();
    for (n_red, n_blue) in [(1, 1), (2, 1), (2, 2), (3, 2)] {
        for seed in 0..10 {
            let sc = ScenarioConfig {
                blue_policy: BluePolicy::Mixed,
                time_limit_s: 60.0,
                ..ScenarioConfig::versus(n_red, n_blue)
            };
            let mut w = EngagementWorld::new(&ctx, &sc, seed).unwrap();
            let mut red = ScriptedRed::new(ScriptedKind::Random, ScriptedConfig::default(), seed);
            while !w.is_over() {
                let acts: Vec<usize> = w.observations().iter().map(|v| red.act(v).unwrap()).collect();
                let rep = w.step(&acts).unwrap();
                assert!(rep.reds.iter().all(|s| s.reward.is_finite()));
                for s in &rep.reds {
                    assert!(s.next_obs.iter().all(|o| o.is_finite()));
                }
                for a in w.assignments().iter().filter(|_| !w.is_over()) {
                    assert!(w.reds()[a.red].alive && w.blues()[a.target].alive);
                }
            }
            let reds = !w.live_reds().is_empty();
            let blues = !w.live_blues().is_empty();
            let expected = match (reds, blues) {
                (true, false) => Outcome::Win,
                (false, true) => Outcome::Lose,
                _ => Outcome::Standoff,
            };
            assert_eq!(w.outcome(), Some(expected), "{n_red}v{n_blue} seed {seed}");
            assert!(w.step(&[]).is_err());
        }
    }
}

#[test]
fn maximin_blue_turns_out_of_tail_chase() {
    // red sits 600 m behind blue, both heading +y; flying straight keeps the
    // worst pursuit geometry for blue
    let ctx = SimContext::default();
    let blue = UavState::level(0.0, 600.0, 7000.0, 200.0, 0.0);
    let red = UavState::level(0.0, 0.0, 7000.0, 200.0, 0.0);
    let game = MatrixGameConfig::default();
    let m = build_payoff(&blue, &red, &ctx.catalog, &ctx.physics, &ctx.rewards, &game).unwrap();
    let a = maximin_action(std::slice::from_ref(&m)).unwrap();
    let straight_min = m.row_min(0);
    assert!(m.row_min(a) >= straight_min);
    assert_ne!(a, 0);
}
