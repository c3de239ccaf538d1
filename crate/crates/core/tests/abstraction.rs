mod common;

use std::collections::BTreeMap;

use ellnav_core::abstraction::*;
use ellnav_core::scenario::{plan_goals, round_goals, Scenario, ScenarioFile};
use ellnav_core::simulation::*;
use ellnav_core::{AbstractionError, SimError};
use proptest::prelude::*;

fn settings(s: &Scenario) -> RoundSettings {
    RoundSettings::from_scenario(s)
}

#[test]
fn zero_rounds_leave_only_initial_states() {
    let s = Scenario::from_file(&common::subset(&[1, 2, 3], 0)).unwrap();
    assert_eq!(s.rounds(), 0);
    let out = execute_path(&s, settings(&s), &mut NoObserver).unwrap();
    assert!(out.rounds.is_empty());
    assert_eq!(out.status(), RoundStatus::Completed);
    // agent 3 starts next to agent 1 in region 1
    for (ts, want) in out.systems.iter().zip([1, 2, 1]) {
        assert_eq!(ts.initial, vec![want]);
        assert_eq!(ts.states, vec![1, 2, 3]);
        assert!(ts.transitions.is_empty());
        assert!(ts.neighbor_map.is_empty());
    }
    assert_eq!(out.systems[0].labels["1"], vec!["pi_1".to_string(), "depot".to_string()]);
    assert!(out.systems[0].aps.contains(&"pi_2".to_string()));
}

#[test]
fn staying_put_records_self_loops() {
    let mut f = common::subset(&[1], 2);
    f.path.insert(1, vec![1, 1]);
    let s = Scenario::from_file(&f).unwrap();
    let out = execute_path(&s, settings(&s), &mut NoObserver).unwrap();
    assert_eq!(out.valid_transitions(), 2);
    let ts = &out.systems[0];
    assert_eq!(ts.transitions.len(), 2);
    for tr in &ts.transitions {
        assert_eq!((tr.from, tr.to), (1, 1));
        assert_eq!(tr.t_end, tr.t_start);
    }
    assert!(ts.transitions[1].t_start > ts.transitions[0].t_start);
    assert_eq!(ts.neighbor_map["1"].len(), 2);
}

#[test]
fn single_agent_crosses_to_another_region() {
    let mut f = common::subset(&[2], 1);
    f.path.insert(2, vec![1]);
    let s = Scenario::from_file(&f).unwrap();
    let out = execute_path(&s, settings(&s), &mut NoObserver).unwrap();
    assert_eq!(out.status(), RoundStatus::Completed);
    let r = &out.rounds[0];
    assert!(r.results[0].valid, "{:?}", r.results[0].violations);
    assert_eq!(r.stats.v_violations, 0);
    assert!(r.stats.c_hat_monotone);
    let ts = &out.systems[0];
    assert_eq!(ts.initial, vec![2]);
    assert_eq!(ts.transitions.len(), 1);
    let tr = &ts.transitions[0];
    assert_eq!((tr.from, tr.to), (2, 1));
    assert!(tr.t_end > tr.t_start);
    assert_eq!(s.region_of(0, out.final_state.agents[0].q.as_slice()), Some(0));
}

#[test]
fn incomplete_rounds_are_refused() {
    let s = common::bundled();
    let mut engine = Engine::new(&s).unwrap();
    let start = WorldState::initial(&s);
    let plan = plan_goals(&s).unwrap();
    let goals = round_goals(&s, &plan, 0, &start.qs());
    let targets: Vec<usize> = s.path.iter().map(|p| p[0]).collect();
    let short = RoundSettings {
        t_max: 0.005,
        ..settings(&s)
    };
    let round = run_transition_round(&mut engine, &start, 0, goals, &targets, short, &mut NoObserver).unwrap();
    assert_eq!(round.status, RoundStatus::Timeout);
    assert_eq!(build_transition_system(&s, &[round.clone()], 0), Err(AbstractionError::IncompleteRound(1)));
    assert_eq!(build_transition_system(&s, &[round], 7), Err(AbstractionError::UnknownAgent(7)));
}

#[test]
fn timeout_stops_the_path() {
    let s = common::bundled();
    let short = RoundSettings {
        t_max: 0.005,
        ..settings(&s)
    };
    let out = execute_path(&s, short, &mut NoObserver).unwrap();
    assert_eq!(out.rounds.len(), 1);
    assert_eq!(out.status(), RoundStatus::Timeout);
    assert_eq!(out.valid_transitions(), 0);
    assert!(out.systems.iter().all(|ts| ts.transitions.is_empty()));
}

#[test]
fn infeasible_script_is_rejected_before_running() {
    // regions 3 and 2 are too far apart for agents 1 and 2 to stay connected
    let mut f = common::subset(&[1, 2], 1);
    f.path.insert(1, vec![3]);
    f.path.insert(2, vec![2]);
    let s = Scenario::from_file(&f).unwrap();
    match execute_path(&s, settings(&s), &mut NoObserver) {
        Err(AbstractionError::Sim(SimError::Precondition(msg))) => assert!(msg.contains("agents 1 and 2"), "{msg}"),
        other => panic!("expected a precondition failure, got {other:?}"),
    }
}

fn arb_ts() -> impl Strategy<Value = TransitionSystem> {
    let tr = (1usize..5, 1usize..5, 0.0f64..1e4, 0.0f64..1e3).prop_map(|(from, to, t, d)| TsTransition {
        from,
        to,
        t_start: t,
        t_end: t + d,
    });
    (
        1usize..9,
        proptest::collection::vec(tr, 0..6),
        proptest::collection::vec((1usize..9, proptest::option::of(1usize..5)), 0..3),
    )
        .prop_map(|(agent, transitions, nbrs)| {
            let mut neighbor_map = BTreeMap::new();
            for t in &transitions {
                neighbor_map.entry(t.to.to_string()).or_insert_with(Vec::new).push(NeighborEntry {
                    t: t.t_end,
                    regions: nbrs.iter().map(|(id, r)| (id.to_string(), *r)).collect(),
                });
            }
            TransitionSystem {
                agent,
                states: vec![1, 2, 3, 4],
                initial: vec![1],
                transitions,
                aps: vec!["a".into(), "b".into()],
                labels: [("1".to_string(), vec!["a".to_string()])].into_iter().collect(),
                neighbor_map,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_system_json_round_trips(ts in arb_ts()) {
        prop_assert_eq!(TransitionSystem::from_json(&ts.to_json()).unwrap(), ts);
    }

    #[test]
    fn scenario_json_round_trips(dx in -1.0f64..1.0, th in -3.0f64..3.0, c in 0.0f64..1.0, dt in 1e-4f64..1e-2) {
        let mut f = common::bundled_file();
        f.agents[0].q0[0] += dx;
        f.agents[1].q0[2] = th;
        f.agents[2].model.c_true = c;
        f.sim.dt = dt;
        let back = ScenarioFile::from_json(&f.to_json()).unwrap();
        prop_assert_eq!(back, f);
    }
}
