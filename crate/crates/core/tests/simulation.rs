mod common;

use ellnav_core::kinematics::body_radius;
use ellnav_core::scenario::{plan_goals, round_goals, Scenario};
use ellnav_core::simulation::*;
use ellnav_core::{FactorKind, SimError};
use nalgebra::DVector;

fn round_one_engine(s: &Scenario) -> Engine<'_> {
    let mut e = Engine::new(s).unwrap();
    let plan = plan_goals(s).unwrap();
    let qs: Vec<DVector<f64>> = s.initial.iter().map(|c| c.q.clone()).collect();
    let goals = round_goals(s, &plan, 0, &qs);
    let start = s.start_regions();
    let ends: Vec<_> = (0..s.agents.len()).map(|i| (start[i], s.path[i][0])).collect();
    e.field.set_round(goals, &ends);
    e.field.calibrate_gains(&qs).unwrap();
    e
}

/// Agent 1 alone, asked to stay where it starts.
fn stay_put() -> Scenario {
    let mut f = common::subset(&[1], 1);
    f.path.insert(1, vec![1]);
    Scenario::from_file(&f).unwrap()
}

fn round_one(s: &Scenario, t_max: f64) -> RoundOutcome {
    let mut engine = Engine::new(s).unwrap();
    let start = WorldState::initial(s);
    let plan = plan_goals(s).unwrap();
    let goals = round_goals(s, &plan, 0, &start.qs());
    let targets: Vec<usize> = s.path.iter().map(|p| p[0]).collect();
    let settings = RoundSettings {
        t_max,
        ..RoundSettings::from_scenario(s)
    };
    run_transition_round(&mut engine, &start, 0, goals, &targets, settings, &mut NoObserver).unwrap()
}

#[test]
fn resting_at_the_goal_is_an_equilibrium() {
    let s = stay_put();
    let mut e = Engine::new(&s).unwrap();
    let st = WorldState::initial(&s);
    e.field.set_round(st.qs(), &[(st.region[0], 0)]);
    e.field.calibrate_gains(&st.qs()).unwrap();
    let (next, info) = e.step(&st, 0.01).unwrap();
    assert!((&next.agents[0].q - &st.agents[0].q).norm() <= 1e-12);
    assert!(next.agents[0].qd.norm() <= 1e-12);
    assert_eq!(next.c_hat[0], st.c_hat[0]);
    assert!(info.tau[0].norm() <= 1e-12);
}

#[test]
fn estimate_grows_while_moving() {
    let s = common::bundled();
    let e = round_one_engine(&s);
    let mut st = WorldState::initial(&s);
    st.agents[0].qd = DVector::from_vec(vec![0.3, -0.2, 0.5]);
    let (next, _) = e.step(&st, 0.001).unwrap();
    assert!(next.c_hat[0] > st.c_hat[0]);
}

#[test]
fn lyapunov_rate_matches_dissipation() {
    let s = common::bundled();
    let e = round_one_engine(&s);
    let mut st = WorldState::initial(&s);
    st.agents[0].qd = DVector::from_vec(vec![0.3, -0.2, 0.5]);
    st.agents[1].qd = DVector::from_vec(vec![-0.1, 0.25, -0.4]);
    st.c_hat = vec![0.05, 0.2, 0.0];
    let dissipation = |w: &WorldState| -> f64 {
        s.agents
            .iter()
            .zip(&w.agents)
            .map(|(m, a)| {
                let v2 = a.qd.norm_squared();
                m.gains.lambda * v2 + 2.0 * m.c_true * a.q.norm() * v2
            })
            .sum()
    };
    let dt = 1e-4;
    let (next, _) = e.step(&st, dt).unwrap();
    let rate = (e.lyapunov_value(&next).unwrap() - e.lyapunov_value(&st).unwrap()) / dt;
    let want = -0.5 * (dissipation(&st) + dissipation(&next));
    assert!((rate - want).abs() <= 1e-3 * want.abs(), "{rate} vs {want}");
}

#[test]
fn neighborhood_is_closed_at_the_sensing_radius() {
    let s = common::bundled();
    let mut st = WorldState::initial(&s);
    // agents 1 and 2 start six apart
    assert!(neighborhood(&s, &st, 0).contains(&2));
    assert_eq!(neighborhood(&s, &st, 1), vec![1, 3]);
    let d_con = s.agents[0].d_con;
    st.agents[1].q[0] = st.agents[0].q[0] + d_con;
    st.agents[1].q[1] = st.agents[0].q[1];
    assert!(neighborhood(&s, &st, 0).contains(&2));
    st.agents[1].q[0] += 1e-9;
    assert!(!neighborhood(&s, &st, 0).contains(&2));
}

#[test]
fn monitors_pass_on_the_initial_state() {
    let s = common::bundled();
    let e = round_one_engine(&s);
    let rep = e.monitors(&WorldState::initial(&s)).unwrap();
    assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    for a in &rep.agents {
        assert!(a.beta_total > 0.0);
        assert!(a.workspace_slack > 0.0);
        assert!(a.singularity > 0.0);
    }
}

#[test]
fn overlapping_agents_are_flagged() {
    let s = common::bundled();
    let e = round_one_engine(&s);
    let mut st = WorldState::initial(&s);
    st.agents[2].q = st.agents[0].q.clone();
    let rep = e.monitors(&st).unwrap();
    for i in [0, 2] {
        assert!(rep.violations.iter().any(|v| v.agent == i && v.clause == FactorKind::AgentCollision));
        assert_eq!(rep.agents[i].factors.agent_collision_min, 0.0);
        assert_eq!(rep.agents[i].beta_total, 0.0);
    }
    assert!(matches!(e.step(&st, 0.001), Err(SimError::SafetyExit { .. })));
}

#[test]
fn workspace_monitor_fires_on_the_boundary() {
    let s = common::bundled();
    let e = round_one_engine(&s);
    let mut st = WorldState::initial(&s);
    let edge = s.r0 - body_radius(&s.agents[1]);
    st.agents[1].q[0] = 0.0;
    st.agents[1].q[1] = -edge;
    let rep = e.monitors(&st).unwrap();
    assert!(rep.violations.iter().any(|v| v.agent == 1 && v.clause == FactorKind::Workspace));
    assert!(rep.agents[1].workspace_slack.abs() < 1e-12);
}

#[test]
fn staying_put_completes_at_once() {
    let s = stay_put();
    let out = round_one(&s, 10.0);
    assert_eq!(out.status, RoundStatus::Completed);
    let r = &out.results[0];
    assert!(r.valid, "{:?}", r.violations);
    assert_eq!(r.from, Some(1));
    assert_eq!(r.to, 1);
    assert_eq!(r.t_end, Some(r.t_start));
    assert_eq!(out.stats.steps + 1, s.sim.rest_steps);
}

#[test]
fn short_budget_times_out() {
    let s = common::bundled();
    let out = round_one(&s, 0.01);
    assert_eq!(out.status, RoundStatus::Timeout);
    assert_eq!(out.stats.steps, 10);
    for r in &out.results {
        assert!(!r.valid);
        assert_eq!(r.t_end, None);
    }
    assert!((out.final_state.t - 0.01).abs() < 1e-15);
    assert!(out.stats.c_hat_monotone);
    assert_eq!(out.stats.v_violations, 0);
}

#[test]
fn nonpositive_step_is_rejected() {
    let s = common::bundled();
    let e = round_one_engine(&s);
    let st = WorldState::initial(&s);
    assert!(matches!(e.step(&st, 0.0), Err(SimError::BadStep(_))));
    assert!(matches!(e.step(&st, -1e-3), Err(SimError::BadStep(_))));
    assert!(matches!(e.step(&st, f64::NAN), Err(SimError::BadStep(_))));
}

#[test]
fn unsafe_start_is_a_safety_exit() {
    let s = common::bundled();
    let mut engine = Engine::new(&s).unwrap();
    let mut start = WorldState::initial(&s);
    start.agents[1].q = start.agents[0].q.clone();
    let goals = start.qs();
    let targets: Vec<usize> = s.path.iter().map(|p| p[0]).collect();
    let res = run_transition_round(&mut engine, &start, 0, goals, &targets, RoundSettings::from_scenario(&s), &mut NoObserver);
    assert!(matches!(res, Err(SimError::SafetyExit { .. })));
}

#[test]
fn runs_are_deterministic() {
    let s = common::bundled();
    let a = round_one(&s, 0.2);
    let b = round_one(&s, 0.2);
    for (x, y) in a.final_state.agents.iter().zip(&b.final_state.agents) {
        for (u, v) in x.q.iter().chain(x.qd.iter()).zip(y.q.iter().chain(y.qd.iter())) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
    assert_eq!(a.final_state.c_hat, b.final_state.c_hat);
}
