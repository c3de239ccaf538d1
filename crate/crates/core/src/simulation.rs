//! Fixed-step integration of the multi-agent closed loop with safety
//! monitors and transition-round execution.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    adaptation_rate, closed_loop_accel, control_torque, dynamics_terms, kinetic_energy, lyapunov_term,
};
use crate::error::{FactorKind, PotentialError, ScenarioError, SimError};
use crate::geometry::shadow_margin;
use crate::kinematics::{in_region, in_region_links, singularity_measure, AgentConfig};
use crate::potential::{BetaBreakdown, Forces, PotentialField};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t: f64,
    pub agents: Vec<AgentConfig>,
    pub c_hat: Vec<f64>,
    /// Region each agent currently occupies (base or link clause).
    pub region: Vec<Option<usize>>,
}

impl WorldState {
    pub fn initial(s: &Scenario) -> Self {
        Self {
            t: 0.0,
            agents: s.initial.clone(),
            c_hat: s.c_hat0.clone(),
            region: s.start_regions(),
        }
    }

    pub fn qs(&self) -> Vec<DVector<f64>> {
        self.agents.iter().map(|a| a.q.clone()).collect()
    }
}

/// Ids of the agents whose base lies within agent `i`'s sensing radius.
pub fn neighborhood(s: &Scenario, state: &WorldState, i: usize) -> Vec<usize> {
    let qi = &state.agents[i].q;
    let d = s.agents[i].d_con;
    (0..s.agents.len())
        .filter(|&j| j != i)
        .filter(|&j| {
            let qj = &state.agents[j].q;
            ((qi[0] - qj[0]).powi(2) + (qi[1] - qj[1]).powi(2)).sqrt() <= d
        })
        .map(|j| s.agents[j].id)
        .collect()
}

/// Quantities evaluated at the start of a step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub tau: Vec<DVector<f64>>,
    pub forces: Forces,
    pub v_terms: Vec<f64>,
}

impl StepInfo {
    pub fn v(&self) -> f64 {
        self.v_terms.iter().sum()
    }
}

struct Deriv {
    qd: Vec<DVector<f64>>,
    qdd: Vec<DVector<f64>>,
    c_hat_dot: Vec<f64>,
    tau: Vec<DVector<f64>>,
    forces: Forces,
}

/// Closed-loop engine for one scenario; the potential field carries the
/// goals of the current round.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    pub scenario: &'a Scenario,
    pub field: PotentialField,
}

impl<'a> Engine<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self, ScenarioError> {
        Ok(Self {
            scenario,
            field: PotentialField::new(scenario)?,
        })
    }

    fn deriv(&self, t: f64, qs: &[DVector<f64>], qds: &[DVector<f64>], c_hat: &[f64]) -> Result<Deriv, SimError> {
        let forces = self
            .field
            .forces(qs)
            .map_err(|source| SimError::SafetyExit { t, source })?;
        let mut qdd = Vec::with_capacity(qs.len());
        let mut tau = Vec::with_capacity(qs.len());
        let mut c_hat_dot = Vec::with_capacity(qs.len());
        for (i, model) in self.scenario.agents.iter().enumerate() {
            let (q, qd) = (qs[i].as_slice(), qds[i].as_slice());
            let terms = dynamics_terms(model, q, qd);
            let u = control_torque(model, q, qd, c_hat[i], &forces.grad[i]);
            qdd.push(closed_loop_accel(i, &terms, qd, &u)?);
            tau.push(u);
            c_hat_dot.push(adaptation_rate(q, qd, model.gains.sigma));
        }
        Ok(Deriv {
            qd: qds.to_vec(),
            qdd,
            c_hat_dot,
            tau,
            forces,
        })
    }

    fn v_terms(&self, state: &WorldState, phi: &[f64]) -> Vec<f64> {
        self.scenario
            .agents
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let a = &state.agents[i];
                lyapunov_term(m, phi[i], a.q.as_slice(), a.qd.as_slice(), state.c_hat[i])
            })
            .collect()
    }

    /// Lyapunov value of a state under the current goals.
    pub fn lyapunov_value(&self, state: &WorldState) -> Result<f64, PotentialError> {
        let qs = state.qs();
        let mut v = 0.0;
        for (i, m) in self.scenario.agents.iter().enumerate() {
            let a = &state.agents[i];
            let phi = self.field.phi(&qs, i)?;
            v += lyapunov_term(m, phi, a.q.as_slice(), a.qd.as_slice(), state.c_hat[i]);
        }
        Ok(v)
    }

    /// One classical Runge–Kutta step of the stacked `(q, q̇, ĉ)` system.
    pub fn step(&self, state: &WorldState, dt: f64) -> Result<(WorldState, StepInfo), SimError> {
        if !(dt > 0.0) {
            return Err(SimError::BadStep(dt));
        }
        let n = state.agents.len();
        let q0: Vec<DVector<f64>> = state.agents.iter().map(|a| a.q.clone()).collect();
        let v0: Vec<DVector<f64>> = state.agents.iter().map(|a| a.qd.clone()).collect();
        let c0 = state.c_hat.clone();

        let advance = |k: &Deriv, h: f64| -> (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<f64>) {
            (
                (0..n).map(|i| &q0[i] + &k.qd[i] * h).collect(),
                (0..n).map(|i| &v0[i] + &k.qdd[i] * h).collect(),
                (0..n).map(|i| c0[i] + k.c_hat_dot[i] * h).collect(),
            )
        };

        let k1 = self.deriv(state.t, &q0, &v0, &c0)?;
        let (q, v, c) = advance(&k1, 0.5 * dt);
        let k2 = self.deriv(state.t + 0.5 * dt, &q, &v, &c)?;
        let (q, v, c) = advance(&k2, 0.5 * dt);
        let k3 = self.deriv(state.t + 0.5 * dt, &q, &v, &c)?;
        let (q, v, c) = advance(&k3, dt);
        let k4 = self.deriv(state.t + dt, &q, &v, &c)?;

        let w = dt / 6.0;
        let mut next = state.clone();
        for i in 0..n {
            let a = &mut next.agents[i];
            a.q = &q0[i] + (&k1.qd[i] + &k2.qd[i] * 2.0 + &k3.qd[i] * 2.0 + &k4.qd[i]) * w;
            a.qd = &v0[i] + (&k1.qdd[i] + &k2.qdd[i] * 2.0 + &k3.qdd[i] * 2.0 + &k4.qdd[i]) * w;
            next.c_hat[i] = c0[i] + (k1.c_hat_dot[i] + 2.0 * k2.c_hat_dot[i] + 2.0 * k3.c_hat_dot[i] + k4.c_hat_dot[i]) * w;
        }
        next.t = state.t + dt;
        let v_terms = self.v_terms(state, &k1.forces.phi);
        Ok((
            next,
            StepInfo {
                tau: k1.tau,
                forces: k1.forces,
                v_terms,
            },
        ))
    }

    /// Evaluate every safety monitor at a state.
    pub fn monitors(&self, state: &WorldState) -> Result<MonitorReport, PotentialError> {
        let qs = state.qs();
        let snap = self.field.snapshot(&qs)?;
        let phi: Vec<f64> = (0..qs.len())
            .map(|i| {
                let g = crate::potential::gamma(qs[i].as_slice(), self.field.goals()[i].as_slice());
                crate::potential::nav(g, self.field.gain(i) * snap.breakdown[i].total, self.field.kappa(i))
                    .map_or(f64::INFINITY, |v| v.phi)
            })
            .collect();
        let v_terms = self.v_terms(state, &phi);
        Ok(self.monitors_with(state, &snap.breakdown, &v_terms))
    }

    pub(crate) fn monitors_with(&self, state: &WorldState, breakdown: &[BetaBreakdown], v_terms: &[f64]) -> MonitorReport {
        let s = self.scenario;
        let n = state.agents.len();
        let mut agents = Vec::with_capacity(n);
        let mut violations = Vec::new();
        let geoms: Vec<_> = (0..n).map(|i| self.field.geom(i, state.agents[i].q.as_slice())).collect();
        for i in 0..n {
            let q = state.agents[i].q.as_slice();
            let model = &s.agents[i];
            let d_bar = self.field.body_radius(i);
            let slack = s.r0 - ((q[0] * q[0] + q[1] * q[1]).sqrt() + d_bar);
            if !(slack > 0.0) {
                violations.push(Violation::new(i, FactorKind::Workspace, format!("workspace slack {slack:.6}")));
            }
            let sing = singularity_measure(model, q).unwrap_or(0.0);
            if !(sing > 0.0) {
                violations.push(Violation::new(i, FactorKind::Singularity, format!("det(JJ^T) = {sing:.3e}")));
            }
            let mut conn = Vec::new();
            for &j in &s.required[i] {
                let qj = state.agents[j].q.as_slice();
                let d = ((q[0] - qj[0]).powi(2) + (q[1] - qj[1]).powi(2)).sqrt();
                if !(d < model.d_con) {
                    violations.push(Violation::new(
                        i,
                        FactorKind::Connectivity,
                        format!("distance to agent {} is {d:.6}", s.agents[j].id),
                    ));
                }
                conn.push((s.agents[j].id, d));
            }
            // self pairs (non-adjacent bodies)
            let bodies = &geoms[i].bodies;
            for a in 0..bodies.len() {
                for b in a + 2..bodies.len() {
                    if !self.certified(
                        &bodies[a].center,
                        model.body_max_semi(a),
                        &bodies[a].shadows,
                        &bodies[b].center,
                        model.body_max_semi(b),
                        &bodies[b].shadows,
                    ) {
                        violations.push(Violation::new(i, FactorKind::SelfCollision, format!("bodies {a} and {b}")));
                    }
                }
            }
            for &r in self.field.forbidden(i) {
                let region = &s.regions[r];
                let shadows = region.shadows();
                for (k, b) in bodies.iter().enumerate() {
                    if !self.certified(&b.center, model.body_max_semi(k), &b.shadows, &region.center, region.radius, &shadows) {
                        violations.push(Violation::new(i, FactorKind::Region, format!("body {k} meets region {}", region.id)));
                    }
                }
            }
            agents.push(AgentMonitor {
                beta_total: breakdown[i].total,
                factors: breakdown[i],
                v_term: v_terms[i],
                singularity: sing,
                workspace_slack: slack,
                conn_distance: conn,
            });
        }
        for a in 0..n {
            for b in a + 1..n {
                for (k, bk) in geoms[a].bodies.iter().enumerate() {
                    for (l, bl) in geoms[b].bodies.iter().enumerate() {
                        if !self.certified(
                            &bk.center,
                            s.agents[a].body_max_semi(k),
                            &bk.shadows,
                            &bl.center,
                            s.agents[b].body_max_semi(l),
                            &bl.shadows,
                        ) {
                            let msg = format!("body {k} of agent {} meets body {l} of agent {}", s.agents[a].id, s.agents[b].id);
                            violations.push(Violation::new(a, FactorKind::AgentCollision, msg.clone()));
                            violations.push(Violation::new(b, FactorKind::AgentCollision, msg));
                        }
                    }
                }
            }
        }
        MonitorReport {
            t: state.t,
            agents,
            violations,
        }
    }

    /// Bounding spheres apart, or a positive gated discriminant margin.
    fn certified(
        &self,
        ca: &nalgebra::Vector3<f64>,
        ra: f64,
        sa: &[crate::geometry::Ellipse2; 3],
        cb: &nalgebra::Vector3<f64>,
        rb: f64,
        sb: &[crate::geometry::Ellipse2; 3],
    ) -> bool {
        if (ca - cb).norm() > ra + rb {
            return true;
        }
        shadow_margin(sa, sb).map_or(false, |m| m > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub agent: usize,
    pub clause: FactorKind,
    pub detail: String,
}

impl Violation {
    fn new(agent: usize, clause: FactorKind, detail: String) -> Self {
        Self { agent, clause, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMonitor {
    pub beta_total: f64,
    pub factors: BetaBreakdown,
    pub v_term: f64,
    pub singularity: f64,
    pub workspace_slack: f64,
    /// Distance to each required neighbor, by agent id.
    pub conn_distance: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub t: f64,
    pub agents: Vec<AgentMonitor>,
    pub violations: Vec<Violation>,
}

/// One executed (or attempted) region-to-region move of an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub agent: usize,
    pub round: usize,
    pub from: Option<usize>,
    pub to: usize,
    pub t_start: f64,
    pub t_end: Option<f64>,
    pub valid: bool,
    pub violations: Vec<String>,
    /// Region id of each required neighbor at `t_end`.
    pub neighbor_regions: Vec<(usize, Option<usize>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    Completed,
    Timeout,
    SafetyExit,
}

/// Extremes accumulated over a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub steps: usize,
    /// Smallest value of each factor kind per agent (index order).
    pub min_factors: Vec<Vec<(FactorKind, f64)>>,
    pub min_beta_total: Vec<f64>,
    /// Largest one-step increase of V.
    pub max_v_increase: f64,
    /// Largest ratio of a V increase to its tolerance `1e−6|V| + 1e−9`.
    pub max_v_excess_ratio: f64,
    pub v_violations: usize,
    pub v_start: f64,
    pub v_end: f64,
    pub c_hat_monotone: bool,
    pub c_hat_max: Vec<f64>,
    pub tau_max: Vec<f64>,
    pub qd_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "type")]
    pub kind: String,
    pub t: f64,
    pub agent: Option<usize>,
    pub detail: serde_json::Value,
}

/// Periodic sample handed to observers.
#[derive(Debug, Clone)]
pub struct Sample<'s> {
    pub round: usize,
    pub state: &'s WorldState,
    pub info: &'s StepInfo,
}

pub trait Observer {
    fn sample(&mut self, _s: &Sample<'_>) {}
    fn event(&mut self, _e: &Event) {}
}

/// Observer that ignores everything.
pub struct NoObserver;
impl Observer for NoObserver {}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: usize,
    pub status: RoundStatus,
    pub results: Vec<TransitionResult>,
    pub stats: RoundStats,
    pub final_state: WorldState,
    pub error: Option<String>,
}

/// Settings of a round run.
#[derive(Debug, Clone, Copy)]
pub struct RoundSettings {
    pub dt: f64,
    pub t_max: f64,
    pub log_every: usize,
    pub rest_speed: f64,
    pub rest_steps: usize,
}

impl RoundSettings {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            dt: s.sim.dt,
            t_max: s.sim.t_max,
            log_every: s.sim.log_every,
            rest_speed: s.sim.rest_speed,
            rest_steps: s.sim.rest_steps,
        }
    }
}

fn ev(kind: &str, t: f64, agent: Option<usize>, detail: serde_json::Value) -> Event {
    Event {
        kind: kind.into(),
        t,
        agent,
        detail,
    }
}

/// Drive all agents toward `goals` until every one rests inside its goal
/// region, the time budget runs out, or the state leaves the safe set.
pub fn run_transition_round(
    engine: &mut Engine<'_>,
    start: &WorldState,
    round: usize,
    goals: Vec<DVector<f64>>,
    targets: &[usize],
    settings: RoundSettings,
    observer: &mut dyn Observer,
) -> Result<RoundOutcome, SimError> {
    let s = engine.scenario;
    let n = s.agents.len();
    if goals.len() != n || targets.len() != n {
        return Err(SimError::Precondition("one goal and one target per agent".into()));
    }
    if !(settings.dt > 0.0) {
        return Err(SimError::BadStep(settings.dt));
    }
    let endpoints: Vec<(Option<usize>, usize)> = (0..n).map(|i| (start.region[i], targets[i])).collect();
    engine.field.set_round(goals, &endpoints);
    let t0 = start.t;
    if let Err(source) = engine.field.calibrate_gains(&start.qs()) {
        return Err(SimError::SafetyExit { t: t0, source });
    }

    observer.event(&ev(
        "round_start",
        t0,
        None,
        serde_json::json!({
            "round": round + 1,
            "moves": (0..n).map(|i| serde_json::json!({
                "agent": s.agents[i].id,
                "from": start.region[i].map(|k| s.regions[k].id),
                "to": s.regions[targets[i]].id,
            })).collect::<Vec<_>>(),
        }),
    ));

    let mut stats = RoundStats {
        steps: 0,
        min_factors: vec![Vec::new(); n],
        min_beta_total: vec![f64::INFINITY; n],
        max_v_increase: f64::NEG_INFINITY,
        max_v_excess_ratio: f64::NEG_INFINITY,
        v_violations: 0,
        v_start: f64::NAN,
        v_end: f64::NAN,
        c_hat_monotone: true,
        c_hat_max: start.c_hat.clone(),
        tau_max: vec![0.0; n],
        qd_max: vec![0.0; n],
    };
    let mut violations: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut inside = vec![false; n];
    let mut streak_start: Vec<Option<f64>> = vec![None; n];
    let mut streak_regions: Vec<Vec<(usize, Option<usize>)>> = vec![Vec::new(); n];
    let mut rest_count = 0usize;

    let mut state = start.clone();
    let mut prev_v: Option<f64> = None;
    let mut step_idx: usize = 0;
    let max_steps = (settings.t_max / settings.dt).ceil() as usize;

    let region_snapshot = |st: &WorldState, i: usize| -> Vec<(usize, Option<usize>)> {
        s.required[i]
            .iter()
            .map(|&j| (s.agents[j].id, s.region_of(j, st.agents[j].q.as_slice()).map(|k| s.regions[k].id)))
            .collect()
    };

    let status;
    let mut error = None;
    loop {
        // membership and rest bookkeeping at the current state
        let mut all_rest = true;
        for i in 0..n {
            let a = &state.agents[i];
            let (m, goal) = (&s.agents[i], &s.regions[targets[i]]);
            let now_in = in_region(m, a.q.as_slice(), goal) || in_region_links(m, a.q.as_slice(), goal);
            if now_in && !inside[i] {
                streak_start[i] = Some(state.t);
                streak_regions[i] = region_snapshot(&state, i);
                observer.event(&ev(
                    "region_entry",
                    state.t,
                    Some(s.agents[i].id),
                    serde_json::json!({"region": s.regions[targets[i]].id}),
                ));
            } else if !now_in && inside[i] {
                streak_start[i] = None;
                observer.event(&ev(
                    "region_exit",
                    state.t,
                    Some(s.agents[i].id),
                    serde_json::json!({"region": s.regions[targets[i]].id}),
                ));
            }
            inside[i] = now_in;
            if !(now_in && a.qd.norm() <= settings.rest_speed) {
                all_rest = false;
            }
        }
        rest_count = if all_rest { rest_count + 1 } else { 0 };
        if rest_count >= settings.rest_steps {
            status = RoundStatus::Completed;
            break;
        }
        if step_idx >= max_steps {
            status = RoundStatus::Timeout;
            observer.event(&ev("timeout", state.t, None, serde_json::json!({"round": round + 1})));
            break;
        }

        let (next, info) = match engine.step(&state, settings.dt) {
            Ok(x) => x,
            Err(SimError::SafetyExit { t, source }) => {
                let agent = match &source {
                    PotentialError::Undefined { agent, .. } => Some(s.agents[*agent].id),
                    _ => None,
                };
                observer.event(&ev(
                    "safety_exit",
                    t,
                    agent,
                    serde_json::json!({"round": round + 1, "reason": source.to_string()}),
                ));
                for v in violations.iter_mut() {
                    v.push(format!("safety-set exit at t = {t:.6}: {source}"));
                }
                error = Some(source.to_string());
                status = RoundStatus::SafetyExit;
                break;
            }
            Err(e) => return Err(e),
        };

        // monitors at the state the step started from
        let v = info.v();
        let report = engine.monitors_with(&state, &info.forces.breakdown, &info.v_terms);
        for viol in &report.violations {
            let msg = format!("t = {:.6}: {} ({})", state.t, viol.clause, viol.detail);
            if violations[viol.agent].len() < 16 {
                violations[viol.agent].push(msg);
            }
            observer.event(&ev(
                "violation",
                state.t,
                Some(s.agents[viol.agent].id),
                serde_json::json!({"clause": viol.clause, "detail": viol.detail}),
            ));
        }
        for i in 0..n {
            let bd = &info.forces.breakdown[i];
            stats.min_beta_total[i] = stats.min_beta_total[i].min(bd.total);
            let minima = bd.minima();
            if stats.min_factors[i].is_empty() {
                stats.min_factors[i] = minima.to_vec();
            } else {
                for (slot, (_, val)) in stats.min_factors[i].iter_mut().zip(minima.iter()) {
                    slot.1 = slot.1.min(*val);
                }
            }
            stats.tau_max[i] = stats.tau_max[i].max(info.tau[i].norm());
            stats.qd_max[i] = stats.qd_max[i].max(state.agents[i].qd.norm());
            if next.c_hat[i] < state.c_hat[i] {
                stats.c_hat_monotone = false;
            }
            stats.c_hat_max[i] = stats.c_hat_max[i].max(next.c_hat[i]);
        }
        if let Some(pv) = prev_v {
            let inc = v - pv;
            let tol = 1e-6 * pv.abs() + 1e-9;
            stats.max_v_increase = stats.max_v_increase.max(inc);
            stats.max_v_excess_ratio = stats.max_v_excess_ratio.max(inc / tol);
            if inc > tol {
                stats.v_violations += 1;
            }
        } else {
            stats.v_start = v;
        }
        stats.v_end = v;
        prev_v = Some(v);

        if step_idx % settings.log_every == 0 {
            observer.sample(&Sample {
                round,
                state: &state,
                info: &info,
            });
        }
        step_idx += 1;
        stats.steps = step_idx;
        state = next;
        state.t = t0 + step_idx as f64 * settings.dt;
    }

    // final sample so every round's log ends on its last state
    if status != RoundStatus::SafetyExit {
        if let Ok((_, info)) = engine.step(&state, settings.dt) {
            observer.sample(&Sample {
                round,
                state: &state,
                info: &info,
            });
        }
    }

    let mut results = Vec::with_capacity(n);
    for i in 0..n {
        let t_end = if status == RoundStatus::Completed { streak_start[i] } else { None };
        let valid = status == RoundStatus::Completed && violations[i].is_empty() && t_end.is_some();
        if let Some(te) = t_end {
            observer.event(&ev(
                "transition_complete",
                te,
                Some(s.agents[i].id),
                serde_json::json!({
                    "round": round + 1,
                    "from": start.region[i].map(|k| s.regions[k].id),
                    "to": s.regions[targets[i]].id,
                    "valid": valid,
                }),
            ));
        }
        results.push(TransitionResult {
            agent: s.agents[i].id,
            round: round + 1,
            from: start.region[i].map(|k| s.regions[k].id),
            to: s.regions[targets[i]].id,
            t_start: t0,
            t_end,
            valid,
            violations: violations[i].clone(),
            neighbor_regions: if t_end.is_some() { streak_regions[i].clone() } else { Vec::new() },
        });
    }
    if status == RoundStatus::Completed {
        for i in 0..n {
            state.region[i] = Some(targets[i]);
        }
        observer.event(&ev("round_complete", state.t, None, serde_json::json!({"round": round + 1})));
    }
    Ok(RoundOutcome {
        round,
        status,
        results,
        stats,
        final_state: state,
        error,
    })
}

/// Kinetic energy of every agent.
pub fn kinetic_energies(s: &Scenario, state: &WorldState) -> Vec<f64> {
    s.agents
        .iter()
        .zip(&state.agents)
        .map(|(m, a)| kinetic_energy(m, a.q.as_slice(), a.qd.as_slice()))
        .collect()
}
