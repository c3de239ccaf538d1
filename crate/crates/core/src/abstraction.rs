//! Finite transition systems recorded from executed rounds, and the
//! multi-round driver that produces them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{AbstractionError, SimError};
use crate::scenario::{plan_goals, round_goals, validate_scenario, Scenario};
use crate::simulation::{run_transition_round, Engine, Observer, RoundOutcome, RoundSettings, RoundStatus, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsTransition {
    pub from: usize,
    pub to: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// Regions occupied by the required neighbors when a transition ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub t: f64,
    /// Neighbor agent id (as a string key) to region id.
    pub regions: BTreeMap<String, Option<usize>>,
}

/// Per-agent abstraction: region ids as states, executed moves as
/// transitions, and neighbor bookkeeping at every transition endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSystem {
    pub agent: usize,
    pub states: Vec<usize>,
    pub initial: Vec<usize>,
    pub transitions: Vec<TsTransition>,
    pub aps: Vec<String>,
    pub labels: BTreeMap<String, Vec<String>>,
    /// Keyed by the region id the agent occupies.
    pub neighbor_map: BTreeMap<String, Vec<NeighborEntry>>,
}

impl TransitionSystem {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transition system serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Transition system of agent `i` (index) from the given rounds.
pub fn build_transition_system(s: &Scenario, rounds: &[RoundOutcome], i: usize) -> Result<TransitionSystem, AbstractionError> {
    if i >= s.agents.len() {
        return Err(AbstractionError::UnknownAgent(i));
    }
    let start = s.start_regions()[i].ok_or(AbstractionError::NoStartRegion(s.agents[i].id))?;
    let mut aps = BTreeSet::new();
    let mut labels = BTreeMap::new();
    for r in &s.regions {
        aps.extend(r.props.iter().cloned());
        labels.insert(r.id.to_string(), r.props.clone());
    }
    let mut transitions = Vec::new();
    let mut neighbor_map: BTreeMap<String, Vec<NeighborEntry>> = BTreeMap::new();
    for round in rounds {
        if round.status != RoundStatus::Completed {
            return Err(AbstractionError::IncompleteRound(round.round + 1));
        }
        let res = &round.results[i];
        let (Some(from), Some(t_end), true) = (res.from, res.t_end, res.valid) else {
            continue;
        };
        transitions.push(TsTransition {
            from,
            to: res.to,
            t_start: res.t_start,
            t_end,
        });
        neighbor_map.entry(res.to.to_string()).or_default().push(NeighborEntry {
            t: t_end,
            regions: res.neighbor_regions.iter().map(|(id, r)| (id.to_string(), *r)).collect(),
        });
    }
    Ok(TransitionSystem {
        agent: s.agents[i].id,
        states: s.regions.iter().map(|r| r.id).collect(),
        initial: vec![s.regions[start].id],
        transitions,
        aps: aps.into_iter().collect(),
        labels,
        neighbor_map,
    })
}

#[derive(Debug, Clone)]
pub struct PathOutcome {
    pub rounds: Vec<RoundOutcome>,
    pub systems: Vec<TransitionSystem>,
    pub final_state: WorldState,
}

impl PathOutcome {
    /// Status of the last executed round (completed when there were none).
    pub fn status(&self) -> RoundStatus {
        self.rounds.last().map_or(RoundStatus::Completed, |r| r.status)
    }

    pub fn valid_transitions(&self) -> usize {
        self.rounds.iter().flat_map(|r| &r.results).filter(|t| t.valid).count()
    }
}

/// Run every round of the scenario's path, seeding each round with the
/// final state of the previous one. Stops after the first round that does
/// not complete; the rounds run so far are kept.
pub fn execute_path(s: &Scenario, settings: RoundSettings, observer: &mut dyn Observer) -> Result<PathOutcome, AbstractionError> {
    let report = validate_scenario(s);
    if !report.ok() {
        return Err(SimError::Precondition(report.violations.join("; ")).into());
    }
    let plan = plan_goals(s)?;
    let mut engine = Engine::new(s)?;
    let mut state = WorldState::initial(s);
    let mut rounds = Vec::new();
    for r in 0..s.rounds() {
        let goals = round_goals(s, &plan, r, &state.qs());
        let targets: Vec<usize> = s.path.iter().map(|p| p[r]).collect();
        let out = run_transition_round(&mut engine, &state, r, goals, &targets, settings, observer)?;
        state = out.final_state.clone();
        let done = out.status == RoundStatus::Completed;
        rounds.push(out);
        if !done {
            break;
        }
    }
    let completed: Vec<RoundOutcome> = rounds.iter().filter(|r| r.status == RoundStatus::Completed).cloned().collect();
    let systems = (0..s.agents.len())
        .map(|i| build_transition_system(s, &completed, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PathOutcome {
        rounds,
        systems,
        final_state: state,
    })
}
