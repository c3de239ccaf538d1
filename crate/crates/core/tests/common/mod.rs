#![allow(dead_code)]

use std::path::PathBuf;

use ellnav_core::kinematics::{AgentModel, Gains, Link, Variant};
use ellnav_core::scenario::{Scenario, ScenarioFile};

pub fn bundled_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/paper_sec5.json")
}

pub fn bundled_file() -> ScenarioFile {
    ScenarioFile::from_json(&std::fs::read_to_string(bundled_path()).unwrap()).unwrap()
}

pub fn bundled() -> Scenario {
    Scenario::from_file(&bundled_file()).unwrap()
}

pub fn one_link() -> AgentModel {
    AgentModel {
        id: 1,
        variant: Variant::BaseLink1,
        base_mass: 10.0,
        base_semi_axes: [0.4, 0.4, 0.4],
        links: vec![Link {
            mass: 2.0,
            length: 1.8,
            com: 0.9,
            inertia: 0.2,
            semi_axes: [0.35, 0.15, 0.15],
        }],
        d_con: 8.0,
        c_true: 0.1,
        gains: Gains {
            lambda: 10.0,
            sigma: 0.01,
            kappa: 5.0,
        },
    }
}

pub fn two_link() -> AgentModel {
    let link = Link {
        mass: 1.5,
        length: 1.0,
        com: 0.5,
        inertia: 0.1,
        semi_axes: [0.6, 0.15, 0.15],
    };
    AgentModel {
        id: 2,
        variant: Variant::BaseLink2,
        links: vec![link.clone(), Link { mass: 1.0, com: 0.45, ..link }],
        ..one_link()
    }
}

/// The bundled file reduced to the agents with the given ids; paths are
/// cut to `rounds` entries and requirements restricted to kept agents.
pub fn subset(ids: &[usize], rounds: usize) -> ScenarioFile {
    let mut f = bundled_file();
    f.agents.retain(|a| ids.contains(&a.model.id));
    f.required_neighbors = f
        .required_neighbors
        .into_iter()
        .filter(|(k, _)| ids.contains(k))
        .map(|(k, v)| (k, v.into_iter().filter(|j| ids.contains(j)).collect()))
        .collect();
    f.path = f
        .path
        .into_iter()
        .filter(|(k, _)| ids.contains(k))
        .map(|(k, v)| (k, v.into_iter().take(rounds).collect()))
        .collect();
    f
}
