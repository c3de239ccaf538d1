//! Decentralized navigation of ellipsoid-bodied mobile manipulators among
//! spherical regions of interest.
//!
//! The crate is layered bottom-up: [`geometry`] certifies separation of
//! quadrics, [`kinematics`] places link ellipsoids, [`potential`] builds the
//! per-agent navigation potentials, [`dynamics`] holds the Lagrangian model
//! and adaptive controller, [`simulation`] integrates the closed loop with
//! safety monitors, and [`abstraction`] turns executed rounds into per-agent
//! transition systems.

pub mod abstraction;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod oracle;
pub mod potential;
pub mod scenario;
pub mod simulation;

pub use error::{AbstractionError, DynamicsError, FactorKind, GeometryError, ModelError, PotentialError, ScenarioError, SimError};
