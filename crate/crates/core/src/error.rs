use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GeometryError {
    #[error("semi-axes must be strictly positive")]
    NonPositiveSemiAxes,
    #[error("orientation is not a proper rotation (defect {0:.3e})")]
    NotARotation(f64),
    #[error("degenerate ellipse")]
    DegenerateEllipse,
    #[error("ellipses live in different planes")]
    PlaneMismatch,
    #[error("not a cubic")]
    NotACubic,
    #[error("region radius must be positive, got {0}")]
    NonPositiveRadius(f64),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModelError {
    #[error("configuration has {got} coordinates, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: usize },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Factor of the obstacle function that can vanish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Singularity,
    Workspace,
    Connectivity,
    SelfCollision,
    AgentCollision,
    Region,
}

impl std::fmt::Display for FactorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FactorKind::Singularity => "singularity",
            FactorKind::Workspace => "workspace",
            FactorKind::Connectivity => "connectivity",
            FactorKind::SelfCollision => "self_collision",
            FactorKind::AgentCollision => "agent_collision",
            FactorKind::Region => "region",
        };
        f.write_str(s)
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PotentialError {
    #[error("potential undefined for agent {agent}: {factor} factor vanished")]
    Undefined { agent: usize, factor: FactorKind },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("inertia matrix of agent {0} is not positive definite")]
    NotPositiveDefinite(usize),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("safety-set exit at t = {t:.6}: {source}")]
    SafetyExit { t: f64, source: PotentialError },
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AbstractionError {
    #[error("round {0} did not complete")]
    IncompleteRound(usize),
    #[error("unknown agent index {0}")]
    UnknownAgent(usize),
    #[error("agent {0} does not start inside any region")]
    NoStartRegion(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}
