//! Scenario description: workspace, regions, agents, required neighbors and
//! the per-agent region sequence, plus feasibility checks and goal placement.

use std::collections::BTreeMap;

use nalgebra::{DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::geometry::Region;
use crate::kinematics::{body_radius, in_region, in_region_links, AgentConfig, AgentModel};
use crate::potential::PotentialParams;

/// Slack required between region pairs beyond the fit condition.
pub const EPS_REGION: f64 = 0.1;
/// Slack required on the sensing radius beyond twice the largest body.
pub const EPS_SENSING: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub id: usize,
    /// Two or three coordinates; a missing z is zero.
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default)]
    pub props: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    #[serde(flatten)]
    pub model: AgentModel,
    pub q0: Vec<f64>,
    #[serde(default)]
    pub qd0: Option<Vec<f64>>,
    #[serde(default)]
    pub c_hat0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoalParams {
    /// Interior margin of a goal beyond the base clause of region membership.
    pub margin: f64,
    /// Required slack between goal distances of required neighbors and the
    /// sensing radius.
    pub conn_margin: f64,
    /// Extra clearance between goals sharing a region, beyond the two body
    /// radii.
    pub separation_margin: f64,
}

impl Default for GoalParams {
    fn default() -> Self {
        Self {
            margin: 0.25,
            conn_margin: 0.75,
            separation_margin: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub dt: f64,
    /// Time limit per round (s).
    pub t_max: f64,
    pub seed: u64,
    /// Trajectory rows are written every `log_every` steps.
    pub log_every: usize,
    pub rest_speed: f64,
    pub rest_steps: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 1500.0,
            seed: 7,
            log_every: 100,
            rest_speed: 1e-3,
            rest_steps: 50,
        }
    }
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub workspace: Workspace,
    pub regions: Vec<RegionSpec>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub required_neighbors: BTreeMap<usize, Vec<usize>>,
    #[serde(default)]
    pub path: BTreeMap<usize, Vec<usize>>,
    /// Optional explicit goal configurations, one per round.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub goals: BTreeMap<usize, Vec<Vec<f64>>>,
    #[serde(default)]
    pub potential: PotentialParams,
    #[serde(default)]
    pub goal_placement: GoalParams,
    #[serde(default)]
    pub sim: SimParams,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Validated, index-based scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub r0: f64,
    pub regions: Vec<Region>,
    pub agents: Vec<AgentModel>,
    pub initial: Vec<AgentConfig>,
    pub c_hat0: Vec<f64>,
    /// Required neighbors by agent index.
    pub required: Vec<Vec<usize>>,
    /// Goal region index per agent per round.
    pub path: Vec<Vec<usize>>,
    /// Explicit goals `[agent][round]`, if given.
    pub explicit_goals: Option<Vec<Vec<DVector<f64>>>>,
    pub potential: PotentialParams,
    pub goal_params: GoalParams,
    pub sim: SimParams,
}

fn index_of(ids: &[usize], id: usize, kind: &'static str) -> Result<usize, ScenarioError> {
    ids.iter()
        .position(|&x| x == id)
        .ok_or(ScenarioError::UnknownId { kind, id })
}

fn check_unique(ids: &[usize], kind: &'static str) -> Result<(), ScenarioError> {
    let mut seen = ids.to_vec();
    seen.sort_unstable();
    for w in seen.windows(2) {
        if w[0] == w[1] {
            return Err(ScenarioError::DuplicateId { kind, id: w[0] });
        }
    }
    Ok(())
}

impl Scenario {
    pub fn from_file(file: &ScenarioFile) -> Result<Self, ScenarioError> {
        if !(file.workspace.r0 > 0.0) {
            return Err(ScenarioError::Invalid(format!("workspace radius must be positive, got {}", file.workspace.r0)));
        }
        let region_ids: Vec<usize> = file.regions.iter().map(|r| r.id).collect();
        let agent_ids: Vec<usize> = file.agents.iter().map(|a| a.model.id).collect();
        check_unique(&region_ids, "region")?;
        check_unique(&agent_ids, "agent")?;
        if file.agents.is_empty() {
            return Err(ScenarioError::Invalid("no agents".into()));
        }

        let mut regions = Vec::with_capacity(file.regions.len());
        for r in &file.regions {
            let c = match r.center.as_slice() {
                [x, y] => Vector3::new(*x, *y, 0.0),
                [x, y, z] => Vector3::new(*x, *y, *z),
                _ => {
                    return Err(ScenarioError::Invalid(format!(
                        "region {} center needs 2 or 3 coordinates",
                        r.id
                    )))
                }
            };
            regions.push(Region::new(r.id, c, r.radius, r.props.clone())?);
        }

        let mut agents = Vec::new();
        let mut initial = Vec::new();
        let mut c_hat0 = Vec::new();
        for a in &file.agents {
            a.model.validate()?;
            a.model.check_dim(&a.q0)?;
            let qd = a.qd0.clone().unwrap_or_else(|| vec![0.0; a.q0.len()]);
            a.model.check_dim(&qd)?;
            let cfg = AgentConfig {
                q: DVector::from_vec(a.q0.clone()),
                qd: DVector::from_vec(qd),
            };
            if !cfg.is_finite() || !a.c_hat0.is_finite() {
                return Err(ScenarioError::Invalid(format!("agent {} has non-finite initial state", a.model.id)));
            }
            agents.push(a.model.clone());
            initial.push(cfg);
            c_hat0.push(a.c_hat0);
        }

        let mut required = vec![Vec::new(); agents.len()];
        for (id, list) in &file.required_neighbors {
            let i = index_of(&agent_ids, *id, "agent")?;
            for j in list {
                let jj = index_of(&agent_ids, *j, "agent")?;
                if jj == i {
                    return Err(ScenarioError::Invalid(format!("agent {id} lists itself as a required neighbor")));
                }
                if !required[i].contains(&jj) {
                    required[i].push(jj);
                }
            }
            required[i].sort_unstable();
        }

        let mut path = vec![Vec::new(); agents.len()];
        for (id, list) in &file.path {
            let i = index_of(&agent_ids, *id, "agent")?;
            path[i] = list
                .iter()
                .map(|r| index_of(&region_ids, *r, "region"))
                .collect::<Result<_, _>>()?;
        }
        let rounds = path.iter().map(Vec::len).max().unwrap_or(0);
        if path.iter().any(|p| p.len() != rounds) {
            return Err(ScenarioError::Invalid("every agent needs the same number of rounds in its path".into()));
        }

        let explicit_goals = if file.goals.is_empty() {
            None
        } else {
            let mut g = vec![Vec::new(); agents.len()];
            for (id, list) in &file.goals {
                let i = index_of(&agent_ids, *id, "agent")?;
                if list.len() != rounds {
                    return Err(ScenarioError::Invalid(format!("agent {id} needs one goal per round")));
                }
                for q in list {
                    agents[i].check_dim(q)?;
                    g[i].push(DVector::from_vec(q.clone()));
                }
            }
            if g.iter().any(|x| x.len() != rounds) {
                return Err(ScenarioError::Invalid("explicit goals must cover every agent".into()));
            }
            Some(g)
        };

        let p = &file.potential;
        if !(p.fd_step > 0.0 && p.beta_gain > 0.0 && p.pair_activation > 0.0 && p.region_activation > 0.0 && p.margin_root >= 1.0) {
            return Err(ScenarioError::Invalid("potential parameters must be positive".into()));
        }
        let s = &file.sim;
        if !(s.dt > 0.0 && s.t_max > 0.0 && s.log_every > 0 && s.rest_speed > 0.0) {
            return Err(ScenarioError::Invalid("sim parameters must be positive".into()));
        }

        Ok(Self {
            name: file.name.clone().unwrap_or_else(|| "scenario".into()),
            r0: file.workspace.r0,
            regions,
            agents,
            initial,
            c_hat0,
            required,
            path,
            explicit_goals,
            potential: file.potential.clone(),
            goal_params: file.goal_placement,
            sim: file.sim,
        })
    }

    pub fn rounds(&self) -> usize {
        self.path.first().map_or(0, Vec::len)
    }

    pub fn max_body_radius(&self) -> f64 {
        self.agents.iter().map(body_radius).fold(0.0, f64::max)
    }

    /// Region an agent occupies: base clause first, then the link clause.
    pub fn region_of(&self, i: usize, q: &[f64]) -> Option<usize> {
        let m = &self.agents[i];
        self.regions
            .iter()
            .position(|r| in_region(m, q, r))
            .or_else(|| self.regions.iter().position(|r| in_region_links(m, q, r)))
    }

    pub fn start_regions(&self) -> Vec<Option<usize>> {
        (0..self.agents.len())
            .map(|i| self.region_of(i, self.initial[i].q.as_slice()))
            .collect()
    }

    /// Region index each agent starts round `r` in (planned).
    pub fn round_start_regions(&self, r: usize) -> Vec<Option<usize>> {
        if r == 0 {
            self.start_regions()
        } else {
            self.path.iter().map(|p| Some(p[r - 1])).collect()
        }
    }
}

/// Planned goal position per agent per round; `None` means stay put.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalPlan {
    pub positions: Vec<Vec<Option<Vector2<f64>>>>,
    /// Planned base position of every agent at the end of each round.
    pub planned: Vec<Vec<Vector2<f64>>>,
}

fn xy(v: &Vector3<f64>) -> Vector2<f64> {
    Vector2::new(v[0], v[1])
}

/// Place goal base positions for every round.
///
/// Agents whose next region equals their current one stay. A moving agent
/// is pushed toward the regions its required neighbors are heading to, as
/// deep as the goal margin allows; agents without such neighbors take the
/// admissible slot closest to where they come from.
pub fn plan_goals(s: &Scenario) -> Result<GoalPlan, ScenarioError> {
    let n = s.agents.len();
    let gp = s.goal_params;
    let mut current: Vec<Vector2<f64>> = s.initial.iter().map(|c| Vector2::new(c.q[0], c.q[1])).collect();
    let mut regions_now = s.start_regions();
    let mut positions = Vec::new();
    let mut planned = Vec::new();
    for r in 0..s.rounds() {
        let target: Vec<usize> = (0..n).map(|i| s.path[i][r]).collect();
        let mut goal: Vec<Option<Vector2<f64>>> = vec![None; n];
        let mut placed: Vec<Option<Vector2<f64>>> = vec![None; n];
        for i in 0..n {
            if regions_now[i] == Some(target[i]) {
                placed[i] = Some(current[i]);
            }
        }
        if let Some(eg) = &s.explicit_goals {
            for i in 0..n {
                let g = Vector2::new(eg[i][r][0], eg[i][r][1]);
                goal[i] = Some(g);
                placed[i] = Some(g);
            }
        } else {
            // agents steered by required neighbors elsewhere
            let mut free = Vec::new();
            for i in 0..n {
                if placed[i].is_some() {
                    continue;
                }
                let k = target[i];
                let center = xy(&s.regions[k].center);
                let mut dir = Vector2::zeros();
                for &j in &s.required[i] {
                    if target[j] != k {
                        let d = xy(&s.regions[target[j]].center) - center;
                        if d.norm() > 0.0 {
                            dir += d.normalize();
                        }
                    }
                }
                if dir.norm() > 1e-9 {
                    let reach = reach_in(s, i, k);
                    let g = center + dir.normalize() * reach;
                    goal[i] = Some(g);
                    placed[i] = Some(g);
                } else {
                    free.push(i);
                }
            }
            for i in free {
                let k = target[i];
                let center = xy(&s.regions[k].center);
                let reach = reach_in(s, i, k);
                let d_i = body_radius(&s.agents[i]);
                let others: Vec<(Vector2<f64>, f64)> = (0..n)
                    .filter(|&j| j != i && target[j] == k)
                    .filter_map(|j| placed[j].map(|p| (p, body_radius(&s.agents[j]))))
                    .collect();
                let admissible = |p: &Vector2<f64>| {
                    others
                        .iter()
                        .all(|(o, d_j)| (p - o).norm() >= d_i + d_j + gp.separation_margin)
                };
                let mut candidates = vec![center];
                for a in 0..360 {
                    let t = (a as f64).to_radians();
                    candidates.push(center + Vector2::new(t.cos(), t.sin()) * reach);
                }
                let from = current[i];
                let best = candidates
                    .iter()
                    .filter(|p| admissible(p))
                    .min_by(|a, b| (*a - from).norm().total_cmp(&(*b - from).norm()))
                    .copied()
                    .unwrap_or(center);
                goal[i] = Some(best);
                placed[i] = Some(best);
            }
        }
        for i in 0..n {
            if let Some(p) = placed[i] {
                current[i] = p;
            }
            regions_now[i] = Some(target[i]);
        }
        positions.push(goal);
        planned.push(current.clone());
    }
    Ok(GoalPlan { positions, planned })
}

/// Deepest goal offset from the center of region `k` for agent `i`.
fn reach_in(s: &Scenario, i: usize, k: usize) -> f64 {
    (s.regions[k].radius - body_radius(&s.agents[i]) - s.goal_params.margin).max(0.0)
}

/// Goal configurations of round `r` given the configurations at its start.
pub fn round_goals(s: &Scenario, plan: &GoalPlan, r: usize, start: &[DVector<f64>]) -> Vec<DVector<f64>> {
    (0..s.agents.len())
        .map(|i| {
            if let Some(eg) = &s.explicit_goals {
                return eg[i][r].clone();
            }
            let mut g = start[i].clone();
            if let Some(p) = plan.positions[r][i] {
                g[0] = p[0];
                g[1] = p[1];
            }
            g
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// Conditions that are reported but not enforced.
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Feasibility checks on regions, sensing radii, initial state and goals.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let dmax = s.max_body_radius();
    let rid = |k: usize| s.regions[k].id;
    let aid = |i: usize| s.agents[i].id;

    for (i, m) in s.agents.iter().enumerate() {
        if m.d_con < 2.0 * dmax + EPS_SENSING {
            rep.violations.push(format!(
                "agent {}: sensing radius {} below 2*max body radius + {} = {:.4}",
                aid(i),
                m.d_con,
                EPS_SENSING,
                2.0 * dmax + EPS_SENSING
            ));
        }
    }
    for a in 0..s.regions.len() {
        let ra = &s.regions[a];
        if s.r0 - ra.center.norm() < 2.0 * dmax {
            rep.violations.push(format!(
                "region {}: r0 - |p| = {:.4} below 2*max body radius {:.4}",
                rid(a),
                s.r0 - ra.center.norm(),
                2.0 * dmax
            ));
        }
        if ra.center.norm() + ra.radius > s.r0 {
            rep.notes.push(format!("region {} extends beyond the workspace", rid(a)));
        }
        for b in a + 1..s.regions.len() {
            let rb = &s.regions[b];
            let d = (ra.center - rb.center).norm();
            let need = 2.0 * dmax + ra.radius + rb.radius + EPS_REGION;
            if d < need {
                rep.violations.push(format!(
                    "regions {} and {}: center distance {:.4} below {:.4}",
                    rid(a),
                    rid(b),
                    d,
                    need
                ));
            }
        }
    }

    let starts = s.start_regions();
    for (i, st) in starts.iter().enumerate() {
        let q = s.initial[i].q.as_slice();
        if st.is_none() {
            rep.violations.push(format!("agent {}: initial configuration is in no region", aid(i)));
        }
        let p = (q[0] * q[0] + q[1] * q[1]).sqrt();
        if s.r0 - (p + body_radius(&s.agents[i])) <= 0.0 {
            rep.violations.push(format!("agent {}: initial configuration leaves the workspace", aid(i)));
        }
        for &j in &s.required[i] {
            let qj = s.initial[j].q.as_slice();
            let d = ((q[0] - qj[0]).powi(2) + (q[1] - qj[1]).powi(2)).sqrt();
            if d >= s.agents[i].d_con {
                rep.violations.push(format!(
                    "agents {} and {}: initial distance {:.4} not below sensing radius {}",
                    aid(i),
                    aid(j),
                    d,
                    s.agents[i].d_con
                ));
            }
        }
    }

    let plan = match plan_goals(s) {
        Ok(p) => p,
        Err(e) => {
            rep.violations.push(format!("goal placement failed: {e}"));
            return rep;
        }
    };
    for r in 0..s.rounds() {
        let planned = &plan.planned[r];
        for i in 0..s.agents.len() {
            let k = s.path[i][r];
            let region = &s.regions[k];
            let mut q = s.initial[i].q.clone();
            q[0] = planned[i][0];
            q[1] = planned[i][1];
            if !in_region(&s.agents[i], q.as_slice(), region) && !in_region_links(&s.agents[i], q.as_slice(), region) {
                rep.violations.push(format!(
                    "round {}: goal of agent {} is not inside region {}",
                    r + 1,
                    aid(i),
                    rid(k)
                ));
            }
            for &j in &s.required[i] {
                let kj = s.path[j][r];
                let centers = (region.center - s.regions[kj].center).norm();
                let d_con = s.agents[i].d_con;
                let di = body_radius(&s.agents[i]);
                let dj = body_radius(&s.agents[j]);
                let best = centers - (region.radius - di).max(0.0) - (s.regions[kj].radius - dj).max(0.0);
                if k != kj && best >= d_con {
                    rep.violations.push(format!(
                        "round {}: regions {} and {} are too far apart for agents {} and {} to stay connected \
                         (closest admissible distance {:.4} >= sensing radius {})",
                        r + 1,
                        rid(k),
                        rid(kj),
                        aid(i),
                        aid(j),
                        best,
                        d_con
                    ));
                    continue;
                }
                let gd = (planned[i] - planned[j]).norm();
                if gd > d_con - s.goal_params.conn_margin {
                    rep.violations.push(format!(
                        "round {}: goals of agents {} and {} are {:.4} apart, above sensing radius {} minus margin {}",
                        r + 1,
                        aid(i),
                        aid(j),
                        gd,
                        d_con,
                        s.goal_params.conn_margin
                    ));
                }
                if k != kj && centers + region.radius + s.regions[kj].radius > d_con && i < j {
                    rep.notes.push(format!(
                        "round {}: regions {} and {} do not fit inside the sensing radius of agents {} and {} \
                         ({:.4} > {}); connectivity relies on goal placement",
                        r + 1,
                        rid(k),
                        rid(kj),
                        aid(i),
                        aid(j),
                        centers + region.radius + s.regions[kj].radius,
                        d_con
                    ));
                }
            }
            for j in i + 1..s.agents.len() {
                if s.path[j][r] == k {
                    let need = body_radius(&s.agents[i]) + body_radius(&s.agents[j]);
                    let gd = (planned[i] - planned[j]).norm();
                    if gd <= need {
                        rep.violations.push(format!(
                            "round {}: goals of agents {} and {} in region {} overlap ({:.4} <= {:.4})",
                            r + 1,
                            aid(i),
                            aid(j),
                            rid(k),
                            gd,
                            need
                        ));
                    }
                }
            }
        }
    }
    rep
}
