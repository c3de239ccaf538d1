//! Navigation potentials.
//!
//! Each agent carries `φ = 1/(1 − φ̂)` with `φ̂ = γ/(γ^κ + b)^{1/κ}`, where
//! `γ = ‖q − q_goal‖²` and `b = G·β`. The obstacle function `β` is a product
//! of factors in `[0, 1]`: singularity, workspace, connectivity, self
//! collision, inter-agent collision and forbidden regions. Collision factors
//! are the discriminant margins passed through a smooth clamp and divided by
//! their ceiling; a pair whose centers are farther apart than its activation
//! distance contributes exactly one.

use std::collections::BTreeMap;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FactorKind, GeometryError, PotentialError, ScenarioError};
use crate::geometry::{pair_margin, planar_shadows, shadow_margin, Ellipse2, Ellipsoid3, Region};
use crate::kinematics::{body_poses, body_radius, singularity_ceiling, AgentModel, Variant};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PotentialParams {
    /// Gain `G` multiplying the normalized obstacle product when gains are
    /// not calibrated per round.
    pub beta_gain: f64,
    /// When positive, each agent's gain is recalibrated at the start of a
    /// round so that the length scale `L = (Gβ)^{1/(2κ)}` satisfies
    /// `γ = auto_gain_ratio · L²` there.
    pub auto_gain_ratio: f64,
    /// Lower bound on `L` under calibration (agents already at their goal).
    pub min_length: f64,
    /// Central-difference step per coordinate.
    pub fd_step: f64,
    /// Extra center distance beyond the two largest semi-axes at which a
    /// body pair stops contributing.
    pub pair_activation: f64,
    /// Same for a body against a forbidden region.
    pub region_activation: f64,
    /// Samples used to calibrate each clamp ceiling.
    pub calibration_samples: usize,
    pub seed: u64,
    /// Collision margins enter their factors through this root of the
    /// margin-to-ceiling ratio, which tames the very high order at which
    /// the cubed discriminants vanish.
    pub margin_root: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self {
            beta_gain: 1e8,
            auto_gain_ratio: 1.5,
            min_length: 2.0,
            fd_step: 1e-6,
            pair_activation: 1.0,
            region_activation: 1.0,
            calibration_samples: 1000,
            seed: 11,
            margin_root: 3.0,
        }
    }
}

pub fn gamma(q: &[f64], goal: &[f64]) -> f64 {
    q.iter().zip(goal).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn gamma_grad(q: &[f64], goal: &[f64]) -> DVector<f64> {
    DVector::from_iterator(q.len(), q.iter().zip(goal).map(|(a, b)| 2.0 * (a - b)))
}

/// Quintic smoothstep `6t⁵ − 15t⁴ + 10t³`, clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

/// Ramp `1 − (1 − t)³` on `[0, 1]`: slope 3 at zero, flat to second order
/// at one.
pub fn ramp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let u = 1.0 - t;
        1.0 - u * u * u
    }
}

/// Twice-differentiable saturation of `x` onto `[0, ceiling]`.
pub fn smooth_clamp(x: f64, ceiling: f64) -> f64 {
    ceiling * smoothstep(x / ceiling)
}

pub fn beta_pair(ei: &Ellipsoid3, ej: &Ellipsoid3, ceiling: f64) -> Result<f64, GeometryError> {
    Ok(smooth_clamp(pair_margin(ei, ej)?, ceiling))
}

/// Connectivity factor: zero at the sensing radius, `d_con²` when the bases
/// coincide.
pub fn beta_conn(pi: &Vector3<f64>, pj: &Vector3<f64>, d_con: f64) -> f64 {
    let eta = d_con * d_con - (pi - pj).norm_squared();
    smooth_clamp(eta, d_con * d_con)
}

/// Workspace factor `(r₀ − d̄)² − ‖p_B‖²`; negative outside.
pub fn beta_world(p_base: &Vector3<f64>, d_bar: f64, r0: f64) -> f64 {
    (r0 - d_bar).powi(2) - p_base.norm_squared()
}

/// Value and partial derivatives of the lifted navigation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavValue {
    pub phi_hat: f64,
    pub phi: f64,
    pub d_gamma: f64,
    pub d_beta: f64,
}

/// Evaluate `φ` at goal distance `γ` and obstacle value `b > 0`.
pub fn nav(gamma: f64, b: f64, kappa: f64) -> Option<NavValue> {
    if !(b > 0.0) || gamma < 0.0 {
        return None;
    }
    if gamma == 0.0 {
        return Some(NavValue {
            phi_hat: 0.0,
            phi: 1.0,
            d_gamma: b.powf(-1.0 / kappa),
            d_beta: 0.0,
        });
    }
    let gk = gamma.powf(kappa);
    let s = gk + b;
    let (phi_hat, om) = if gk <= b {
        let ph = gamma / s.powf(1.0 / kappa);
        (ph, 1.0 - ph)
    } else {
        // 1 − (1 + u)^{−1/κ} without cancellation
        let u = b / gk;
        let om = -(-(u.ln_1p()) / kappa).exp_m1();
        (1.0 - om, om)
    };
    if !(om > 0.0) {
        return None;
    }
    let inv2 = 1.0 / (om * om);
    Some(NavValue {
        phi_hat,
        phi: 1.0 / om,
        d_gamma: (phi_hat / gamma) * (b / s) * inv2,
        d_beta: -(phi_hat / (kappa * s)) * inv2,
    })
}

/// Clamp ceiling and activation distance for one body pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStatic {
    pub ceiling: f64,
    pub cutoff: f64,
}

#[derive(Debug, Clone)]
struct AgentStatic {
    d_bar: f64,
    kappa: f64,
    semi: Vec<[f64; 3]>,
    max_semi: Vec<f64>,
    self_pairs: Vec<(usize, usize)>,
}

/// Shadows and center of one body at a configuration.
#[derive(Debug, Clone, Copy)]
pub struct BodyGeom {
    pub center: Vector3<f64>,
    pub shadows: [Ellipse2; 3],
}

#[derive(Debug, Clone)]
pub struct AgentGeom {
    pub base: Vector3<f64>,
    pub bodies: Vec<BodyGeom>,
}

/// Factor values of one agent's obstacle function. Products per kind and
/// the smallest single factor of each kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBreakdown {
    pub singularity: f64,
    pub workspace: f64,
    pub connectivity: f64,
    pub connectivity_min: f64,
    pub self_collision: f64,
    pub self_collision_min: f64,
    pub agent_collision: f64,
    pub agent_collision_min: f64,
    pub region: f64,
    pub region_min: f64,
    /// Product of all factors.
    pub total: f64,
}

impl BetaBreakdown {
    fn unit() -> Self {
        Self {
            singularity: 1.0,
            workspace: 1.0,
            connectivity: 1.0,
            connectivity_min: 1.0,
            self_collision: 1.0,
            self_collision_min: 1.0,
            agent_collision: 1.0,
            agent_collision_min: 1.0,
            region: 1.0,
            region_min: 1.0,
            total: 1.0,
        }
    }

    fn finish(mut self) -> Self {
        self.total =
            self.singularity * self.workspace * self.connectivity * self.self_collision * self.agent_collision * self.region;
        self
    }

    /// Smallest factor of each kind.
    pub fn minima(&self) -> [(FactorKind, f64); 6] {
        [
            (FactorKind::Singularity, self.singularity),
            (FactorKind::Workspace, self.workspace),
            (FactorKind::Connectivity, self.connectivity_min),
            (FactorKind::SelfCollision, self.self_collision_min),
            (FactorKind::AgentCollision, self.agent_collision_min),
            (FactorKind::Region, self.region_min),
        ]
    }

    /// First factor kind that is not strictly positive.
    pub fn first_zero(&self) -> Option<FactorKind> {
        self.minima().iter().find(|(_, v)| !(*v > 0.0)).map(|(k, _)| *k)
    }
}

/// Evaluated pairwise and per-agent factors at one configuration.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub geoms: Vec<AgentGeom>,
    /// Inter-agent collision product and minimum, symmetric.
    pub pair: Vec<Vec<(f64, f64)>>,
    /// `conn[i][j]`: connectivity factor of `i` toward required neighbor `j`.
    pub conn: Vec<Vec<f64>>,
    pub breakdown: Vec<BetaBreakdown>,
}

/// Potential field of a scenario for one round.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub params: PotentialParams,
    gains: Vec<f64>,
    r0: f64,
    agents: Vec<AgentModel>,
    stat: Vec<AgentStatic>,
    regions: Vec<Region>,
    region_shadows: Vec<[Ellipse2; 3]>,
    required: Vec<Vec<usize>>,
    /// `i ∈ required[j]`, indexed `[i][j]`.
    required_by: Vec<Vec<bool>>,
    /// `[a][b]`, bodies of `a` by bodies of `b`, row-major; used for `a ≤ b`.
    pair_static: Vec<Vec<Vec<PairStatic>>>,
    /// `[agent][body][region]`.
    region_static: Vec<Vec<Vec<PairStatic>>>,
    goals: Vec<DVector<f64>>,
    forbidden: Vec<Vec<usize>>,
}

fn key_bits(vals: &[f64]) -> u64 {
    // FNV-1a over the bit patterns
    let mut h: u64 = 0xcbf29ce484222325;
    for v in vals {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Half the smallest margin of two planar bodies placed at center distance
/// `cutoff` with random headings and bearings.
pub fn calibrate_pair_ceiling(
    semi_a: &[f64; 3],
    semi_b: &[f64; 3],
    cutoff: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ key_bits(&[semi_a[0], semi_a[1], semi_a[2], semi_b[0], semi_b[1], semi_b[2], cutoff]));
    let mut min = f64::INFINITY;
    for _ in 0..samples.max(1) {
        let ya: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let yb: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let w: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let a = planar_shadows(&Vector3::zeros(), ya, semi_a);
        let b = planar_shadows(&Vector3::new(cutoff * w.cos(), cutoff * w.sin(), 0.0), yb, semi_b);
        min = min.min(shadow_margin(&a, &b)?);
    }
    Ok(0.5 * min)
}

/// Same calibration for a body against a region sphere.
pub fn calibrate_region_ceiling(
    semi: &[f64; 3],
    region: &Region,
    cutoff: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ key_bits(&[semi[0], semi[1], semi[2], region.radius, region.center[2], cutoff]));
    let shadows = Region::new(0, Vector3::new(0.0, 0.0, region.center[2]), region.radius, vec![])?.shadows();
    let rho = (cutoff * cutoff - region.center[2] * region.center[2]).max(0.0).sqrt();
    let mut min = f64::INFINITY;
    for _ in 0..samples.max(1) {
        let y: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let w: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let a = planar_shadows(&Vector3::new(rho * w.cos(), rho * w.sin(), 0.0), y, semi);
        min = min.min(shadow_margin(&a, &shadows)?);
    }
    Ok(0.5 * min)
}

fn positive_ceiling(v: f64, what: &str) -> Result<f64, ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ScenarioError::Invalid(format!(
            "clamp ceiling for {what} is not positive ({v}); increase the activation distance"
        )))
    }
}

impl PotentialField {
    /// Build the field and calibrate every clamp ceiling. Goals default to
    /// the initial configurations and every region except the start region
    /// is forbidden until [`PotentialField::set_round`] is called.
    pub fn new(s: &Scenario) -> Result<Self, ScenarioError> {
        let p = s.potential.clone();
        let stat: Vec<AgentStatic> = s
            .agents
            .iter()
            .map(|m| {
                let semi: Vec<[f64; 3]> = (0..m.bodies()).map(|k| m.body_semi_axes(k)).collect();
                let max_semi = (0..m.bodies()).map(|k| m.body_max_semi(k)).collect();
                let mut self_pairs = Vec::new();
                for a in 0..m.bodies() {
                    for b in a + 2..m.bodies() {
                        self_pairs.push((a, b));
                    }
                }
                AgentStatic {
                    d_bar: body_radius(m),
                    kappa: m.gains.kappa,
                    semi,
                    max_semi,
                    self_pairs,
                }
            })
            .collect();
        let n = s.agents.len();

        let mut memo: BTreeMap<u64, f64> = BTreeMap::new();
        let mut pair_ceiling = |sa: &[f64; 3], sb: &[f64; 3], cutoff: f64| -> Result<f64, ScenarioError> {
            let key = key_bits(&[sa[0], sa[1], sa[2], sb[0], sb[1], sb[2], cutoff]);
            if let Some(v) = memo.get(&key) {
                return Ok(*v);
            }
            let v = calibrate_pair_ceiling(sa, sb, cutoff, p.calibration_samples, p.seed)?;
            let v = positive_ceiling(v, "a body pair")?;
            memo.insert(key, v);
            Ok(v)
        };

        let mut pair_static = vec![vec![Vec::new(); n]; n];
        for a in 0..n {
            for b in a..n {
                let (ma, mb) = (&stat[a], &stat[b]);
                let mut table = Vec::with_capacity(ma.semi.len() * mb.semi.len());
                for k in 0..ma.semi.len() {
                    for l in 0..mb.semi.len() {
                        let cutoff = ma.max_semi[k] + mb.max_semi[l] + p.pair_activation;
                        let needed = a != b || ma.self_pairs.contains(&(k, l));
                        let ceiling = if needed {
                            pair_ceiling(&ma.semi[k], &mb.semi[l], cutoff)?
                        } else {
                            1.0
                        };
                        table.push(PairStatic { ceiling, cutoff });
                    }
                }
                pair_static[a][b] = table;
            }
        }

        let mut region_static = Vec::with_capacity(n);
        for st in &stat {
            let mut per_body = Vec::new();
            for k in 0..st.semi.len() {
                let mut per_region = Vec::new();
                for r in &s.regions {
                    let cutoff = r.radius + st.max_semi[k] + p.region_activation;
                    let c = calibrate_region_ceiling(&st.semi[k], r, cutoff, p.calibration_samples, p.seed)?;
                    per_region.push(PairStatic {
                        ceiling: positive_ceiling(c, "a body against a region")?,
                        cutoff,
                    });
                }
                per_body.push(per_region);
            }
            region_static.push(per_body);
        }

        let mut required_by = vec![vec![false; n]; n];
        for (j, list) in s.required.iter().enumerate() {
            for &i in list {
                required_by[i][j] = true;
            }
        }
        let starts = s.start_regions();
        let forbidden = (0..n)
            .map(|i| (0..s.regions.len()).filter(|&k| Some(k) != starts[i]).collect())
            .collect();

        Ok(Self {
            params: p,
            r0: s.r0,
            agents: s.agents.clone(),
            stat,
            regions: s.regions.clone(),
            region_shadows: s.regions.iter().map(Region::shadows).collect(),
            required: s.required.clone(),
            required_by,
            pair_static,
            region_static,
            goals: s.initial.iter().map(|c| c.q.clone()).collect(),
            gains: vec![s.potential.beta_gain; s.agents.len()],
            forbidden,
        })
    }

    pub fn agents(&self) -> usize {
        self.agents.len()
    }

    pub fn model(&self, i: usize) -> &AgentModel {
        &self.agents[i]
    }

    pub fn goals(&self) -> &[DVector<f64>] {
        &self.goals
    }

    pub fn forbidden(&self, i: usize) -> &[usize] {
        &self.forbidden[i]
    }

    pub fn required(&self, i: usize) -> &[usize] {
        &self.required[i]
    }

    pub fn pair_static(&self, a: usize, k: usize, b: usize, l: usize) -> PairStatic {
        if a <= b {
            self.pair_static[a][b][k * self.stat[b].semi.len() + l]
        } else {
            self.pair_static[b][a][l * self.stat[a].semi.len() + k]
        }
    }

    /// Install the goals of a round; regions other than each agent's start
    /// and goal region become forbidden.
    pub fn set_round(&mut self, goals: Vec<DVector<f64>>, endpoints: &[(Option<usize>, usize)]) {
        self.goals = goals;
        self.forbidden = endpoints
            .iter()
            .map(|(from, to)| {
                (0..self.regions.len())
                    .filter(|k| Some(*k) != *from && k != to)
                    .collect()
            })
            .collect();
    }

    pub fn set_goals(&mut self, goals: Vec<DVector<f64>>) {
        self.goals = goals;
    }

    /// Gain applied to agent `i`'s obstacle product.
    pub fn gain(&self, i: usize) -> f64 {
        self.gains[i]
    }

    pub fn set_gains(&mut self, gains: Vec<f64>) {
        self.gains = gains;
    }

    /// Fix each agent's gain from the configuration a round starts at (see
    /// [`PotentialParams::auto_gain_ratio`]). Without calibration every gain
    /// is `beta_gain`.
    pub fn calibrate_gains(&mut self, qs: &[DVector<f64>]) -> Result<(), PotentialError> {
        let ratio = self.params.auto_gain_ratio;
        if !(ratio > 0.0) {
            self.gains = vec![self.params.beta_gain; self.agents.len()];
            return Ok(());
        }
        let snap = self.snapshot(qs)?;
        for i in 0..self.agents.len() {
            let bd = snap.breakdown[i];
            if !(bd.total > 0.0) {
                return Err(PotentialError::Undefined {
                    agent: i,
                    factor: bd.first_zero().unwrap_or(FactorKind::Workspace),
                });
            }
            let g = gamma(qs[i].as_slice(), self.goals[i].as_slice());
            let l2 = (g / ratio).max(self.params.min_length.powi(2));
            self.gains[i] = l2.powf(self.stat[i].kappa) / bd.total;
        }
        Ok(())
    }

    pub fn geom(&self, i: usize, q: &[f64]) -> AgentGeom {
        let st = &self.stat[i];
        let bodies = body_poses(&self.agents[i], q)
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let c = Vector3::new(p.x, p.y, 0.0);
                BodyGeom {
                    center: c,
                    shadows: planar_shadows(&c, p.yaw, &st.semi[k]),
                }
            })
            .collect();
        AgentGeom {
            base: Vector3::new(q[0], q[1], 0.0),
            bodies,
        }
    }

    fn clamp_factor(&self, margin: f64, ceiling: f64) -> f64 {
        let x = margin / ceiling;
        if x <= 0.0 {
            0.0
        } else {
            ramp(x.powf(1.0 / self.params.margin_root))
        }
    }

    /// Product and minimum of the collision factors between agents `a` and `b`.
    pub fn pair_factor(&self, a: usize, ga: &AgentGeom, b: usize, gb: &AgentGeom) -> Result<(f64, f64), GeometryError> {
        // the lower index always plays the role of the first ellipse
        let (a, ga, b, gb) = if a <= b { (a, ga, b, gb) } else { (b, gb, a, ga) };
        let table = &self.pair_static[a][b];
        let nb = gb.bodies.len();
        let (mut prod, mut min) = (1.0, 1.0f64);
        for (k, bk) in ga.bodies.iter().enumerate() {
            for (l, bl) in gb.bodies.iter().enumerate() {
                let st = table[k * nb + l];
                if (bk.center - bl.center).norm() >= st.cutoff {
                    continue;
                }
                let f = self.clamp_factor(shadow_margin(&bk.shadows, &bl.shadows)?, st.ceiling);
                prod *= f;
                min = min.min(f);
            }
        }
        Ok((prod, min))
    }

    fn self_factor(&self, i: usize, g: &AgentGeom) -> Result<(f64, f64), GeometryError> {
        let table = &self.pair_static[i][i];
        let nb = g.bodies.len();
        let (mut prod, mut min) = (1.0, 1.0f64);
        for &(k, l) in &self.stat[i].self_pairs {
            let st = table[k * nb + l];
            let (bk, bl) = (&g.bodies[k], &g.bodies[l]);
            if (bk.center - bl.center).norm() >= st.cutoff {
                continue;
            }
            let f = self.clamp_factor(shadow_margin(&bk.shadows, &bl.shadows)?, st.ceiling);
            prod *= f;
            min = min.min(f);
        }
        Ok((prod, min))
    }

    fn region_factor(&self, i: usize, g: &AgentGeom) -> Result<(f64, f64), GeometryError> {
        let (mut prod, mut min) = (1.0, 1.0f64);
        for &r in &self.forbidden[i] {
            let region = &self.regions[r];
            for (k, b) in g.bodies.iter().enumerate() {
                let st = self.region_static[i][k][r];
                if (b.center - region.center).norm() >= st.cutoff {
                    continue;
                }
                let f = self.clamp_factor(shadow_margin(&b.shadows, &self.region_shadows[r])?, st.ceiling);
                prod *= f;
                min = min.min(f);
            }
        }
        Ok((prod, min))
    }

    /// Normalized workspace factor `1 − ‖p_B‖²/(r₀ − d̄)²`.
    pub fn world_factor(&self, i: usize, q: &[f64]) -> f64 {
        let r = self.r0 - self.stat[i].d_bar;
        1.0 - (q[0] * q[0] + q[1] * q[1]) / (r * r)
    }

    /// Squared singularity measure over its squared ceiling.
    pub fn singularity_factor(&self, i: usize, q: &[f64]) -> f64 {
        let m = &self.agents[i];
        match m.variant {
            Variant::BaseLink1 => 1.0,
            Variant::BaseLink2 => {
                let (l1, l2) = (m.links[0].length, m.links[1].length);
                let det = (l1 * l2 * q[3].sin()).powi(2);
                (det / singularity_ceiling(m)).powi(2)
            }
        }
    }

    /// Normalized connectivity factor of `i` toward `j`.
    pub fn conn_factor(&self, i: usize, qi: &[f64], qj: &[f64]) -> f64 {
        let d = self.agents[i].d_con;
        let d2 = (qi[0] - qj[0]).powi(2) + (qi[1] - qj[1]).powi(2);
        ramp(1.0 - d2 / (d * d))
    }

    /// Factors that involve agent `i` alone.
    fn own_breakdown(&self, i: usize, q: &[f64], g: &AgentGeom) -> Result<BetaBreakdown, GeometryError> {
        let mut b = BetaBreakdown::unit();
        b.singularity = self.singularity_factor(i, q);
        b.workspace = self.world_factor(i, q);
        (b.self_collision, b.self_collision_min) = self.self_factor(i, g)?;
        (b.region, b.region_min) = self.region_factor(i, g)?;
        Ok(b)
    }

    pub fn snapshot(&self, qs: &[DVector<f64>]) -> Result<Snapshot, GeometryError> {
        let n = self.agents.len();
        let geoms: Vec<AgentGeom> = (0..n).map(|i| self.geom(i, qs[i].as_slice())).collect();
        let mut pair = vec![vec![(1.0, 1.0); n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let v = self.pair_factor(a, &geoms[a], b, &geoms[b])?;
                pair[a][b] = v;
                pair[b][a] = v;
            }
        }
        let mut conn = vec![vec![1.0; n]; n];
        for i in 0..n {
            for &j in &self.required[i] {
                conn[i][j] = self.conn_factor(i, qs[i].as_slice(), qs[j].as_slice());
            }
        }
        let mut breakdown = Vec::with_capacity(n);
        for i in 0..n {
            let mut b = self.own_breakdown(i, qs[i].as_slice(), &geoms[i])?;
            for &j in &self.required[i] {
                b.connectivity *= conn[i][j];
                b.connectivity_min = b.connectivity_min.min(conn[i][j]);
            }
            for j in (0..n).filter(|&j| j != i) {
                b.agent_collision *= pair[i][j].0;
                b.agent_collision_min = b.agent_collision_min.min(pair[i][j].1);
            }
            breakdown.push(b.finish());
        }
        Ok(Snapshot {
            geoms,
            pair,
            conn,
            breakdown,
        })
    }

    pub fn beta_breakdown(&self, qs: &[DVector<f64>], i: usize) -> Result<BetaBreakdown, GeometryError> {
        Ok(self.snapshot(qs)?.breakdown[i])
    }

    /// Normalized obstacle product of agent `i` (in `[0, 1]`).
    pub fn beta_total(&self, qs: &[DVector<f64>], i: usize) -> Result<f64, GeometryError> {
        Ok(self.beta_breakdown(qs, i)?.total)
    }

    fn nav_of(&self, i: usize, q: &[f64], total: f64, bd: &BetaBreakdown) -> Result<NavValue, PotentialError> {
        let g = gamma(q, self.goals[i].as_slice());
        nav(g, self.gains[i] * total, self.stat[i].kappa).ok_or(PotentialError::Undefined {
            agent: i,
            factor: bd.first_zero().unwrap_or(FactorKind::Workspace),
        })
    }

    pub fn phi(&self, qs: &[DVector<f64>], i: usize) -> Result<f64, PotentialError> {
        let snap = self.snapshot(qs)?;
        let bd = snap.breakdown[i];
        Ok(self.nav_of(i, qs[i].as_slice(), bd.total, &bd)?.phi)
    }

    /// `∂φᵢ/∂q_j` by central differences of `φᵢ` with step `h`.
    pub fn grad_phi_step(&self, qs: &[DVector<f64>], i: usize, j: usize, h: f64) -> Result<DVector<f64>, PotentialError> {
        let mut work: Vec<DVector<f64>> = qs.to_vec();
        let n = qs[j].len();
        let mut g = DVector::zeros(n);
        for k in 0..n {
            work[j][k] = qs[j][k] + h;
            let fp = self.phi(&work, i)?;
            work[j][k] = qs[j][k] - h;
            let fm = self.phi(&work, i)?;
            work[j][k] = qs[j][k];
            g[k] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }

    pub fn grad_phi(&self, qs: &[DVector<f64>], i: usize, j: usize) -> Result<DVector<f64>, PotentialError> {
        self.grad_phi_step(qs, i, j, self.params.fd_step)
    }

    /// Agents whose base lies within the sensing radius of agent `i`.
    pub fn neighborhood(&self, qs: &[DVector<f64>], i: usize) -> Vec<usize> {
        let d = self.agents[i].d_con;
        (0..self.agents.len())
            .filter(|&j| j != i)
            .filter(|&j| {
                let dx = qs[i][0] - qs[j][0];
                let dy = qs[i][1] - qs[j][1];
                (dx * dx + dy * dy).sqrt() <= d
            })
            .collect()
    }

    /// Potential gradients entering each agent's control law:
    /// `∇_{qᵢ}φᵢ + Σ_{j∈𝒩ᵢ} ∇_{qᵢ}φⱼ`.
    ///
    /// Only the obstacle product is differenced; the dependence on `γ` and
    /// the lift is applied analytically. Each perturbation of `qᵢ` is shared
    /// between `φᵢ` and the neighbors' potentials.
    pub fn forces(&self, qs: &[DVector<f64>]) -> Result<Forces, PotentialError> {
        let n = self.agents.len();
        let snap = self.snapshot(qs)?;
        let mut navs = Vec::with_capacity(n);
        for i in 0..n {
            let bd = snap.breakdown[i];
            navs.push(self.nav_of(i, qs[i].as_slice(), bd.total, &bd)?);
        }
        let h = self.params.fd_step;
        let mut grads = Vec::with_capacity(n);
        let mut qp = Vec::with_capacity(4);
        for i in 0..n {
            let qi = qs[i].as_slice();
            let dof = qi.len();
            let neighbors = self.neighborhood(qs, i);
            // neighbors whose potential can depend on q_i
            let coupled: Vec<usize> = neighbors
                .iter()
                .copied()
                .filter(|&j| self.required_by[i][j] || self.pair_in_reach(i, &snap.geoms[i], j, &snap.geoms[j], h))
                .collect();
            let mut grad = gamma_grad(qi, self.goals[i].as_slice()) * navs[i].d_gamma;
            for k in 0..dof {
                let mut vals = [[0.0; 2]; 1];
                let mut pvals = vec![[0.0; 2]; coupled.len()];
                for (side, sign) in [1.0, -1.0].iter().enumerate() {
                    qp.clear();
                    qp.extend_from_slice(qi);
                    qp[k] += sign * h;
                    let g = self.geom(i, &qp);
                    let mut beta = self.own_breakdown(i, &qp, &g)?.finish().total;
                    for j in (0..n).filter(|&j| j != i) {
                        let pf = if self.pair_in_reach(i, &snap.geoms[i], j, &snap.geoms[j], h) {
                            self.pair_factor(i, &g, j, &snap.geoms[j])?.0
                        } else {
                            1.0
                        };
                        beta *= pf;
                        if self.required[i].contains(&j) {
                            beta *= self.conn_factor(i, &qp, qs[j].as_slice());
                        }
                        if let Some(c) = coupled.iter().position(|&x| x == j) {
                            let mut pj = pf;
                            if self.required_by[i][j] {
                                pj *= self.conn_factor(j, qs[j].as_slice(), &qp);
                            }
                            pvals[c][side] = pj;
                        }
                    }
                    vals[0][side] = beta;
                }
                let db = self.gains[i] * (vals[0][0] - vals[0][1]) / (2.0 * h);
                grad[k] += navs[i].d_beta * db;
                for (c, &j) in coupled.iter().enumerate() {
                    let mut p_nom = snap.pair[i][j].0;
                    if self.required_by[i][j] {
                        p_nom *= snap.conn[j][i];
                    }
                    let rest = snap.breakdown[j].total / p_nom;
                    let dbj = self.gains[j] * rest * (pvals[c][0] - pvals[c][1]) / (2.0 * h);
                    grad[k] += navs[j].d_beta * dbj;
                }
            }
            grads.push(grad);
        }
        Ok(Forces {
            grad: grads,
            phi: navs.iter().map(|v| v.phi).collect(),
            breakdown: snap.breakdown,
        })
    }

    /// Whether any body pair of `i` and `j` is within its activation
    /// distance, allowing for a perturbation of size `h`.
    fn pair_in_reach(&self, i: usize, gi: &AgentGeom, j: usize, gj: &AgentGeom, h: f64) -> bool {
        // a joint perturbation moves a body by at most h times its reach
        let slack = h * (1.0 + self.stat[i].d_bar);
        for (k, bk) in gi.bodies.iter().enumerate() {
            for (l, bl) in gj.bodies.iter().enumerate() {
                let st = self.pair_static(i, k, j, l);
                if (bk.center - bl.center).norm() < st.cutoff + slack {
                    return true;
                }
            }
        }
        false
    }

    /// Gated pair margins of every inter-agent body pair, ignoring
    /// activation distances. Returns the smallest.
    pub fn min_pair_margin(&self, snap: &Snapshot) -> Result<Option<(usize, usize, f64)>, GeometryError> {
        let n = self.agents.len();
        let mut out: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            for b in a + 1..n {
                for bk in &snap.geoms[a].bodies {
                    for bl in &snap.geoms[b].bodies {
                        let m = shadow_margin(&bk.shadows, &bl.shadows)?;
                        if out.map_or(true, |o| m < o.2) {
                            out = Some((a, b, m));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn kappa(&self, i: usize) -> f64 {
        self.stat[i].kappa
    }

    pub fn body_radius(&self, i: usize) -> f64 {
        self.stat[i].d_bar
    }
}

#[derive(Debug, Clone)]
pub struct Forces {
    pub grad: Vec<DVector<f64>>,
    pub phi: Vec<f64>,
    pub breakdown: Vec<BetaBreakdown>,
}
