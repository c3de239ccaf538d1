//! Planar mobile manipulators: an omnidirectional base carrying a serial
//! chain of revolute links, all moving in the `z = 0` plane.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::geometry::{yaw_rotation, Ellipsoid3, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Base plus one link: `q = (x, y, θ)`.
    BaseLink1,
    /// Base plus a two-link arm: `q = (x, y, θ₁, θ₂)`.
    BaseLink2,
}

impl Variant {
    pub fn links(self) -> usize {
        match self {
            Variant::BaseLink1 => 1,
            Variant::BaseLink2 => 2,
        }
    }

    pub fn dof(self) -> usize {
        2 + self.links()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub mass: f64,
    /// Joint-to-joint length.
    pub length: f64,
    /// Joint-to-center-of-mass offset; also where the ellipsoid is centered.
    pub com: f64,
    pub inertia: f64,
    pub semi_axes: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub lambda: f64,
    pub sigma: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentModel {
    pub id: usize,
    pub variant: Variant,
    pub base_mass: f64,
    pub base_semi_axes: [f64; 3],
    pub links: Vec<Link>,
    pub d_con: f64,
    /// True friction constant; read only by monitors and the plant.
    pub c_true: f64,
    pub gains: Gains,
}

fn positive(name: &str, v: f64) -> Result<(), ModelError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), ModelError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter(format!("{name} must be non-negative, got {v}")))
    }
}

impl AgentModel {
    pub fn dof(&self) -> usize {
        self.variant.dof()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.links.len() != self.variant.links() {
            return Err(ModelError::InvalidParameter(format!(
                "variant {:?} needs {} links, got {}",
                self.variant,
                self.variant.links(),
                self.links.len()
            )));
        }
        positive("base_mass", self.base_mass)?;
        for s in self.base_semi_axes {
            positive("base semi-axis", s)?;
        }
        for l in &self.links {
            positive("link mass", l.mass)?;
            positive("link inertia", l.inertia)?;
            non_negative("link length", l.length)?;
            non_negative("link com", l.com)?;
            for s in l.semi_axes {
                positive("link semi-axis", s)?;
            }
        }
        positive("d_con", self.d_con)?;
        non_negative("c_true", self.c_true)?;
        positive("lambda", self.gains.lambda)?;
        non_negative("sigma", self.gains.sigma)?;
        if !(self.gains.kappa >= 1.0) {
            return Err(ModelError::InvalidParameter(format!("kappa must be at least 1, got {}", self.gains.kappa)));
        }
        Ok(())
    }

    pub fn check_dim(&self, q: &[f64]) -> Result<(), ModelError> {
        if q.len() != self.dof() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Number of bodies (base plus links).
    pub fn bodies(&self) -> usize {
        1 + self.links.len()
    }

    pub fn body_semi_axes(&self, k: usize) -> [f64; 3] {
        if k == 0 {
            self.base_semi_axes
        } else {
            self.links[k - 1].semi_axes
        }
    }

    pub fn body_max_semi(&self, k: usize) -> f64 {
        self.body_semi_axes(k).iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl AgentConfig {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, qd: DVector::zeros(n) }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }
}

/// Planar pose of one body: center and absolute yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl BodyPose {
    pub fn frame(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&yaw_rotation(self.yaw));
        m[(0, 3)] = self.x;
        m[(1, 3)] = self.y;
        m
    }
}

/// Body poses in order base, link 1, link 2, … (no dimension check).
pub fn body_poses(model: &AgentModel, q: &[f64]) -> Vec<BodyPose> {
    let mut out = Vec::with_capacity(model.bodies());
    out.push(BodyPose {
        x: q[0],
        y: q[1],
        yaw: 0.0,
    });
    let (mut jx, mut jy, mut phi) = (q[0], q[1], 0.0);
    for (k, link) in model.links.iter().enumerate() {
        phi += q[2 + k];
        let (s, c) = phi.sin_cos();
        out.push(BodyPose {
            x: jx + link.com * c,
            y: jy + link.com * s,
            yaw: phi,
        });
        jx += link.length * c;
        jy += link.length * s;
    }
    out
}

pub fn link_poses(model: &AgentModel, q: &[f64]) -> Result<Vec<Matrix4<f64>>, ModelError> {
    model.check_dim(q)?;
    Ok(body_poses(model, q).iter().map(BodyPose::frame).collect())
}

pub fn link_ellipsoids(model: &AgentModel, q: &[f64]) -> Result<Vec<Ellipsoid3>, ModelError> {
    model.check_dim(q)?;
    body_poses(model, q)
        .iter()
        .enumerate()
        .map(|(k, p)| {
            Ellipsoid3::new(
                Vector3::new(p.x, p.y, 0.0),
                yaw_rotation(p.yaw),
                Vector3::from(model.body_semi_axes(k)),
            )
            .map_err(ModelError::from)
        })
        .collect()
}

/// End-effector position of the arm.
pub fn end_effector(model: &AgentModel, q: &[f64]) -> (f64, f64) {
    let (mut x, mut y, mut phi) = (q[0], q[1], 0.0);
    for (k, link) in model.links.iter().enumerate() {
        phi += q[2 + k];
        x += link.length * phi.cos();
        y += link.length * phi.sin();
    }
    (x, y)
}

/// Task map whose Jacobian is [`jacobian`].
pub fn task_map(model: &AgentModel, q: &[f64]) -> DVector<f64> {
    let (ex, ey) = end_effector(model, q);
    match model.variant {
        Variant::BaseLink1 => DVector::from_vec(vec![ex, ey, q[2]]),
        Variant::BaseLink2 => DVector::from_vec(vec![q[0], q[1], ex, ey]),
    }
}

/// Task Jacobian: end-effector pose `(x_e, y_e, yaw)` for one link, and
/// base position stacked on end-effector position for two links.
pub fn jacobian(model: &AgentModel, q: &[f64]) -> Result<DMatrix<f64>, ModelError> {
    model.check_dim(q)?;
    let n = model.dof();
    Ok(match model.variant {
        Variant::BaseLink1 => {
            let l = model.links[0].length;
            let (s, c) = q[2].sin_cos();
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -l * s, 0.0, 1.0, l * c, 0.0, 0.0, 1.0])
        }
        Variant::BaseLink2 => {
            let (l1, l2) = (model.links[0].length, model.links[1].length);
            let (s1, c1) = q[2].sin_cos();
            let (s12, c12) = (q[2] + q[3]).sin_cos();
            let mut j = DMatrix::zeros(4, n);
            j[(0, 0)] = 1.0;
            j[(1, 1)] = 1.0;
            j[(2, 0)] = 1.0;
            j[(3, 1)] = 1.0;
            j[(2, 2)] = -l1 * s1 - l2 * s12;
            j[(2, 3)] = -l2 * s12;
            j[(3, 2)] = l1 * c1 + l2 * c12;
            j[(3, 3)] = l2 * c12;
            j
        }
    })
}

/// `det(J Jᵀ)`; zero on the singular set.
pub fn singularity_measure(model: &AgentModel, q: &[f64]) -> Result<f64, ModelError> {
    let j = jacobian(model, q)?;
    Ok((&j * j.transpose()).determinant())
}

/// Largest value [`singularity_measure`] can take; used to normalize it.
pub fn singularity_ceiling(model: &AgentModel) -> f64 {
    match model.variant {
        Variant::BaseLink1 => 1.0,
        Variant::BaseLink2 => {
            let p = model.links[0].length * model.links[1].length;
            (p * p).max(f64::MIN_POSITIVE)
        }
    }
}

/// Supremum over all configurations of the distance from the base center to
/// any point of the body.
pub fn body_radius(model: &AgentModel) -> f64 {
    let mut r = model.body_max_semi(0);
    let mut reach = 0.0;
    for (k, link) in model.links.iter().enumerate() {
        r = r.max(reach + link.com + model.body_max_semi(k + 1));
        reach += link.length;
    }
    r
}

/// Base-center clause of region membership: `‖p_B − pₖ‖ ≤ rₖ − d̄`.
pub fn in_region(model: &AgentModel, q: &[f64], region: &Region) -> bool {
    let d = base_distance(q, &region.center);
    d <= region.radius - body_radius(model)
}

/// Link clause of region membership: every bounding ellipsoid lies inside
/// the region ball (tested through its enclosing sphere).
pub fn in_region_links(model: &AgentModel, q: &[f64], region: &Region) -> bool {
    body_poses(model, q).iter().enumerate().all(|(k, p)| {
        let d = base_distance(&[p.x, p.y], &region.center);
        d + model.body_max_semi(k) <= region.radius
    })
}

pub fn base_distance(q: &[f64], p: &Vector3<f64>) -> f64 {
    ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + p[2] * p[2]).sqrt()
}

/// Rotation of body `k` in the world frame.
pub fn body_rotation(pose: &BodyPose) -> Matrix3<f64> {
    yaw_rotation(pose.yaw)
}
