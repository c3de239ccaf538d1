//! Lagrangian model `M q̈ + N q̇ + g + f = τ` of a planar mobile manipulator,
//! the decentralized adaptive control law, and the Lyapunov monitor.

use nalgebra::{DMatrix, DVector};

use crate::error::DynamicsError;
use crate::kinematics::AgentModel;

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTerms {
    pub m: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub g: DVector<f64>,
    pub f: DVector<f64>,
}

/// Absolute link angles `φₖ = θ₁ + … + θₖ`.
fn link_angles(q: &[f64], links: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(links);
    let mut phi = 0.0;
    for k in 0..links {
        phi += q[2 + k];
        out.push(phi);
    }
    out
}

/// Center-of-mass Jacobian (2×n) of link `k`.
fn com_jacobian(model: &AgentModel, phis: &[f64], k: usize) -> DMatrix<f64> {
    let n = model.dof();
    let mut j = DMatrix::zeros(2, n);
    j[(0, 0)] = 1.0;
    j[(1, 1)] = 1.0;
    for m in 0..=k {
        let (mut dx, mut dy) = (0.0, 0.0);
        for r in m..k {
            let l = model.links[r].length;
            dx -= l * phis[r].sin();
            dy += l * phis[r].cos();
        }
        let lc = model.links[k].com;
        dx -= lc * phis[k].sin();
        dy += lc * phis[k].cos();
        j[(0, 2 + m)] = dx;
        j[(1, 2 + m)] = dy;
    }
    j
}

/// Derivative of [`com_jacobian`] with respect to joint `s` (0-based link index).
fn com_jacobian_deriv(model: &AgentModel, phis: &[f64], k: usize, s: usize) -> DMatrix<f64> {
    let n = model.dof();
    let mut j = DMatrix::zeros(2, n);
    if s > k {
        return j;
    }
    for m in 0..=k {
        let (mut dx, mut dy) = (0.0, 0.0);
        for r in m.max(s)..k {
            let l = model.links[r].length;
            dx -= l * phis[r].cos();
            dy -= l * phis[r].sin();
        }
        let lc = model.links[k].com;
        dx -= lc * phis[k].cos();
        dy -= lc * phis[k].sin();
        j[(0, 2 + m)] = dx;
        j[(1, 2 + m)] = dy;
    }
    j
}

pub fn mass_matrix(model: &AgentModel, q: &[f64]) -> DMatrix<f64> {
    let n = model.dof();
    let phis = link_angles(q, model.links.len());
    let mut m = DMatrix::zeros(n, n);
    m[(0, 0)] = model.base_mass;
    m[(1, 1)] = model.base_mass;
    for (k, link) in model.links.iter().enumerate() {
        let j = com_jacobian(model, &phis, k);
        m += j.transpose() * &j * link.mass;
        for a in 0..=k {
            for b in 0..=k {
                m[(2 + a, 2 + b)] += link.inertia;
            }
        }
    }
    m
}

/// `∂M/∂qᵢ` for every coordinate (zero for the base coordinates).
pub fn mass_matrix_partials(model: &AgentModel, q: &[f64]) -> Vec<DMatrix<f64>> {
    let n = model.dof();
    let phis = link_angles(q, model.links.len());
    let jacs: Vec<DMatrix<f64>> = (0..model.links.len()).map(|k| com_jacobian(model, &phis, k)).collect();
    let mut out = vec![DMatrix::zeros(n, n); n];
    for s in 0..model.links.len() {
        let d = &mut out[2 + s];
        for (k, link) in model.links.iter().enumerate() {
            let dj = com_jacobian_deriv(model, &phis, k, s);
            let t = dj.transpose() * &jacs[k];
            *d += (&t + t.transpose()) * link.mass;
        }
    }
    out
}

/// Coriolis matrix from Christoffel symbols, so that `Ṁ − 2N` is skew.
pub fn coriolis(partials: &[DMatrix<f64>], qd: &[f64]) -> DMatrix<f64> {
    let n = qd.len();
    let mut c = DMatrix::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += 0.5 * (partials[i][(k, j)] + partials[j][(k, i)] - partials[k][(i, j)]) * qd[i];
            }
            c[(k, j)] = acc;
        }
    }
    c
}

pub fn mass_matrix_rate(partials: &[DMatrix<f64>], qd: &[f64]) -> DMatrix<f64> {
    let n = qd.len();
    let mut md = DMatrix::zeros(n, n);
    for (p, v) in partials.iter().zip(qd) {
        md += p * *v;
    }
    md
}

pub fn friction(model: &AgentModel, q: &[f64], qd: &[f64]) -> DVector<f64> {
    let qn = norm(q);
    DVector::from_iterator(qd.len(), qd.iter().map(|v| model.c_true * qn * v))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dynamics_terms(model: &AgentModel, q: &[f64], qd: &[f64]) -> DynamicsTerms {
    let partials = mass_matrix_partials(model, q);
    DynamicsTerms {
        m: mass_matrix(model, q),
        n: coriolis(&partials, qd),
        g: DVector::zeros(q.len()),
        f: friction(model, q, qd),
    }
}

/// `σ ‖q̇‖² ‖q‖`.
pub fn adaptation_rate(q: &[f64], qd: &[f64], sigma: f64) -> f64 {
    let v = norm(qd);
    sigma * v * v * norm(q)
}

/// Control law given the summed potential gradient `∇_{qᵢ}φᵢ + Σⱼ ∇_{qᵢ}φⱼ`.
pub fn control_torque(model: &AgentModel, q: &[f64], qd: &[f64], c_hat: f64, potential_grad: &DVector<f64>) -> DVector<f64> {
    let qn = norm(q);
    let lambda = model.gains.lambda;
    // gravity is identically zero in the horizontal plane
    DVector::from_iterator(
        q.len(),
        (0..q.len()).map(|k| -potential_grad[k] - c_hat * qn * qd[k] - lambda * qd[k]),
    )
}

/// `q̈ = M⁻¹(τ − N q̇ − g − f)` via a Cholesky solve.
pub fn closed_loop_accel(agent: usize, terms: &DynamicsTerms, qd: &[f64], tau: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
    let qdv = DVector::from_column_slice(qd);
    let rhs = tau - &terms.n * qdv - &terms.g - &terms.f;
    let chol = terms.m.clone().cholesky().ok_or(DynamicsError::NotPositiveDefinite(agent))?;
    Ok(chol.solve(&rhs))
}

pub fn kinetic_energy(model: &AgentModel, q: &[f64], qd: &[f64]) -> f64 {
    let m = mass_matrix(model, q);
    let v = DVector::from_column_slice(qd);
    0.5 * v.dot(&(m * &v))
}

/// One agent's share of the Lyapunov function:
/// `φᵢ + ½ q̇ᵀ M q̇ + (ĉ − c)²/(2σ)`.
pub fn lyapunov_term(model: &AgentModel, phi: f64, q: &[f64], qd: &[f64], c_hat: f64) -> f64 {
    let sigma = model.gains.sigma;
    let adapt = if sigma > 0.0 {
        (c_hat - model.c_true).powi(2) / (2.0 * sigma)
    } else {
        0.0
    };
    phi + kinetic_energy(model, q, qd) + adapt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::tests::{one_link, two_link};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_link_closed_form() {
        let m = one_link(0.9, [0.35, 0.15, 0.15], 0.4);
        let (mb, ml, lc, il) = (m.base_mass, m.links[0].mass, m.links[0].com, m.links[0].inertia);
        let th: f64 = 0.83;
        let thd = -1.7;
        let t = dynamics_terms(&m, &[0.5, -0.2, th], &[0.3, 0.1, thd]);
        let (s, c) = th.sin_cos();
        let want_m = DMatrix::from_row_slice(
            3,
            3,
            &[mb + ml, 0.0, -ml * lc * s, 0.0, mb + ml, ml * lc * c, -ml * lc * s, ml * lc * c, il + ml * lc * lc],
        );
        let want_n = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -ml * lc * c * thd, 0.0, 0.0, -ml * lc * s * thd, 0.0, 0.0, 0.0]);
        assert!((t.m - want_m).norm() < 1e-12);
        assert!((t.n - want_n).norm() < 1e-12);
    }

    #[test]
    fn massless_link_decouples() {
        let mut m = one_link(0.9, [0.35, 0.15, 0.15], 0.4);
        m.links[0].mass = 0.0;
        m.c_true = 0.0;
        let t = dynamics_terms(&m, &[0.0, 0.0, 1.0], &[0.0, 0.0, 2.0]);
        assert!((&t.m - DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 10.0, 0.2]))).norm() < 1e-14);
        assert!(t.n.norm() < 1e-14);
        let tau = DVector::from_vec(vec![10.0, 0.0, 0.0]);
        let acc = closed_loop_accel(0, &t, &[0.0, 0.0, 0.0], &tau).unwrap();
        assert_relative_eq!(acc, DVector::from_vec(vec![1.0, 0.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn zero_velocity_has_no_friction() {
        let m = two_link();
        let t = dynamics_terms(&m, &[1.0, 2.0, 0.3, 0.4], &[0.0; 4]);
        assert_eq!(t.f.norm(), 0.0);
    }

    #[test]
    fn mass_matrix_partials_match_differences() {
        let m = two_link();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = mass_matrix_partials(&m, &q);
            for i in 0..4 {
                let h = 1e-6;
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let fd = (mass_matrix(&m, &qp) - mass_matrix(&m, &qm)) / (2.0 * h);
                assert!((&p[i] - fd).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn skew_symmetry_and_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for model in [one_link(0.9, [0.35, 0.15, 0.15], 0.4), two_link()] {
            let n = model.dof();
            for _ in 0..100 {
                let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let qd: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let partials = mass_matrix_partials(&model, &q);
                let s = mass_matrix_rate(&partials, &qd) - coriolis(&partials, &qd) * 2.0;
                let x = DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.0..1.0)));
                assert!(x.dot(&(&s * &x)).abs() / x.norm_squared() < 1e-12);

                let terms = dynamics_terms(&model, &q, &qd);
                let tau = DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-10.0..10.0)));
                let acc = closed_loop_accel(0, &terms, &qd, &tau).unwrap();
                let qdv = DVector::from_vec(qd.clone());
                let res = &terms.m * acc + &terms.n * qdv + &terms.g + &terms.f - tau;
                assert!(res.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn adaptation_examples() {
        assert_eq!(adaptation_rate(&[1.0, 1.0, 0.0], &[0.0; 3], 0.01), 0.0);
        assert_relative_eq!(adaptation_rate(&[2.0, 0.0, 0.0], &[0.0, 3.0, 0.0], 0.01), 0.18, epsilon = 1e-15);
    }

    #[test]
    fn torque_at_rest_is_potential_only() {
        let m = one_link(0.9, [0.35, 0.15, 0.15], 0.4);
        let tau = control_torque(&m, &[1.0, 2.0, 0.3], &[0.0; 3], 7.0, &DVector::zeros(3));
        assert_eq!(tau.norm(), 0.0);
    }
}
