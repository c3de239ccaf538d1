//! Quadric geometry: bounding ellipsoids, their coordinate-plane shadows, and
//! the characteristic-cubic machinery used to certify that two ellipses are
//! separated.
//!
//! Every set here is written in homogeneous form `{z : zᵀ M z ≤ 0}` with
//! `z = [pᵀ 1]ᵀ`. For two coplanar ellipses `A`, `B` the cubic
//! `f(λ) = det(λA − B)` has exactly one positive root when they are disjoint
//! or touching, and the remaining pair of roots tells the story: two distinct
//! negative roots mean disjoint, a negative double root means external
//! contact, anything else means the interiors meet.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Tolerance used when checking rotation matrices.
const ORTHONORMAL_TOL: f64 = 1e-10;

/// Relative width of the band in which a discriminant counts as zero.
pub const ROOT_EPS: f64 = 1e-9;

/// A rigid link's bounding ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid3 {
    pub center: Vector3<f64>,
    pub orientation: Matrix3<f64>,
    pub semi_axes: Vector3<f64>,
}

impl Ellipsoid3 {
    pub fn new(
        center: Vector3<f64>,
        orientation: Matrix3<f64>,
        semi_axes: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        if semi_axes.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(GeometryError::NonPositiveSemiAxes);
        }
        let defect = (orientation.transpose() * orientation - Matrix3::identity()).norm();
        if defect > ORTHONORMAL_TOL || orientation.determinant() < 0.0 {
            return Err(GeometryError::NotARotation(defect));
        }
        Ok(Self {
            center,
            orientation,
            semi_axes,
        })
    }

    /// Ellipsoid aligned with a frame rotated by `yaw` about the z axis.
    pub fn planar(center: Vector3<f64>, yaw: f64, semi_axes: Vector3<f64>) -> Result<Self, GeometryError> {
        Self::new(center, yaw_rotation(yaw), semi_axes)
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Result<Self, GeometryError> {
        Self::new(center, Matrix3::identity(), Vector3::repeat(radius))
    }

    pub fn max_semi_axis(&self) -> f64 {
        self.semi_axes.max()
    }

    /// Body-frame shape matrix `R diag(a⁻², b⁻², c⁻²) Rᵀ`.
    pub fn shape(&self) -> Matrix3<f64> {
        let d = Matrix3::from_diagonal(&self.semi_axes.map(|s| 1.0 / (s * s)));
        self.orientation * d * self.orientation.transpose()
    }

    /// Homogeneous matrix `E = T⁻ᵀ diag(a⁻², b⁻², c⁻², −1) T⁻¹`.
    pub fn homogeneous(&self) -> Matrix4<f64> {
        let q = self.shape();
        let qc = q * self.center;
        let mut e = Matrix4::zeros();
        e.fixed_view_mut::<3, 3>(0, 0).copy_from(&q);
        e.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-qc));
        e.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-qc).transpose());
        e[(3, 3)] = self.center.dot(&qc) - 1.0;
        e
    }

    /// Quadratic form value `[pᵀ 1] E [pᵀ 1]ᵀ`; non-positive inside.
    pub fn level(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.center;
        d.dot(&(self.shape() * d)) - 1.0
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.level(p) <= 0.0
    }

    /// Point on the surface for unit direction `u` expressed in the body frame.
    pub fn surface_point(&self, u: &Vector3<f64>) -> Vector3<f64> {
        self.center + self.orientation * u.component_mul(&self.semi_axes)
    }
}

pub fn yaw_rotation(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Coordinate plane a shadow lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Xy,
    Xz,
    Yz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Xz, Plane::Yz];

    pub fn axes(self) -> (usize, usize) {
        match self {
            Plane::Xy => (0, 1),
            Plane::Xz => (0, 2),
            Plane::Yz => (1, 2),
        }
    }

    pub fn select(self, p: &Vector3<f64>) -> Vector2<f64> {
        let (a, b) = self.axes();
        Vector2::new(p[a], p[b])
    }
}

/// Planar conic `{p : (p − c)ᵀ S (p − c) ≤ level}`.
///
/// Kept in center/shape form so the characteristic cubic can be built about
/// a local origin; the homogeneous matrix is available through
/// [`Ellipse2::matrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse2 {
    pub plane: Plane,
    pub center: Vector2<f64>,
    pub shape: Matrix2<f64>,
    pub level: f64,
}

impl Ellipse2 {
    pub fn new(plane: Plane, center: Vector2<f64>, shape: Matrix2<f64>, level: f64) -> Result<Self, GeometryError> {
        let sym = Matrix2::new(
            shape[(0, 0)],
            0.5 * (shape[(0, 1)] + shape[(1, 0)]),
            0.5 * (shape[(0, 1)] + shape[(1, 0)]),
            shape[(1, 1)],
        );
        if !(level > 0.0) || !(sym[(0, 0)] > 0.0) || !(sym.determinant() > 0.0) {
            return Err(GeometryError::DegenerateEllipse);
        }
        Ok(Self {
            plane,
            center,
            shape: sym,
            level,
        })
    }

    /// Ellipse with semi-axes `(a, b)` rotated by `angle` in its plane.
    pub fn from_axes(plane: Plane, center: Vector2<f64>, a: f64, b: f64, angle: f64) -> Result<Self, GeometryError> {
        if !(a > 0.0 && b > 0.0) {
            return Err(GeometryError::NonPositiveSemiAxes);
        }
        let (s, c) = angle.sin_cos();
        let r = Matrix2::new(c, -s, s, c);
        let d = Matrix2::new(1.0 / (a * a), 0.0, 0.0, 1.0 / (b * b));
        Self::new(plane, center, r * d * r.transpose(), 1.0)
    }

    pub fn circle(plane: Plane, center: Vector2<f64>, radius: f64) -> Result<Self, GeometryError> {
        Self::from_axes(plane, center, radius, radius, 0.0)
    }

    /// Homogeneous 3×3 matrix about the world origin.
    pub fn matrix(&self) -> Matrix3<f64> {
        self.matrix_about(&Vector2::zeros())
    }

    /// Homogeneous matrix with coordinates measured from `origin`.
    pub fn matrix_about(&self, origin: &Vector2<f64>) -> Matrix3<f64> {
        let c = self.center - origin;
        let sc = self.shape * c;
        Matrix3::new(
            self.shape[(0, 0)],
            self.shape[(0, 1)],
            -sc[0],
            self.shape[(1, 0)],
            self.shape[(1, 1)],
            -sc[1],
            -sc[0],
            -sc[1],
            c.dot(&sc) - self.level,
        )
    }

    pub fn value(&self, p: &Vector2<f64>) -> f64 {
        let d = p - self.center;
        d.dot(&(self.shape * d)) - self.level
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        self.value(p) <= 0.0
    }

    /// Semi-axis lengths and their directions (columns), longest first.
    pub fn principal_axes(&self) -> (Vector2<f64>, Matrix2<f64>) {
        let eig = self.shape.symmetric_eigen();
        let (mu, v) = (eig.eigenvalues, eig.eigenvectors);
        let semi = mu.map(|m| (self.level / m).sqrt());
        if semi[0] >= semi[1] {
            (semi, v)
        } else {
            (
                Vector2::new(semi[1], semi[0]),
                Matrix2::from_columns(&[v.column(1).into_owned(), v.column(0).into_owned()]),
            )
        }
    }

    /// Half-width of the ellipse along unit direction `u`.
    pub fn support_width(&self, u: &Vector2<f64>) -> f64 {
        let inv = self.shape.try_inverse().expect("shape is positive definite");
        (self.level * u.dot(&(inv * u))).sqrt()
    }
}

/// Orthogonal projection (shadow) of an ellipsoid onto a coordinate plane.
pub fn project_ellipsoid(e: &Ellipsoid3, plane: Plane) -> Result<Ellipse2, GeometryError> {
    if e.semi_axes.iter().any(|&s| !(s > 0.0)) {
        return Err(GeometryError::NonPositiveSemiAxes);
    }
    let sq = e.semi_axes.map(|s| s * s);
    let inv = e.orientation * Matrix3::from_diagonal(&sq) * e.orientation.transpose();
    let (a, b) = plane.axes();
    let sub = Matrix2::new(inv[(a, a)], inv[(a, b)], inv[(b, a)], inv[(b, b)]);
    let shape = sub.try_inverse().ok_or(GeometryError::DegenerateEllipse)?;
    Ellipse2::new(plane, plane.select(&e.center), shape, 1.0)
}

/// Shadows of an ellipsoid rotated by `yaw` about z, without forming the
/// general 3×3 products.
pub fn planar_shadows(center: &Vector3<f64>, yaw: f64, semi: &[f64; 3]) -> [Ellipse2; 3] {
    let (s, c) = yaw.sin_cos();
    let (a2, b2, c2) = (semi[0] * semi[0], semi[1] * semi[1], semi[2] * semi[2]);
    let q00 = a2 * c * c + b2 * s * s;
    let q11 = a2 * s * s + b2 * c * c;
    let q01 = (a2 - b2) * c * s;
    let det = q00 * q11 - q01 * q01;
    let xy = Matrix2::new(q11 / det, -q01 / det, -q01 / det, q00 / det);
    let xz = Matrix2::new(1.0 / q00, 0.0, 0.0, 1.0 / c2);
    let yz = Matrix2::new(1.0 / q11, 0.0, 0.0, 1.0 / c2);
    let mk = |plane: Plane, shape: Matrix2<f64>| Ellipse2 {
        plane,
        center: plane.select(center),
        shape,
        level: 1.0,
    };
    [mk(Plane::Xy, xy), mk(Plane::Xz, xz), mk(Plane::Yz, yz)]
}

/// All three shadows in `Plane::ALL` order.
pub fn shadows(e: &Ellipsoid3) -> Result<[Ellipse2; 3], GeometryError> {
    Ok([
        project_ellipsoid(e, Plane::Xy)?,
        project_ellipsoid(e, Plane::Xz)?,
        project_ellipsoid(e, Plane::Yz)?,
    ])
}

/// Real cubic `c3 λ³ + c2 λ² + c1 λ + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cubic {
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

/// Root pattern of a cubic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootKind {
    ThreeDistinctReal,
    RepeatedReal,
    OneRealTwoComplex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootClass {
    pub kind: RootKind,
    pub discriminant: f64,
    /// Real roots in ascending order (three entries unless the kind is
    /// `OneRealTwoComplex`).
    pub real_roots: Vec<f64>,
}

impl Cubic {
    pub fn new(c3: f64, c2: f64, c1: f64, c0: f64) -> Self {
        Self { c3, c2, c1, c0 }
    }

    pub fn from_roots(lead: f64, r: [f64; 3]) -> Self {
        let s1 = r[0] + r[1] + r[2];
        let s2 = r[0] * r[1] + r[0] * r[2] + r[1] * r[2];
        let s3 = r[0] * r[1] * r[2];
        Self::new(lead, -lead * s1, lead * s2, -lead * s3)
    }

    pub fn eval(&self, x: f64) -> f64 {
        ((self.c3 * x + self.c2) * x + self.c1) * x + self.c0
    }

    /// The five monomials of the discriminant, signed.
    fn discriminant_terms(&self) -> [f64; 5] {
        let Cubic { c3, c2, c1, c0 } = *self;
        [
            18.0 * c3 * c2 * c1 * c0,
            -4.0 * c2 * c2 * c2 * c0,
            c2 * c2 * c1 * c1,
            -4.0 * c3 * c1 * c1 * c1,
            -27.0 * c3 * c3 * c0 * c0,
        ]
    }

    pub fn discriminant(&self) -> f64 {
        self.discriminant_terms().iter().sum()
    }

    /// Magnitude against which the discriminant is compared when deciding
    /// whether it vanishes.
    pub fn discriminant_scale(&self) -> f64 {
        self.discriminant_terms().iter().fold(0.0, |m, t| m.max(t.abs()))
    }

    /// Number of sign changes in the coefficient sequence (zeros skipped).
    pub fn sign_changes(&self) -> usize {
        let mut prev = 0.0f64;
        let mut changes = 0;
        for c in [self.c3, self.c2, self.c1, self.c0] {
            if c == 0.0 {
                continue;
            }
            if prev != 0.0 && (c > 0.0) != (prev > 0.0) {
                changes += 1;
            }
            prev = c;
        }
        changes
    }

    /// Eigenvalues of the companion matrix.
    pub fn complex_roots(&self) -> Result<[(f64, f64); 3], GeometryError> {
        if self.c3 == 0.0 {
            return Err(GeometryError::NotACubic);
        }
        let a2 = self.c2 / self.c3;
        let a1 = self.c1 / self.c3;
        let a0 = self.c0 / self.c3;
        let companion = Matrix3::new(-a2, -a1, -a0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let ev = companion.complex_eigenvalues();
        Ok([(ev[0].re, ev[0].im), (ev[1].re, ev[1].im), (ev[2].re, ev[2].im)])
    }
}

pub fn cubic_discriminant(c: &Cubic) -> f64 {
    c.discriminant()
}

pub fn classify_roots(c: &Cubic) -> Result<RootClass, GeometryError> {
    if c.c3 == 0.0 {
        return Err(GeometryError::NotACubic);
    }
    let disc = c.discriminant();
    let band = ROOT_EPS * c.discriminant_scale().max(1.0);
    let roots = c.complex_roots()?;
    if disc < -band {
        // The real root is the eigenvalue with the smallest imaginary part.
        let real = roots
            .iter()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|r| r.0)
            .unwrap_or(f64::NAN);
        return Ok(RootClass {
            kind: RootKind::OneRealTwoComplex,
            discriminant: disc,
            real_roots: vec![real],
        });
    }
    let mut real: Vec<f64> = roots.iter().map(|r| r.0).collect();
    real.sort_by(f64::total_cmp);
    let kind = if disc > band {
        RootKind::ThreeDistinctReal
    } else {
        RootKind::RepeatedReal
    };
    Ok(RootClass {
        kind,
        discriminant: disc,
        real_roots: real,
    })
}

fn det3(m: &Matrix3<f64>) -> f64 {
    m.determinant()
}

/// Coefficients of `f(λ) = det(λA − B)`, recovered exactly from four samples
/// `λ ∈ {0, 1, −1, 2}`.
///
/// Both matrices are expressed about the center of `a`; the polynomial is
/// invariant under a common translation and this keeps the entries small.
pub fn char_poly(a: &Ellipse2, b: &Ellipse2) -> Result<Cubic, GeometryError> {
    if a.plane != b.plane {
        return Err(GeometryError::PlaneMismatch);
    }
    let origin = a.center;
    let ma = a.matrix_about(&origin);
    let mb = b.matrix_about(&origin);
    if det3(&ma).abs() <= f64::EPSILON * ma.norm().powi(3) {
        return Err(GeometryError::DegenerateEllipse);
    }
    Ok(interpolate_cubic(|l| det3(&(ma * l - mb))))
}

/// Solve the 4×4 interpolation system for samples at `λ ∈ {0, 1, −1, 2}`.
fn interpolate_cubic(f: impl Fn(f64) -> f64) -> Cubic {
    let f0 = f(0.0);
    let f1 = f(1.0);
    let fm1 = f(-1.0);
    let f2 = f(2.0);
    let c0 = f0;
    let c2 = 0.5 * (f1 + fm1) - c0;
    let odd = 0.5 * (f1 - fm1); // c3 + c1
    let rest = f2 - 4.0 * c2 - c0; // 8 c3 + 2 c1
    let c3 = (rest - 2.0 * odd) / 6.0;
    let c1 = odd - c3;
    Cubic::new(c3, c2, c1, c0)
}

/// Relative position of two coplanar ellipses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Separation {
    Disjoint,
    Touching,
    Overlapping,
}

/// Classification of a characteristic cubic, with the positive-root count.
#[derive(Debug, Clone, PartialEq)]
pub struct PairVerdict {
    pub separation: Separation,
    pub roots: RootClass,
    pub positive_roots: usize,
}

pub fn ellipses_disjoint(a: &Ellipse2, b: &Ellipse2) -> Result<Separation, GeometryError> {
    Ok(pair_verdict(a, b)?.separation)
}

pub fn pair_verdict(a: &Ellipse2, b: &Ellipse2) -> Result<PairVerdict, GeometryError> {
    let cubic = char_poly(a, b)?;
    let roots = classify_roots(&cubic)?;
    let positive_roots = roots.real_roots.iter().filter(|&&r| r > 0.0).count();
    let separation = match roots.kind {
        RootKind::OneRealTwoComplex => Separation::Overlapping,
        RootKind::ThreeDistinctReal => {
            if roots.real_roots.iter().filter(|&&r| r < 0.0).count() == 2 {
                Separation::Disjoint
            } else {
                Separation::Overlapping
            }
        }
        RootKind::RepeatedReal => {
            let r = &roots.real_roots;
            // the coalescing pair is the closest pair of sorted roots
            let pair = if (r[1] - r[0]).abs() <= (r[2] - r[1]).abs() {
                0.5 * (r[0] + r[1])
            } else {
                0.5 * (r[1] + r[2])
            };
            if pair < 0.0 {
                Separation::Touching
            } else {
                Separation::Overlapping
            }
        }
    };
    Ok(PairVerdict {
        separation,
        roots,
        positive_roots,
    })
}

/// Smooth clamp at zero: `x³` for positive `x`, zero otherwise.
pub fn delta_clamp(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x
    } else {
        0.0
    }
}

/// Separation certificate of one plane: `δ(Δ)` while the cubic has two
/// negative roots, zero otherwise.
///
/// The root-sign gate can only switch where `Δ = 0` (no root can cross zero
/// because `det B ≠ 0`), so the gated value stays twice differentiable.
pub fn plane_margin(a: &Ellipse2, b: &Ellipse2) -> Result<f64, GeometryError> {
    let cubic = char_poly(a, b)?;
    let disc = cubic.discriminant();
    if disc <= 0.0 {
        return Ok(0.0);
    }
    // all roots real and nonzero here, so Descartes' count is exact
    if cubic.sign_changes() != 1 {
        return Ok(0.0);
    }
    Ok(delta_clamp(disc))
}

/// Sum of the plane certificates over matching shadow triples.
pub fn shadow_margin(a: &[Ellipse2; 3], b: &[Ellipse2; 3]) -> Result<f64, GeometryError> {
    let mut total = 0.0;
    for (sa, sb) in a.iter().zip(b.iter()) {
        total += plane_margin(sa, sb)?;
    }
    Ok(total)
}

/// Non-collision margin of two ellipsoids; strictly positive certifies that
/// they do not intersect.
pub fn pair_margin(ei: &Ellipsoid3, ej: &Ellipsoid3) -> Result<f64, GeometryError> {
    shadow_margin(&shadows(ei)?, &shadows(ej)?)
}

/// Spherical region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    pub center: Vector3<f64>,
    pub radius: f64,
    pub props: Vec<String>,
}

impl Region {
    pub fn new(id: usize, center: Vector3<f64>, radius: f64, props: Vec<String>) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        Ok(Self {
            id,
            center,
            radius,
            props,
        })
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (p - self.center).norm() <= self.radius
    }

    /// Shadow on a coordinate plane, in the unnormalized form
    /// `[[I, −m], [−mᵀ, ‖m‖² − r²]]`.
    pub fn shadow(&self, plane: Plane) -> Ellipse2 {
        Ellipse2 {
            plane,
            center: plane.select(&self.center),
            shape: Matrix2::identity(),
            level: self.radius * self.radius,
        }
    }

    pub fn shadows(&self) -> [Ellipse2; 3] {
        [self.shadow(Plane::Xy), self.shadow(Plane::Xz), self.shadow(Plane::Yz)]
    }
}

/// Homogeneous matrix of a region with `zᵀTz = ‖p − pₖ‖² − rₖ²`.
pub fn region_matrix(region: &Region) -> Matrix4<f64> {
    let p = region.center;
    let mut t = Matrix4::identity();
    t.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-p));
    t.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-p).transpose());
    t[(3, 3)] = p.norm_squared() - region.radius * region.radius;
    t
}

/// Non-collision margin between an ellipsoid and a region sphere.
pub fn region_margin(ei: &Ellipsoid3, region: &Region) -> Result<f64, GeometryError> {
    shadow_margin(&shadows(ei)?, &region.shadows())
}

/// Quadratic form `zᵀ M z` for `z = [pᵀ 1]ᵀ`.
pub fn homogeneous_form(m: &Matrix4<f64>, p: &Vector3<f64>) -> f64 {
    let z = nalgebra::Vector4::new(p[0], p[1], p[2], 1.0);
    z.dot(&(m * z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_circle(x: f64) -> Ellipse2 {
        Ellipse2::circle(Plane::Xy, Vector2::new(x, 0.0), 1.0).unwrap()
    }

    #[test]
    fn region_matrix_membership() {
        let r = Region::new(1, Vector3::zeros(), 1.0, vec![]).unwrap();
        let t = region_matrix(&r);
        assert_relative_eq!(homogeneous_form(&t, &Vector3::zeros()), -1.0);
        assert_relative_eq!(homogeneous_form(&t, &Vector3::new(2.0, 0.0, 0.0)), 3.0);
        let r1 = Region::new(1, Vector3::new(-5.0, -5.0, 0.0), 4.0, vec![]).unwrap();
        let t1 = region_matrix(&r1);
        assert!(homogeneous_form(&t1, &Vector3::new(-3.0, -4.0, 0.0)) <= 0.0);
        assert_eq!(t1, t1.transpose());
        assert_eq!(t1.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::identity());
    }

    #[test]
    fn ellipsoid_homogeneous_matches_level() {
        let e = Ellipsoid3::planar(Vector3::new(1.0, -2.0, 0.5), 0.7, Vector3::new(2.0, 1.0, 0.5)).unwrap();
        let h = e.homogeneous();
        assert!((h - h.transpose()).norm() < 1e-12);
        for p in [Vector3::new(0.3, 0.1, 0.2), Vector3::new(5.0, 1.0, 0.0), e.center] {
            assert_relative_eq!(homogeneous_form(&h, &p), e.level(&p), epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_bad_ellipsoids() {
        assert!(Ellipsoid3::new(Vector3::zeros(), Matrix3::identity(), Vector3::new(1.0, 0.0, 1.0)).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Ellipsoid3::new(Vector3::zeros(), reflect, Vector3::repeat(1.0)).is_err());
        assert!(Ellipsoid3::new(Vector3::zeros(), Matrix3::identity() * 1.01, Vector3::repeat(1.0)).is_err());
    }

    #[test]
    fn sphere_shadow_is_unit_circle() {
        let s = Ellipsoid3::sphere(Vector3::zeros(), 1.0).unwrap();
        let e = project_ellipsoid(&s, Plane::Xy).unwrap();
        assert!((e.shape - Matrix2::identity()).norm() < 1e-14);
        assert_eq!(e.center, Vector2::zeros());
        assert!((e.matrix() - Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, -1.0))).norm() < 1e-14);
    }

    #[test]
    fn axis_aligned_shadow() {
        let e = Ellipsoid3::new(Vector3::new(3.0, 0.0, 0.0), Matrix3::identity(), Vector3::new(2.0, 1.0, 1.0)).unwrap();
        let s = project_ellipsoid(&e, Plane::Xy).unwrap();
        let (semi, _) = s.principal_axes();
        assert_relative_eq!(semi[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(semi[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.center[0], 3.0);
    }

    #[test]
    fn rotated_shadow_swaps_axes() {
        let e = Ellipsoid3::planar(Vector3::zeros(), std::f64::consts::FRAC_PI_2, Vector3::new(2.0, 1.0, 1.0)).unwrap();
        let s = project_ellipsoid(&e, Plane::Xy).unwrap();
        assert_relative_eq!(s.support_width(&Vector2::x()), 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.support_width(&Vector2::y()), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn planar_shadows_match_general_projection() {
        let semi = [0.9, 0.3, 0.2];
        for yaw in [0.0, 0.3, 1.9, -2.4] {
            let c = Vector3::new(1.5, -0.5, 0.0);
            let e = Ellipsoid3::planar(c, yaw, Vector3::from(semi)).unwrap();
            let general = shadows(&e).unwrap();
            let fast = planar_shadows(&c, yaw, &semi);
            for (g, f) in general.iter().zip(fast.iter()) {
                assert!((g.shape - f.shape).norm() < 1e-10 * g.shape.norm());
                assert_eq!(g.center, f.center);
            }
        }
    }

    #[test]
    fn circles_char_poly_closed_form() {
        // -(λ-1)(λ² - (2-d²)λ + 1)
        for d in [0.5, 1.0, 2.0, 3.0, 4.5] {
            let c = char_poly(&unit_circle(0.0), &unit_circle(d)).unwrap();
            let k = 2.0 - d * d;
            // expand: -(λ³ - (k+1)λ² + (k+1)λ - 1)
            assert_relative_eq!(c.c3, -1.0, epsilon = 1e-12);
            assert_relative_eq!(c.c2, k + 1.0, epsilon = 1e-12);
            assert_relative_eq!(c.c1, -(k + 1.0), epsilon = 1e-12);
            assert_relative_eq!(c.c0, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_ellipses_triple_root() {
        let a = Ellipse2::from_axes(Plane::Xy, Vector2::new(1.0, 2.0), 2.0, 0.5, 0.3).unwrap();
        let c = char_poly(&a, &a).unwrap();
        let det_a = a.matrix_about(&a.center).determinant();
        assert_relative_eq!(c.c3, det_a, epsilon = 1e-12);
        for x in [-2.0, 0.5, 3.0] {
            assert_relative_eq!(c.eval(x), det_a * (x - 1.0).powi(3), epsilon = 1e-10);
        }
        assert!(c.discriminant().abs() < 1e-12);
    }

    #[test]
    fn char_poly_is_translation_invariant() {
        let a = Ellipse2::from_axes(Plane::Xy, Vector2::new(0.3, 0.1), 2.0, 0.7, 0.4).unwrap();
        let b = Ellipse2::from_axes(Plane::Xy, Vector2::new(3.1, -1.0), 1.0, 0.4, 1.1).unwrap();
        let shift = Vector2::new(40.0, -25.0);
        let mut a2 = a;
        let mut b2 = b;
        a2.center += shift;
        b2.center += shift;
        let c1 = char_poly(&a, &b).unwrap();
        let c2 = char_poly(&a2, &b2).unwrap();
        assert_relative_eq!(c1.c0, c2.c0, max_relative = 1e-9);
        assert_relative_eq!(c1.c3, c2.c3, max_relative = 1e-9);
    }

    #[test]
    fn char_poly_errors() {
        let a = unit_circle(0.0);
        let mut b = unit_circle(1.0);
        b.plane = Plane::Xz;
        assert_eq!(char_poly(&a, &b), Err(GeometryError::PlaneMismatch));
        let degenerate = Ellipse2 {
            plane: Plane::Xy,
            center: Vector2::zeros(),
            shape: Matrix2::new(1.0, 0.0, 0.0, 0.0),
            level: 1.0,
        };
        assert_eq!(char_poly(&degenerate, &a), Err(GeometryError::DegenerateEllipse));
        assert!(Ellipse2::new(Plane::Xy, Vector2::zeros(), Matrix2::new(1.0, 0.0, 0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn discriminant_examples() {
        assert_relative_eq!(Cubic::new(1.0, 0.0, -1.0, 0.0).discriminant(), 4.0);
        assert_relative_eq!(Cubic::from_roots(1.0, [1.0, 1.0, 1.0]).discriminant(), 0.0);
        assert_relative_eq!(Cubic::new(1.0, 0.0, 1.0, 0.0).discriminant(), -4.0);
    }

    #[test]
    fn classification_examples() {
        let k = classify_roots(&Cubic::new(1.0, 0.0, -1.0, 0.0)).unwrap();
        assert_eq!(k.kind, RootKind::ThreeDistinctReal);
        for (r, e) in k.real_roots.iter().zip([-1.0, 0.0, 1.0]) {
            assert_relative_eq!(*r, e, epsilon = 1e-12);
        }
        let k = classify_roots(&Cubic::from_roots(1.0, [1.0, 1.0, 1.0])).unwrap();
        assert_eq!(k.kind, RootKind::RepeatedReal);
        let k = classify_roots(&Cubic::new(1.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(k.kind, RootKind::OneRealTwoComplex);
        assert_relative_eq!(k.real_roots[0], 0.0, epsilon = 1e-12);
        assert_eq!(classify_roots(&Cubic::new(0.0, 1.0, 1.0, 1.0)), Err(GeometryError::NotACubic));
    }

    #[test]
    fn unit_circle_verdicts() {
        let v = pair_verdict(&unit_circle(0.0), &unit_circle(3.0)).unwrap();
        assert_eq!(v.separation, Separation::Disjoint);
        let r = &v.roots.real_roots;
        assert_relative_eq!(r[0], -6.854, epsilon = 1e-3);
        assert_relative_eq!(r[1], -0.146, epsilon = 1e-3);
        assert_relative_eq!(r[2], 1.0, epsilon = 1e-9);
        assert_eq!(v.positive_roots, 1);

        let v = pair_verdict(&unit_circle(0.0), &unit_circle(2.0)).unwrap();
        assert_eq!(v.separation, Separation::Touching);
        assert_relative_eq!(v.roots.real_roots[0], -1.0, epsilon = 1e-6);

        let v = pair_verdict(&unit_circle(0.0), &unit_circle(1.0)).unwrap();
        assert_eq!(v.separation, Separation::Overlapping);
        assert_eq!(v.roots.kind, RootKind::OneRealTwoComplex);
    }

    #[test]
    fn four_point_overlap_is_not_disjoint() {
        // thin ellipse straddling a circle: Δ > 0 with three positive roots
        let a = unit_circle(0.0);
        let b = Ellipse2::from_axes(Plane::Xy, Vector2::new(0.05, 0.0), 1.5, 0.3, 0.0).unwrap();
        let v = pair_verdict(&a, &b).unwrap();
        assert_eq!(v.roots.kind, RootKind::ThreeDistinctReal);
        assert_eq!(v.positive_roots, 3);
        assert_eq!(v.separation, Separation::Overlapping);
        assert_eq!(plane_margin(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn delta_clamp_values() {
        assert_eq!(delta_clamp(-1.0), 0.0);
        assert_eq!(delta_clamp(0.0), 0.0);
        assert_eq!(delta_clamp(2.0), 8.0);
    }

    #[test]
    fn sphere_pair_margins() {
        let a = Ellipsoid3::sphere(Vector3::zeros(), 1.0).unwrap();
        let far = Ellipsoid3::sphere(Vector3::new(3.0, 0.0, 0.0), 1.0).unwrap();
        let touch = Ellipsoid3::sphere(Vector3::new(2.0, 0.0, 0.0), 1.0).unwrap();
        assert!(pair_margin(&a, &far).unwrap() > 0.0);
        assert!(pair_margin(&a, &touch).unwrap().abs() < 1e-20);
        assert_eq!(pair_margin(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn sphere_region_margins() {
        let s = Ellipsoid3::sphere(Vector3::zeros(), 1.0).unwrap();
        let far = Region::new(1, Vector3::new(10.0, 0.0, 0.0), 1.0, vec![]).unwrap();
        assert!(region_margin(&s, &far).unwrap() > 0.0);
        let touch = Region::new(1, Vector3::new(0.0, 3.0, 0.0), 2.0, vec![]).unwrap();
        assert!(region_margin(&s, &touch).unwrap().abs() < 1e-12);
        // containment: every root positive, so no plane certifies separation
        let around = Region::new(1, Vector3::new(0.5, 0.0, 0.0), 4.0, vec![]).unwrap();
        assert_eq!(region_margin(&s, &around).unwrap(), 0.0);
    }
}
