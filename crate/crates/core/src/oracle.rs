//! Independent sampling oracle for the ellipse separation predicate.
//!
//! Nothing here touches the characteristic cubic: the boundary of each
//! ellipse is sampled densely and every sample is measured against the other
//! ellipse with an exact point-to-ellipse distance. The minimum signed
//! distance over both boundaries is the clearance (negative when the sets
//! meet).

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{pair_verdict, Ellipse2, Plane, Separation};

/// Boundary samples per ellipse.
pub const BOUNDARY_SAMPLES: usize = 4096;

/// Clearance band inside which the oracle abstains.
pub const CLEARANCE_BAND: f64 = 1e-3;

fn robust_length(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Root of the secular function for a point strictly off the axes.
fn get_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { robust_length(n0, z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..1100 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let gs = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if gs > 0.0 {
            s0 = s;
        } else if gs < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

/// Distance from `(y0, y1)` (first quadrant) to the boundary of the
/// axis-aligned ellipse with semi-axes `e0 ≥ e1`.
fn distance_first_quadrant(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g != 0.0 {
                let r0 = (e0 / e1) * (e0 / e1);
                let sbar = get_root(r0, z0, z1, g);
                let x0 = r0 * y0 / (sbar + r0);
                let x1 = y1 / (sbar + 1.0);
                ((x0 - y0).powi(2) + (x1 - y1).powi(2)).sqrt()
            } else {
                0.0
            }
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            ((x0 - y0).powi(2) + x1 * x1).sqrt()
        } else {
            (y0 - e0).abs()
        }
    }
}

/// Principal-frame data of an ellipse: semi-axes (longest first) and the
/// rotation whose columns are the matching axes.
#[derive(Debug, Clone, Copy)]
struct Frame {
    center: Vector2<f64>,
    semi: Vector2<f64>,
    axes: Matrix2<f64>,
}

impl Frame {
    fn of(e: &Ellipse2) -> Self {
        let (semi, axes) = e.principal_axes();
        Self {
            center: e.center,
            semi,
            axes,
        }
    }

    fn local(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.axes.transpose() * (p - self.center)
    }

    fn boundary(&self, t: f64) -> Vector2<f64> {
        self.center + self.axes * Vector2::new(self.semi[0] * t.cos(), self.semi[1] * t.sin())
    }

    fn signed_distance(&self, p: &Vector2<f64>) -> f64 {
        let y = self.local(p);
        let (e0, e1) = (self.semi[0], self.semi[1]);
        let d = if e0 - e1 <= 1e-12 * e0 {
            (y.norm() - e0).abs()
        } else {
            distance_first_quadrant(e0, e1, y[0].abs(), y[1].abs())
        };
        let inside = (y[0] / e0).powi(2) + (y[1] / e1).powi(2) < 1.0;
        if inside {
            -d
        } else {
            d
        }
    }
}

/// Signed distance from `p` to the boundary of `e` (negative inside).
pub fn signed_distance(e: &Ellipse2, p: &Vector2<f64>) -> f64 {
    Frame::of(e).signed_distance(p)
}

/// Minimum over the boundary of `a` of the signed distance to `b`, sampled
/// and then refined around the best sample by golden-section search.
fn boundary_min(a: &Frame, b: &Frame, samples: usize) -> f64 {
    let h = std::f64::consts::TAU / samples as f64;
    let f = |t: f64| b.signed_distance(&a.boundary(t));
    let (mut best_t, mut best) = (0.0, f64::INFINITY);
    for k in 0..samples {
        let t = k as f64 * h;
        let v = f(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (best_t - h, best_t + h);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    best.min(f1).min(f2)
}

/// Signed clearance between two ellipses: positive gap when disjoint,
/// negative when the closed sets overlap.
pub fn clearance(a: &Ellipse2, b: &Ellipse2) -> f64 {
    clearance_with(a, b, BOUNDARY_SAMPLES)
}

pub fn clearance_with(a: &Ellipse2, b: &Ellipse2, samples: usize) -> f64 {
    let fa = Frame::of(a);
    let fb = Frame::of(b);
    boundary_min(&fa, &fb, samples).min(boundary_min(&fb, &fa, samples))
}

/// Random ellipse with semi-axes in `[0.2, 3]`, center in `[−10, 10]²` and
/// orientation in `[0, π)`.
pub fn random_ellipse<R: Rng>(rng: &mut R) -> Ellipse2 {
    let a = rng.gen_range(0.2..=3.0);
    let b = rng.gen_range(0.2..=3.0);
    let c = Vector2::new(rng.gen_range(-10.0..=10.0), rng.gen_range(-10.0..=10.0));
    let angle = rng.gen_range(0.0..std::f64::consts::PI);
    Ellipse2::from_axes(Plane::Xy, c, a, b, angle).expect("positive semi-axes")
}

/// Outcome of comparing the algebraic predicate with the oracle on one pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCheck {
    pub index: usize,
    pub clearance: f64,
    pub predicate: Separation,
    pub positive_roots: usize,
    /// `None` when the clearance is inside the abstention band.
    pub agrees: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GeomReport {
    pub pairs: usize,
    pub compared: usize,
    pub agreed: usize,
    pub in_band: usize,
    pub oracle_overlaps: usize,
    /// Pairs with no positive root (should never happen).
    pub missing_positive_root: usize,
    /// Non-overlapping pairs whose positive root is not unique.
    pub extra_positive_roots_separated: usize,
    /// Overlapping pairs with more than one positive root (informational).
    pub extra_positive_roots_overlapping: usize,
    pub errors: usize,
    /// Smallest |clearance| among compared pairs.
    pub closest_clearance: f64,
    pub disagreements: Vec<PairCheck>,
}

impl GeomReport {
    pub fn full_agreement(&self) -> bool {
        self.agreed == self.compared && self.errors == 0
    }

    pub fn positive_root_exists(&self) -> bool {
        self.missing_positive_root == 0
    }

    pub fn passed(&self) -> bool {
        self.full_agreement() && self.positive_root_exists() && self.extra_positive_roots_separated == 0
    }
}

/// Check one pair against the oracle.
pub fn check_pair(index: usize, a: &Ellipse2, b: &Ellipse2) -> Option<PairCheck> {
    let verdict = pair_verdict(a, b).ok()?;
    let c = clearance(a, b);
    let agrees = if c.abs() <= CLEARANCE_BAND {
        None
    } else if c > 0.0 {
        Some(verdict.separation == Separation::Disjoint)
    } else {
        Some(verdict.separation == Separation::Overlapping)
    };
    Some(PairCheck {
        index,
        clearance: c,
        predicate: verdict.separation,
        positive_roots: verdict.positive_roots,
        agrees,
    })
}

/// Compare the predicate and oracle on `pairs` seeded random pairs.
pub fn geomcheck(pairs: usize, seed: u64) -> GeomReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let list: Vec<(Ellipse2, Ellipse2)> = (0..pairs)
        .map(|_| (random_ellipse(&mut rng), random_ellipse(&mut rng)))
        .collect();
    geomcheck_pairs(&list)
}

pub fn geomcheck_pairs(list: &[(Ellipse2, Ellipse2)]) -> GeomReport {
    let mut report = GeomReport {
        pairs: list.len(),
        closest_clearance: f64::INFINITY,
        ..Default::default()
    };
    for (k, (a, b)) in list.iter().enumerate() {
        let Some(check) = check_pair(k, a, b) else {
            report.errors += 1;
            continue;
        };
        if check.clearance < 0.0 {
            report.oracle_overlaps += 1;
        }
        if check.positive_roots == 0 {
            report.missing_positive_root += 1;
        } else if check.positive_roots > 1 {
            if check.predicate == Separation::Overlapping {
                report.extra_positive_roots_overlapping += 1;
            } else {
                report.extra_positive_roots_separated += 1;
            }
        }
        match check.agrees {
            None => report.in_band += 1,
            Some(ok) => {
                report.compared += 1;
                report.closest_clearance = report.closest_clearance.min(check.clearance.abs());
                if ok {
                    report.agreed += 1;
                } else {
                    report.disagreements.push(check);
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn circle_distances() {
        let c = Ellipse2::circle(Plane::Xy, Vector2::zeros(), 1.0).unwrap();
        assert_relative_eq!(signed_distance(&c, &Vector2::new(3.0, 0.0)), 2.0, epsilon = 1e-12);
        assert_relative_eq!(signed_distance(&c, &Vector2::new(0.0, 0.25)), -0.75, epsilon = 1e-12);
    }

    #[test]
    fn ellipse_distance_on_axes_and_off() {
        let e = Ellipse2::from_axes(Plane::Xy, Vector2::zeros(), 2.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(signed_distance(&e, &Vector2::new(5.0, 0.0)), 3.0, epsilon = 1e-12);
        assert_relative_eq!(signed_distance(&e, &Vector2::new(0.0, 4.0)), 3.0, epsilon = 1e-12);
        assert_relative_eq!(signed_distance(&e, &Vector2::new(0.0, 0.0)), -1.0, epsilon = 1e-12);
        // brute force for an off-axis point
        let p = Vector2::new(1.7, 1.3);
        let brute = (0..200_000)
            .map(|k| {
                let t = k as f64 / 200_000.0 * std::f64::consts::TAU;
                (Vector2::new(2.0 * t.cos(), t.sin()) - p).norm()
            })
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(signed_distance(&e, &p), brute, epsilon = 1e-8);
    }

    #[test]
    fn clearance_of_unit_circles() {
        let a = Ellipse2::circle(Plane::Xy, Vector2::zeros(), 1.0).unwrap();
        for (d, want) in [(3.0, 1.0), (2.0, 0.0), (1.0, -1.0)] {
            let b = Ellipse2::circle(Plane::Xy, Vector2::new(d, 0.0), 1.0).unwrap();
            assert_relative_eq!(clearance(&a, &b), want, epsilon = 1e-9);
        }
    }

    #[test]
    fn containment_is_negative() {
        let big = Ellipse2::circle(Plane::Xy, Vector2::zeros(), 5.0).unwrap();
        let small = Ellipse2::from_axes(Plane::Xy, Vector2::new(0.5, 0.0), 1.0, 0.3, 0.4).unwrap();
        assert!(clearance(&big, &small) < -1.0);
    }

    #[test]
    fn known_overlap_is_flagged() {
        let a = Ellipse2::circle(Plane::Xy, Vector2::zeros(), 1.0).unwrap();
        let b = Ellipse2::circle(Plane::Xy, Vector2::new(1.0, 0.0), 1.0).unwrap();
        let report = geomcheck_pairs(&[(a, b)]);
        assert_eq!(report.oracle_overlaps, 1);
        assert_eq!(report.agreed, 1);
    }

    #[test]
    fn geomcheck_is_deterministic() {
        let a = geomcheck(50, 9);
        let b = geomcheck(50, 9);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(geomcheck(0, 1).pairs, 0);
        assert!(geomcheck(0, 1).passed());
    }
}
