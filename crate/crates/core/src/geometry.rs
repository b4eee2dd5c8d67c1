//! Analytic obstacle shapes: boundary functions `h`, gradients, local frames
//! and surface velocities of rigidly moving obstacles.
//!
//! Sign convention: `h > 0` outside the obstacle, `h = 0` on its boundary,
//! `h < 0` inside.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradient norms below this are treated as singular.
pub const GRAD_SINGULAR_TOL: f64 = 1e-9;
/// Relative step for the central-difference gradients of shapes without an
/// analytic gradient.
pub const FD_GRAD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Disc of radius `c_r`: h = ‖p‖₂ − c_r in the obstacle frame.
    Circle { c_r: f64 },
    /// 4-norm ball of radius `c_b` offset by `c_a`: h = ‖p − c_a‖₄ − c_b.
    Funnel { c_a: [f64; 2], c_b: f64 },
    /// Annulus band with an angular gap (a "C"): the solid region is
    /// r_in ≤ ‖p‖ ≤ r_out at angles farther than `gap_half_angle` from
    /// `gap_heading`. `h` is the exact 2-D signed distance to that band.
    OpenRing {
        r_in: f64,
        r_out: f64,
        gap_half_angle: f64,
        gap_heading: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub p_o: [f64; 2],
    #[serde(default)]
    pub orientation: f64,
}

/// Rigid motion: translation of the rotation center plus a constant spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    /// Rotation center of the obstacle.
    pub x_r: [f64; 2],
    /// Linear velocity of the rotation center.
    pub v_r: [f64; 2],
    /// Angular rate (rad/s, counter-clockwise positive).
    pub omega: f64,
}

impl Motion {
    pub fn stationary() -> Self {
        Motion { x_r: [0.0, 0.0], v_r: [0.0, 0.0], omega: 0.0 }
    }

    pub fn is_stationary(&self) -> bool {
        self.v_r == [0.0, 0.0] && self.omega == 0.0
    }
}

/// Boundary value, spatial gradient and obstacle-motion term at a query.
///
/// `motion_term` is ∇_{x_o}h·ẋ_o, the contribution of obstacle motion to ḣ.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEval {
    pub h: f64,
    pub grad_x: DVector<f64>,
    pub motion_term: f64,
}

impl BoundaryEval {
    pub fn grad2(&self) -> Vector2<f64> {
        Vector2::new(self.grad_x[0], self.grad_x[1])
    }
}

/// Local obstacle frame at a query point: unit normal `n`, tangent basis,
/// the orthonormal basis `E = [n H]`, the reference direction `r` and the
/// non-orthonormal basis `E_r = [r H]` with its explicit inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFrame {
    pub n: Vector2<f64>,
    pub tangent: Vector2<f64>,
    pub e: Matrix2<f64>,
    pub r: Vector2<f64>,
    pub e_r: Matrix2<f64>,
    pub e_r_inv: Matrix2<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub shape: Shape,
    pub pose: Pose,
    #[serde(default = "Motion::stationary")]
    pub motion: Motion,
    /// Interior reference point r* in world coordinates.
    pub reference_point: [f64; 2],
}

fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn v2(a: [f64; 2]) -> Vector2<f64> {
    Vector2::new(a[0], a[1])
}

/// 2-D cross product of a scalar rate with a vector: ω × v = ω·[−v_y, v_x].
pub fn cross2(omega: f64, v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-omega * v.y, omega * v.x)
}

fn wrap_to_pi(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Distance from `p` to the radial segment {t·[cos φ, sin φ] : t ∈ [r0, r1]}.
fn dist_to_radial_segment(p: Vector2<f64>, phi: f64, r0: f64, r1: f64) -> f64 {
    let dir = Vector2::new(phi.cos(), phi.sin());
    let t = p.dot(&dir).clamp(r0, r1);
    (p - t * dir).norm()
}

impl Shape {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Circle { c_r } => c_r > 0.0,
            Shape::Funnel { c_b, .. } => c_b > 0.0,
            Shape::OpenRing { r_in, r_out, gap_half_angle, .. } => {
                r_in > 0.0
                    && r_in < r_out
                    && gap_half_angle > 0.0
                    && gap_half_angle < std::f64::consts::PI
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("ill-formed shape: {self:?}")))
        }
    }

    /// Boundary value in the obstacle frame.
    fn h_local(&self, q: Vector2<f64>) -> f64 {
        match *self {
            Shape::Circle { c_r } => q.norm() - c_r,
            Shape::Funnel { c_a, c_b } => {
                let w = q - v2(c_a);
                (w.x.powi(4) + w.y.powi(4)).powf(0.25) - c_b
            }
            Shape::OpenRing { r_in, r_out, gap_half_angle, gap_heading } => {
                let rho = q.norm();
                let theta = q.y.atan2(q.x);
                let to_gap = wrap_to_pi(theta - gap_heading).abs();
                let cap_lo = gap_heading + gap_half_angle;
                let cap_hi = gap_heading - gap_half_angle;
                let d_caps = dist_to_radial_segment(q, cap_lo, r_in, r_out)
                    .min(dist_to_radial_segment(q, cap_hi, r_in, r_out));
                if to_gap >= gap_half_angle {
                    // Angular coordinate lies over the solid band.
                    if rho > r_out {
                        rho - r_out
                    } else if rho < r_in {
                        r_in - rho
                    } else {
                        -(rho - r_in).min(r_out - rho).min(d_caps)
                    }
                } else {
                    // In the gap sector the nearest boundary is a cap segment.
                    d_caps
                }
            }
        }
    }

    /// Analytic gradient in the obstacle frame, `None` where only a
    /// finite-difference gradient is available.
    fn grad_local(&self, q: Vector2<f64>) -> Option<Vector2<f64>> {
        match *self {
            Shape::Circle { .. } => {
                let n = q.norm();
                Some(if n == 0.0 { Vector2::zeros() } else { q / n })
            }
            Shape::Funnel { c_a, .. } => {
                let w = q - v2(c_a);
                let norm4 = (w.x.powi(4) + w.y.powi(4)).powf(0.25);
                if norm4 == 0.0 {
                    return Some(Vector2::zeros());
                }
                let cube = norm4.powi(3);
                Some(Vector2::new(w.x.powi(3) / cube, w.y.powi(3) / cube))
            }
            Shape::OpenRing { .. } => None,
        }
    }

    /// Default interior reference point in the obstacle frame.
    fn default_reference_local(&self) -> Vector2<f64> {
        match *self {
            Shape::Circle { .. } => Vector2::zeros(),
            Shape::Funnel { c_a, .. } => v2(c_a),
            // Mid-band point on the bisector opposite the gap.
            Shape::OpenRing { r_in, r_out, gap_heading, .. } => {
                let mid = gap_heading + std::f64::consts::PI;
                0.5 * (r_in + r_out) * Vector2::new(mid.cos(), mid.sin())
            }
        }
    }
}

impl Obstacle {
    /// Builds an obstacle with the shape's natural interior reference point.
    pub fn new(shape: Shape, pose: Pose, motion: Motion) -> Result<Self> {
        shape.validate()?;
        let local = shape.default_reference_local();
        let world = v2(pose.p_o) + rot(pose.orientation) * local;
        let obs = Obstacle { shape, pose, motion, reference_point: [world.x, world.y] };
        obs.check_reference()?;
        Ok(obs)
    }

    pub fn stationary(shape: Shape, p_o: [f64; 2]) -> Result<Self> {
        Self::new(shape, Pose { p_o, orientation: 0.0 }, Motion::stationary())
    }

    pub fn with_reference_point(mut self, reference_point: [f64; 2]) -> Result<Self> {
        self.reference_point = reference_point;
        self.check_reference()?;
        Ok(self)
    }

    fn check_reference(&self) -> Result<()> {
        let h = self.h(v2(self.reference_point));
        if h < 0.0 {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!(
                "reference point {:?} is not strictly interior (h = {h})",
                self.reference_point
            )))
        }
    }

    /// Boundary value at a world point (total, no gradient).
    pub fn h(&self, p: Vector2<f64>) -> f64 {
        let q = rot(-self.pose.orientation) * (p - v2(self.pose.p_o));
        self.shape.h_local(q)
    }

    /// Velocity of the obstacle's material point coinciding with `p`:
    /// x̄_o = ẋ_R + ω × (p − x_R).
    pub fn surface_point_velocity(&self, p: Vector2<f64>) -> Vector2<f64> {
        v2(self.motion.v_r) + cross2(self.motion.omega, p - v2(self.motion.x_r))
    }

    /// Boundary value, spatial gradient and motion term at a world point.
    ///
    /// The gradient is analytic for circles and funnels and a central
    /// difference with step `1e-5·max(1, ‖p‖)` for open rings. The motion
    /// term uses the rigid-motion reduction ∇_{x_o}h·ẋ_o = −∇_x h·x̄_o(p).
    pub fn eval_boundary(&self, p: Vector2<f64>) -> Result<BoundaryEval> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let grad = match self.shape.grad_local(rot(-self.pose.orientation) * (p - v2(self.pose.p_o)))
        {
            Some(g_local) => rot(self.pose.orientation) * g_local,
            None => {
                let step = FD_GRAD_STEP * p.norm().max(1.0);
                let dx = Vector2::new(step, 0.0);
                let dy = Vector2::new(0.0, step);
                Vector2::new(
                    (self.h(p + dx) - self.h(p - dx)) / (2.0 * step),
                    (self.h(p + dy) - self.h(p - dy)) / (2.0 * step),
                )
            }
        };
        let norm = grad.norm();
        if !norm.is_finite() || norm < GRAD_SINGULAR_TOL {
            return Err(Error::GradientSingular(norm));
        }
        let motion_term = if self.motion.is_stationary() {
            0.0
        } else {
            -grad.dot(&self.surface_point_velocity(p))
        };
        Ok(BoundaryEval {
            h: self.h(p),
            grad_x: DVector::from_column_slice(&[grad.x, grad.y]),
            motion_term,
        })
    }

    /// Local frame at a world point.
    ///
    /// `n` is the normalized gradient, the tangent column its +90° rotation,
    /// `r = (p − r*)/‖p − r*‖` and `E_r⁻¹` is the explicit inverse of
    /// `[r H]` (valid wherever `n·r` is bounded away from zero).
    pub fn local_frame(&self, p: Vector2<f64>) -> Result<LocalFrame> {
        let ev = self.eval_boundary(p)?;
        let grad = ev.grad2();
        let grad_norm = grad.norm();
        let n = grad / grad_norm;
        let tangent = Vector2::new(-n.y, n.x);
        let rel = p - v2(self.reference_point);
        if rel.norm() < 1e-12 {
            return Err(Error::ReferenceCoincident);
        }
        let r = rel / rel.norm();
        let e = Matrix2::from_columns(&[n, tangent]);
        let e_r = Matrix2::from_columns(&[r, tangent]);
        let w0 = n.dot(&r);
        // First row n^T/w0; second row t^T (I − r n^T / w0).
        let e_r_inv = Matrix2::new(
            n.x / w0,
            n.y / w0,
            tangent.x - tangent.dot(&r) * n.x / w0,
            tangent.y - tangent.dot(&r) * n.y / w0,
        );
        Ok(LocalFrame { n, tangent, e, r, e_r, e_r_inv, grad_norm })
    }

    /// Obstacle advanced to time `t` under its exact rigid motion.
    ///
    /// Every attached point (pose center, rotation center, reference point)
    /// is mapped by p ↦ x_R + ẋ_R·t + R(ωt)(p − x_R).
    pub fn at_time(&self, t: f64) -> Obstacle {
        if self.motion.is_stationary() || t == 0.0 {
            return self.clone();
        }
        let x_r0 = v2(self.motion.x_r);
        let shift = v2(self.motion.v_r) * t;
        let rot_t = rot(self.motion.omega * t);
        let map = |p: Vector2<f64>| x_r0 + shift + rot_t * (p - x_r0);
        let p_o = map(v2(self.pose.p_o));
        let rp = map(v2(self.reference_point));
        Obstacle {
            shape: self.shape.clone(),
            pose: Pose {
                p_o: [p_o.x, p_o.y],
                orientation: self.pose.orientation + self.motion.omega * t,
            },
            motion: Motion {
                x_r: [x_r0.x + shift.x, x_r0.y + shift.y],
                v_r: self.motion.v_r,
                omega: self.motion.omega,
            },
            reference_point: [rp.x, rp.y],
        }
    }
}

/// Orthonormal tangent basis of the hyperplane normal to the unit vector `n`
/// (d×(d−1)). In 2-D this is the +90° rotation of `n`; in 3-D a deterministic
/// pair completing `n` to a right-handed frame.
pub fn tangent_basis(n: &DVector<f64>) -> DMatrix<f64> {
    match n.len() {
        2 => DMatrix::from_column_slice(2, 1, &[-n[1], n[0]]),
        3 => {
            // Seed with the axis least aligned with n, then Gram-Schmidt.
            let k = (0..3)
                .min_by(|&i, &j| n[i].abs().partial_cmp(&n[j].abs()).unwrap())
                .unwrap();
            let mut e1 = DVector::zeros(3);
            e1[k] = 1.0;
            let e1 = {
                let v = &e1 - n * n.dot(&e1);
                let nv = v.norm();
                v / nv
            };
            let e2 = DVector::from_column_slice(&[
                n[1] * e1[2] - n[2] * e1[1],
                n[2] * e1[0] - n[0] * e1[2],
                n[0] * e1[1] - n[1] * e1[0],
            ]);
            let mut basis = DMatrix::zeros(3, 2);
            basis.set_column(0, &e1);
            basis.set_column(1, &e2);
            basis
        }
        d => panic!("tangent basis only defined for d in {{2, 3}}, got {d}"),
    }
}

/// Scalar field with a barrier interpretation over a d-dimensional state.
///
/// Implemented by positional barriers (d = 2) and the orientation-augmented
/// barrier (d = 3); drives the geodesic rollouts and the CBF row assembly.
pub trait BarrierField {
    fn dim(&self) -> usize;
    /// Value only (total, defined everywhere).
    fn value(&self, x: &DVector<f64>) -> f64;
    /// Value, gradient and obstacle-motion term.
    fn eval(&self, x: &DVector<f64>) -> Result<BoundaryEval>;
}

/// Positional barrier of one obstacle, as a field over ℝ².
pub struct PositionalField<'a>(pub &'a Obstacle);

impl BarrierField for PositionalField<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.0.h(Vector2::new(x[0], x[1]))
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BoundaryEval> {
        self.0.eval_boundary(Vector2::new(x[0], x[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circle(c_r: f64, at: [f64; 2]) -> Obstacle {
        Obstacle::stationary(Shape::Circle { c_r }, at).unwrap()
    }

    fn funnel() -> Obstacle {
        Obstacle::stationary(Shape::Funnel { c_a: [2.5, 0.0], c_b: 0.1 }, [0.0, 0.0]).unwrap()
    }

    fn ring() -> Obstacle {
        Obstacle::stationary(
            Shape::OpenRing {
                r_in: 2.0,
                r_out: 2.3,
                gap_half_angle: std::f64::consts::FRAC_PI_4,
                gap_heading: 0.0,
            },
            [0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn circle_boundary_at_3_0() {
        let ev = circle(2.0, [0.0, 0.0]).eval_boundary(Vector2::new(3.0, 0.0)).unwrap();
        assert_relative_eq!(ev.h, 1.0, epsilon = 1e-12);
        assert_relative_eq!(ev.grad_x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ev.grad_x[1], 0.0, epsilon = 1e-12);
        assert_eq!(ev.motion_term, 0.0);
    }

    #[test]
    fn funnel_center_value() {
        // h at the funnel center is −c_b; the gradient there is singular.
        let f = funnel();
        assert_relative_eq!(f.h(Vector2::new(2.5, 0.0)), -0.1, epsilon = 1e-12);
        assert!(matches!(
            f.eval_boundary(Vector2::new(2.5, 0.0)),
            Err(Error::GradientSingular(_))
        ));
    }

    #[test]
    fn ring_mid_band_depth() {
        // Mid-circle point inside the solid arc: the band is 0.3 wide, so the
        // signed distance at its middle is half the band width.
        let r = ring();
        let p = 2.15 * Vector2::new(std::f64::consts::PI.cos(), std::f64::consts::PI.sin());
        assert_relative_eq!(r.h(p), -0.15, epsilon = 1e-12);
    }

    #[test]
    fn ring_exact_distance_matches_boundary_sampling() {
        // Brute-force oracle: min distance to 10^4 sampled boundary points.
        let r = ring();
        let (r_in, r_out, a, g) = (2.0, 2.3, std::f64::consts::FRAC_PI_4, 0.0);
        let mut boundary = Vec::new();
        let n_samp = 10_000;
        for i in 0..n_samp {
            let s = i as f64 / (n_samp - 1) as f64;
            // Solid arc spans [g+a, g+2π−a]; walk both arcs and both caps.
            let phi = g + a + s * (std::f64::consts::TAU - 2.0 * a);
            boundary.push(r_in * Vector2::new(phi.cos(), phi.sin()));
            boundary.push(r_out * Vector2::new(phi.cos(), phi.sin()));
            for cap in [g + a, g - a] {
                let t = r_in + s * (r_out - r_in);
                boundary.push(t * Vector2::new(cap.cos(), cap.sin()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let p = Vector2::new(rng.gen_range(-3.5..3.5), rng.gen_range(-3.5..3.5));
            let d_oracle = boundary.iter().map(|b| (p - b).norm()).fold(f64::MAX, f64::min);
            assert_relative_eq!(r.h(p).abs(), d_oracle, epsilon = 2e-3);
        }
    }

    #[test]
    fn surface_velocity_cases() {
        let still = circle(1.0, [0.0, 0.0]);
        assert_eq!(still.surface_point_velocity(Vector2::new(4.0, 5.0)), Vector2::zeros());

        let translating = Obstacle::new(
            Shape::Circle { c_r: 1.0 },
            Pose { p_o: [0.0, 0.0], orientation: 0.0 },
            Motion { x_r: [0.0, 0.0], v_r: [1.0, 0.0], omega: 0.0 },
        )
        .unwrap();
        assert_eq!(translating.surface_point_velocity(Vector2::new(-3.0, 9.0)), Vector2::new(1.0, 0.0));

        let spinning = Obstacle::new(
            Shape::Circle { c_r: 1.0 },
            Pose { p_o: [0.0, 0.0], orientation: 0.0 },
            Motion { x_r: [0.0, 0.0], v_r: [0.5, -0.25], omega: 1.0 },
        )
        .unwrap();
        let v = spinning.surface_point_velocity(Vector2::new(0.0, 2.0));
        assert_relative_eq!(v.x, -2.0 + 0.5, epsilon = 1e-12);
        assert_relative_eq!(v.y, -0.25, epsilon = 1e-12);
    }

    #[test]
    fn frame_on_circle_is_radial() {
        let f = circle(2.0, [0.0, 0.0]).local_frame(Vector2::new(3.0, 0.0)).unwrap();
        assert_relative_eq!(f.n, Vector2::new(1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(f.tangent, Vector2::new(0.0, 1.0), epsilon = 1e-12);
        assert_relative_eq!(f.r, Vector2::new(1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn funnel_frame_reference_direction() {
        let f = funnel().local_frame(Vector2::new(4.0, 0.0)).unwrap();
        assert_relative_eq!(f.r, Vector2::new(1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(f.n, Vector2::new(1.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn frame_identities_random() {
        let shapes = [circle(2.0, [0.3, -0.4]), funnel(), ring()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for obs in &shapes {
            let mut checked = 0;
            while checked < 400 {
                let p = Vector2::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0));
                if obs.h(p) <= 1e-3 {
                    continue;
                }
                let f = match obs.local_frame(p) {
                    Ok(f) => f,
                    Err(_) => continue,
                };
                let id = f.e.transpose() * f.e;
                assert_relative_eq!(id, Matrix2::identity(), epsilon = 1e-10);
                assert!(f.n.dot(&f.tangent).abs() <= 1e-10);
                if f.n.dot(&f.r) > 1e-6 {
                    let prod = f.e_r * f.e_r_inv;
                    assert_relative_eq!(prod, Matrix2::identity(), epsilon = 1e-10);
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn circle_reference_equals_normal() {
        let obs = circle(2.0, [1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = Vector2::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
            if obs.h(p) <= 1e-6 {
                continue;
            }
            let f = obs.local_frame(p).unwrap();
            assert_relative_eq!(f.r, f.n, epsilon = 1e-12);
        }
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let shapes = [circle(2.0, [0.5, 0.5]), funnel(), ring()];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for obs in &shapes {
            let mut checked = 0;
            while checked < 1000 {
                let p = Vector2::new(rng.gen_range(-7.0..7.0), rng.gen_range(-7.0..7.0));
                if obs.h(p) <= 0.02 {
                    continue;
                }
                let ev = match obs.eval_boundary(p) {
                    Ok(e) => e,
                    Err(_) => continue,
                };
                let step = 1e-6 * p.norm().max(1.0);
                let fd = Vector2::new(
                    (obs.h(p + Vector2::new(step, 0.0)) - obs.h(p - Vector2::new(step, 0.0)))
                        / (2.0 * step),
                    (obs.h(p + Vector2::new(0.0, step)) - obs.h(p - Vector2::new(0.0, step)))
                        / (2.0 * step),
                );
                let err = (ev.grad2() - fd).norm() / fd.norm().max(1e-12);
                assert!(err < 1e-4, "gradient mismatch {err} at {p:?} for {:?}", obs.shape);
                checked += 1;
            }
        }
    }

    #[test]
    fn sign_partitions_match_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = circle(2.0, [0.7, -0.2]);
        let r = ring();
        for _ in 0..2000 {
            let p = Vector2::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let inside_circle = (p - Vector2::new(0.7, -0.2)).norm() < 2.0;
            if c.h(p).abs() > 1e-9 {
                assert_eq!(c.h(p) < 0.0, inside_circle);
            }
            let rho = p.norm();
            let to_gap = wrap_to_pi(p.y.atan2(p.x)).abs();
            let inside_ring =
                rho > 2.0 && rho < 2.3 && to_gap > std::f64::consts::FRAC_PI_4;
            if r.h(p).abs() > 1e-9 {
                assert_eq!(r.h(p) < 0.0, inside_ring, "at {p:?}");
            }
        }
    }

    #[test]
    fn moving_obstacle_rigid_map() {
        let obs = Obstacle::new(
            Shape::Circle { c_r: 1.0 },
            Pose { p_o: [2.0, 0.0], orientation: 0.0 },
            Motion { x_r: [0.0, 0.0], v_r: [0.0, 0.0], omega: std::f64::consts::FRAC_PI_2 },
        )
        .unwrap();
        let moved = obs.at_time(1.0);
        // Quarter turn about the origin carries the center to [0, 2].
        assert_relative_eq!(v2(moved.pose.p_o), Vector2::new(0.0, 2.0), epsilon = 1e-12);
        assert_relative_eq!(moved.h(Vector2::new(0.0, 3.5)), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn motion_term_matches_time_difference() {
        // ḣ at a fixed point equals the motion term from the rigid reduction.
        let obs = Obstacle::new(
            Shape::OpenRing {
                r_in: 2.0,
                r_out: 2.3,
                gap_half_angle: 0.9,
                gap_heading: 0.3,
            },
            Pose { p_o: [1.0, 0.5], orientation: 0.2 },
            Motion { x_r: [0.5, 0.0], v_r: [0.4, -0.3], omega: 0.7 },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut checked = 0;
        while checked < 100 {
            let p = Vector2::new(rng.gen_range(-5.0..6.0), rng.gen_range(-5.0..6.0));
            if obs.h(p) < 0.1 {
                continue;
            }
            let ev = obs.eval_boundary(p).unwrap();
            let dt = 1e-6;
            let fd = (obs.at_time(dt).h(p) - obs.at_time(-dt).h(p)) / (2.0 * dt);
            assert_relative_eq!(ev.motion_term, fd, epsilon = 1e-4, max_relative = 1e-4);
            checked += 1;
        }
    }
}
