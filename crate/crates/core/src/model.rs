//! Control-affine robot models, nominal controllers, state propagation and
//! the orientation-augmented barrier.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BarrierField, BoundaryEval, Obstacle, GRAD_SINGULAR_TOL};

/// Step used for the numeric Hessian inside the augmented barrier.
pub const HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// ẋ = u, x ∈ ℝ², fully actuated.
    SingleIntegrator,
    /// Standard unicycle, x = [p_x, p_y, θ], u = [v, ω].
    Unicycle,
    /// Unicycle tracking a point shifted `a` ahead of the axle; the state's
    /// position components are the shifted point itself.
    ShiftedUnicycle { a: f64 },
}

/// Input limits: an optional Euclidean speed cap and/or a componentwise box.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InputLimits {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

impl InputLimits {
    pub fn validate(&self, p: usize) -> Result<()> {
        if let Some(cap) = self.speed_cap {
            if !(cap > 0.0) {
                return Err(Error::ConfigInvalid("speed cap must be positive".into()));
            }
        }
        match (&self.lower, &self.upper) {
            (Some(lo), Some(hi)) => {
                if lo.len() != p || hi.len() != p {
                    return Err(Error::ConfigInvalid("box bound dimension mismatch".into()));
                }
                if lo.iter().zip(hi).any(|(l, u)| l >= u) {
                    return Err(Error::ConfigInvalid("box bounds must satisfy lower < upper".into()));
                }
            }
            (None, None) => {}
            _ => return Err(Error::ConfigInvalid("box bounds need both lower and upper".into())),
        }
        Ok(())
    }

    pub fn omega_bound(&self) -> Option<f64> {
        match (&self.lower, &self.upper) {
            (Some(lo), Some(hi)) if lo.len() >= 2 => Some(lo[1].abs().min(hi[1].abs())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<InputLimits>,
}

/// Drift and input matrix of ẋ = f(x) + g(x)u at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFields {
    pub f: DVector<f64>,
    pub g: DMatrix<f64>,
}

impl RobotModel {
    pub fn new(kind: ModelKind) -> Self {
        RobotModel { kind, limits: None }
    }

    pub fn with_limits(mut self, limits: InputLimits) -> Self {
        self.limits = Some(limits);
        self
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            ModelKind::SingleIntegrator => 2,
            ModelKind::Unicycle | ModelKind::ShiftedUnicycle { .. } => 3,
        }
    }

    pub fn input_dim(&self) -> usize {
        2
    }

    pub fn is_fully_actuated(&self) -> bool {
        matches!(self.kind, ModelKind::SingleIntegrator)
    }

    pub fn validate(&self) -> Result<()> {
        if let ModelKind::ShiftedUnicycle { a } = self.kind {
            if !(a > 0.0) {
                return Err(Error::ConfigInvalid("shift distance a must be positive".into()));
            }
        }
        if let Some(l) = &self.limits {
            l.validate(self.input_dim())?;
        }
        Ok(())
    }

    pub fn affine_fields(&self, x: &DVector<f64>) -> Result<AffineFields> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch { expected: self.state_dim(), got: x.len() });
        }
        let g = match self.kind {
            ModelKind::SingleIntegrator => DMatrix::identity(2, 2),
            ModelKind::Unicycle => {
                let (s, c) = x[2].sin_cos();
                DMatrix::from_row_slice(3, 2, &[c, 0.0, s, 0.0, 0.0, 1.0])
            }
            ModelKind::ShiftedUnicycle { a } => {
                let (s, c) = x[2].sin_cos();
                DMatrix::from_row_slice(3, 2, &[c, -a * s, s, a * c, 0.0, 1.0])
            }
        };
        Ok(AffineFields { f: DVector::zeros(self.state_dim()), g })
    }

    /// Explicit Euler step at the control rate; unicycle headings are wrapped
    /// to (−π, π].
    pub fn propagate(&self, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
        if u.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: u.len() });
        }
        let fields = self.affine_fields(x)?;
        let mut next = x + (fields.f + fields.g * u) * dt;
        if self.state_dim() == 3 {
            next[2] = wrap_angle(next[2]);
        }
        Ok(next)
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    Fixed(f64),
    /// ε = 1/‖x − x*‖, i.e. unit speed toward the target.
    Normalized,
}

/// Linear nominal controller u = −ε(x − x*). Returns the input and an
/// at-target flag (the input is zero when the flag is set).
pub fn nominal_linear(x: Vector2<f64>, target: Vector2<f64>, gain: GainMode) -> (Vector2<f64>, bool) {
    let rel = x - target;
    let dist = rel.norm();
    if dist < 1e-12 {
        return (Vector2::zeros(), true);
    }
    let eps = match gain {
        GainMode::Fixed(e) => e,
        GainMode::Normalized => 1.0 / dist,
    };
    (-eps * rel, false)
}

/// Unicycle nominal controller: v is the speed of the linear nominal and ω
/// turns through the heading error within one control period (clamped to the
/// box bound when one is given).
pub fn nominal_unicycle(
    x: &DVector<f64>,
    target: Vector2<f64>,
    dt: f64,
    omega_bound: Option<f64>,
) -> (DVector<f64>, bool) {
    let (u_l, at_target) = nominal_linear(Vector2::new(x[0], x[1]), target, GainMode::Normalized);
    if at_target {
        return (DVector::zeros(2), true);
    }
    let psi = wrap_angle(u_l.y.atan2(u_l.x) - x[2]);
    let mut omega = psi / dt;
    if let Some(b) = omega_bound {
        omega = omega.clamp(-b, b);
    }
    (DVector::from_column_slice(&[u_l.norm(), omega]), false)
}

/// Orientation-augmented barrier over [p_x, p_y, θ]:
/// h_aug = h + w·(∂h/∂p_x)cosθ + w·(∂h/∂p_y)sinθ.
///
/// The positional derivatives of h_aug carry Hessian terms, evaluated by
/// central differences of the boundary gradient with step `HESSIAN_STEP`.
pub fn augmented_barrier(obs: &Obstacle, x: &DVector<f64>, w: f64) -> Result<BoundaryEval> {
    if x.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: x.len() });
    }
    let p = Vector2::new(x[0], x[1]);
    let (s, c) = x[2].sin_cos();
    let ev = obs.eval_boundary(p)?;
    let g = ev.grad2();

    let grad_at = |q: Vector2<f64>| -> Result<Vector2<f64>> { Ok(obs.eval_boundary(q)?.grad2()) };
    let dx = Vector2::new(HESSIAN_STEP, 0.0);
    let dy = Vector2::new(0.0, HESSIAN_STEP);
    let col_x = (grad_at(p + dx)? - grad_at(p - dx)?) / (2.0 * HESSIAN_STEP);
    let col_y = (grad_at(p + dy)? - grad_at(p - dy)?) / (2.0 * HESSIAN_STEP);
    let hess = 0.5 * (Matrix2::from_columns(&[col_x, col_y])
        + Matrix2::from_columns(&[col_x, col_y]).transpose());

    let heading = Vector2::new(c, s);
    let h_aug = ev.h + w * g.dot(&heading);
    let pos_grad = g + w * (hess * heading);
    let grad = DVector::from_column_slice(&[pos_grad.x, pos_grad.y, w * (-g.x * s + g.y * c)]);
    if grad.norm() < GRAD_SINGULAR_TOL {
        return Err(Error::GradientSingular(grad.norm()));
    }
    // Rigid advection of the augmented field by the obstacle's local surface
    // velocity; exact for translation (rotating obstacles are not paired with
    // the augmented barrier in this crate's scenarios).
    let motion_term = if obs.motion.is_stationary() {
        0.0
    } else {
        -pos_grad.dot(&obs.surface_point_velocity(p))
    };
    Ok(BoundaryEval { h: h_aug, grad_x: grad, motion_term })
}

/// Augmented barrier of one obstacle as a field over [p_x, p_y, θ].
pub struct AugmentedField<'a> {
    pub obs: &'a Obstacle,
    pub w: f64,
}

impl BarrierField for AugmentedField<'_> {
    fn dim(&self) -> usize {
        3
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let p = Vector2::new(x[0], x[1]);
        match self.obs.eval_boundary(p) {
            Ok(ev) => {
                let (s, c) = x[2].sin_cos();
                ev.h + self.w * (ev.grad_x[0] * c + ev.grad_x[1] * s)
            }
            Err(_) => self.obs.h(p),
        }
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BoundaryEval> {
        augmented_barrier(self.obs, x, self.w)
    }
}
