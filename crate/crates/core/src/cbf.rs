//! Standard CBF-QP safety filters for control-affine and fully actuated
//! systems, plus the single-obstacle closed-form solutions.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Obstacle;
use crate::model::{augmented_barrier, InputLimits, RobotModel};
use crate::qp::{ActiveSetSolver, QProblem, QpStatus};

/// Obstacles farther than this (in barrier value) are not sensed.
pub const DEFAULT_SENSING_RANGE: f64 = 3.0;
/// Sides of the inscribed polygon standing in for a Euclidean speed cap
/// inside the QPs (the polygon lies inside the disc, so the cap is never
/// exceeded; the radius loss is cos(π/K) ≈ 0.5%).
const SPEED_POLYGON_SIDES: usize = 32;

/// Extended K-infinity function family: strictly increasing with α(0) = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaFn {
    Linear { c: f64 },
    Cubic { c: f64 },
}

impl AlphaFn {
    pub fn eval(&self, h: f64) -> f64 {
        match *self {
            AlphaFn::Linear { c } => c * h,
            AlphaFn::Cubic { c } => c * h * h * h,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = match *self {
            AlphaFn::Linear { c } | AlphaFn::Cubic { c } => c,
        };
        if c > 0.0 {
            Ok(())
        } else {
            Err(Error::ConfigInvalid("alpha gain must be positive".into()))
        }
    }
}

/// Which barrier a controller constrains: the positional h, or the
/// orientation-augmented h with weight `w` (3-state models only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierMode {
    Positional,
    Augmented { w: f64 },
}

impl BarrierMode {
    pub fn eval(&self, obs: &Obstacle, x: &DVector<f64>) -> Result<crate::geometry::BoundaryEval> {
        match *self {
            BarrierMode::Positional => {
                let ev = obs.eval_boundary(Vector2::new(x[0], x[1]))?;
                if x.len() == 2 {
                    Ok(ev)
                } else {
                    // Lift the positional gradient into the 3-state model
                    // (∂h/∂θ = 0).
                    let mut grad = DVector::zeros(x.len());
                    grad[0] = ev.grad_x[0];
                    grad[1] = ev.grad_x[1];
                    Ok(crate::geometry::BoundaryEval { h: ev.h, grad_x: grad, motion_term: ev.motion_term })
                }
            }
            BarrierMode::Augmented { w } => augmented_barrier(obs, x, w),
        }
    }
}

/// One linear safety constraint in solver form a_u·u ≥ b.
#[derive(Debug, Clone, PartialEq)]
pub struct CbfRow {
    pub a_u: DVector<f64>,
    pub b: f64,
    pub obstacle: usize,
}

/// Builds one CBF row per sensed obstacle:
/// a_u = (∇h)ᵀ g(x), b = −α(h) − (∇h)ᵀ f(x) − ∇_{x_o}h·ẋ_o.
///
/// Obstacles outside the sensing range produce no row; obstacles whose
/// gradient is singular at `x` are skipped and reported in the second
/// return value.
pub fn build_cbf_rows(
    model: &RobotModel,
    obstacles: &[Obstacle],
    x: &DVector<f64>,
    alpha: AlphaFn,
    mode: BarrierMode,
    sensing_range: f64,
) -> Result<(Vec<CbfRow>, Vec<usize>)> {
    let fields = model.affine_fields(x)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (idx, obs) in obstacles.iter().enumerate() {
        if obs.h(Vector2::new(x[0], x[1])) > sensing_range {
            continue;
        }
        let ev = match mode.eval(obs, x) {
            Ok(ev) => ev,
            Err(Error::GradientSingular(_)) => {
                skipped.push(idx);
                continue;
            }
            Err(e) => return Err(e),
        };
        let a_u = (ev.grad_x.transpose() * &fields.g).transpose();
        let b = -alpha.eval(ev.h) - ev.grad_x.dot(&fields.f) - ev.motion_term;
        rows.push(CbfRow { a_u, b, obstacle: idx });
    }
    Ok((rows, skipped))
}

/// Appends input-limit rows (box bounds and the polygonal speed cap) to a QP
/// whose first `p` variables are the control input.
pub fn push_limit_rows(qp: &mut QProblem, limits: Option<&InputLimits>, p: usize) {
    let Some(l) = limits else { return };
    let n = qp.c.len();
    if let (Some(lo), Some(hi)) = (&l.lower, &l.upper) {
        for j in 0..p {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            qp.push_ineq(&row, lo[j]);
            row[j] = -1.0;
            qp.push_ineq(&row, -hi[j]);
        }
    }
    if let Some(cap) = l.speed_cap {
        assert_eq!(p, 2, "speed cap only defined for planar inputs");
        let k = SPEED_POLYGON_SIDES;
        let apothem = cap * (std::f64::consts::PI / k as f64).cos();
        for i in 0..k {
            let phi = std::f64::consts::TAU * i as f64 / k as f64;
            let mut row = vec![0.0; n];
            row[0] = -phi.cos();
            row[1] = -phi.sin();
            qp.push_ineq(&row, -apothem);
        }
    }
}

/// Controller-step result shared by every QP-backed safety filter.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub u: DVector<f64>,
    /// Some QP stage came back infeasible.
    pub infeasible: bool,
    /// The braking fallback u = 0 was applied.
    pub fallback: bool,
    /// The liveness row was dropped to restore feasibility (onM only).
    pub phi_dropped: bool,
}

impl StepOutcome {
    pub fn clean(u: DVector<f64>) -> Self {
        StepOutcome { u, infeasible: false, fallback: false, phi_dropped: false }
    }

    pub fn brake(p: usize) -> Self {
        StepOutcome { u: DVector::zeros(p), infeasible: true, fallback: true, phi_dropped: false }
    }
}

/// One CBF-QP step: min ‖u − u_nom‖² subject to all CBF rows and input
/// limits. Infeasible problems brake (u = 0) and are flagged.
#[allow(clippy::too_many_arguments)]
pub fn cbf_qp_step(
    solver: &mut ActiveSetSolver,
    model: &RobotModel,
    obstacles: &[Obstacle],
    x: &DVector<f64>,
    u_nom: &DVector<f64>,
    alpha: AlphaFn,
    mode: BarrierMode,
    sensing_range: f64,
) -> Result<StepOutcome> {
    let p = model.input_dim();
    if u_nom.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: u_nom.len() });
    }
    let (rows, _skipped) = build_cbf_rows(model, obstacles, x, alpha, mode, sensing_range)?;
    let mut qp = QProblem::nearest_point(u_nom);
    for row in &rows {
        qp.push_ineq(row.a_u.as_slice(), row.b);
    }
    push_limit_rows(&mut qp, model.limits.as_ref(), p);
    let sol = solver.solve(&qp);
    Ok(match sol.status {
        QpStatus::Optimal => StepOutcome::clean(sol.z),
        QpStatus::Infeasible => StepOutcome::brake(p),
    })
}

/// Closed-form single-obstacle CBF solution (no input limits):
///
/// u = u_nom when the constraint is slack, otherwise
/// u = u_nom − (L_f h + L_g h·u_nom + α)/(L_g h L_g hᵀ)·L_g hᵀ,
/// with α standing for α(h) + ∇_{x_o}h·ẋ_o. The fully actuated case is the
/// same expression with f = 0, g = I.
pub fn cbf_closed_form(
    model: &RobotModel,
    x: &DVector<f64>,
    u_nom: &DVector<f64>,
    obstacle: &Obstacle,
    alpha: AlphaFn,
    mode: BarrierMode,
) -> Result<DVector<f64>> {
    let fields = model.affine_fields(x)?;
    let ev = mode.eval(obstacle, x)?;
    let alpha_total = alpha.eval(ev.h) + ev.motion_term;
    let lfh = ev.grad_x.dot(&fields.f);
    let lgh = (ev.grad_x.transpose() * &fields.g).transpose();
    let lhs = lfh + lgh.dot(u_nom);
    if lhs >= -alpha_total {
        return Ok(u_nom.clone());
    }
    let denom = lgh.norm_squared();
    if denom < 1e-14 {
        return Err(Error::DegenerateRow);
    }
    Ok(u_nom - (lhs + alpha_total) / denom * lgh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;
    use crate::model::ModelKind;
    use approx::assert_relative_eq;

    fn circle2() -> Obstacle {
        Obstacle::stationary(Shape::Circle { c_r: 2.0 }, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn alpha_families() {
        assert_eq!(AlphaFn::Linear { c: 1.0 }.eval(1.0), 1.0);
        assert_eq!(AlphaFn::Linear { c: 5.0 }.eval(1.0), 5.0);
        assert_eq!(AlphaFn::Cubic { c: 2.0 }.eval(0.0), 0.0);
        // Strictly increasing over a sampled grid.
        for fam in [AlphaFn::Linear { c: 0.7 }, AlphaFn::Cubic { c: 0.7 }] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..1000 {
                let h = -10.0 + 20.0 * i as f64 / 999.0;
                let v = fam.eval(h);
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn integrator_row_on_circle() {
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let x = DVector::from_column_slice(&[3.0, 0.0]);
        let (rows, _) = build_cbf_rows(
            &model,
            &[circle2()],
            &x,
            AlphaFn::Linear { c: 1.0 },
            BarrierMode::Positional,
            DEFAULT_SENSING_RANGE,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_relative_eq!(rows[0].a_u[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(rows[0].a_u[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(rows[0].b, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn unicycle_positional_row_has_zero_omega_column() {
        let model = RobotModel::new(ModelKind::Unicycle);
        let x = DVector::from_column_slice(&[3.0, 0.5, 0.7]);
        let (rows, _) = build_cbf_rows(
            &model,
            &[circle2()],
            &x,
            AlphaFn::Linear { c: 1.0 },
            BarrierMode::Positional,
            DEFAULT_SENSING_RANGE,
        )
        .unwrap();
        assert_eq!(rows[0].a_u[1], 0.0);
    }

    #[test]
    fn translating_circle_shifts_rhs() {
        // Obstacle receding at 1 m/s along −x: the motion term relaxes b.
        let obs = Obstacle::new(
            Shape::Circle { c_r: 2.0 },
            crate::geometry::Pose { p_o: [0.0, 0.0], orientation: 0.0 },
            crate::geometry::Motion { x_r: [0.0, 0.0], v_r: [-1.0, 0.0], omega: 0.0 },
        )
        .unwrap();
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let x = DVector::from_column_slice(&[3.0, 0.0]);
        let (rows, _) = build_cbf_rows(
            &model,
            &[obs.clone()],
            &x,
            AlphaFn::Linear { c: 1.0 },
            BarrierMode::Positional,
            DEFAULT_SENSING_RANGE,
        )
        .unwrap();
        assert_relative_eq!(rows[0].b, -2.0, epsilon = 1e-12);

        // Finite-difference check of ḣ along the constraint boundary: with
        // a_u·u = b active, ḣ should equal −α(h).
        let u = DVector::from_column_slice(&[-2.0, 0.0]);
        let dt = 1e-6;
        let x_next = &x + &u * dt;
        let h_now = obs.h(Vector2::new(x[0], x[1]));
        let h_next = obs.at_time(dt).h(Vector2::new(x_next[0], x_next[1]));
        let hdot = (h_next - h_now) / dt;
        assert_relative_eq!(hdot, -1.0, epsilon = 1e-4);
    }

    #[test]
    fn qp_step_slack_and_active() {
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let mut solver = ActiveSetSolver::new();
        let x = DVector::from_column_slice(&[3.0, 0.0]);

        let away = DVector::from_column_slice(&[0.5, 0.2]);
        let out = cbf_qp_step(
            &mut solver, &model, &[circle2()], &x, &away,
            AlphaFn::Linear { c: 1.0 }, BarrierMode::Positional, DEFAULT_SENSING_RANGE,
        )
        .unwrap();
        assert_relative_eq!(out.u, away, epsilon = 1e-10);

        let toward = DVector::from_column_slice(&[-3.0, 0.0]);
        let out = cbf_qp_step(
            &mut solver, &model, &[circle2()], &x, &toward,
            AlphaFn::Linear { c: 1.0 }, BarrierMode::Positional, DEFAULT_SENSING_RANGE,
        )
        .unwrap();
        assert_relative_eq!(out.u, DVector::from_column_slice(&[-1.0, 0.0]), epsilon = 1e-9);
        assert!(!out.infeasible);
    }

    #[test]
    fn qp_step_with_box_matches_grid_search() {
        let model = RobotModel::new(ModelKind::SingleIntegrator).with_limits(InputLimits {
            speed_cap: None,
            lower: Some(vec![-0.5, -0.5]),
            upper: Some(vec![0.5, 0.5]),
        });
        let mut solver = ActiveSetSolver::new();
        let x = DVector::from_column_slice(&[3.0, 0.0]);
        let u_nom = DVector::from_column_slice(&[-3.0, 0.0]);
        let out = cbf_qp_step(
            &mut solver, &model, &[circle2()], &x, &u_nom,
            AlphaFn::Linear { c: 1.0 }, BarrierMode::Positional, DEFAULT_SENSING_RANGE,
        )
        .unwrap();

        // Brute-force grid oracle at resolution 1e-3.
        let mut best = (f64::MAX, Vector2::zeros());
        let steps = 1001;
        for i in 0..steps {
            for j in 0..steps {
                let u = Vector2::new(
                    -0.5 + i as f64 / (steps - 1) as f64,
                    -0.5 + j as f64 / (steps - 1) as f64,
                );
                if u.x < -1.0 - 1e-12 {
                    continue;
                }
                let cost = (u - Vector2::new(-3.0, 0.0)).norm_squared();
                if cost < best.0 {
                    best = (cost, u);
                }
            }
        }
        assert_relative_eq!(out.u[0], best.1.x, epsilon = 2e-3);
        assert_relative_eq!(out.u[1], best.1.y, epsilon = 2e-3);
    }

    #[test]
    fn closed_form_branches() {
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let x = DVector::from_column_slice(&[3.0, 0.0]);
        let slack = DVector::from_column_slice(&[0.3, 1.0]);
        let u = cbf_closed_form(&model, &x, &slack, &circle2(), AlphaFn::Linear { c: 1.0 }, BarrierMode::Positional).unwrap();
        assert_eq!(u, slack);

        let toward = DVector::from_column_slice(&[-3.0, 0.0]);
        let u = cbf_closed_form(&model, &x, &toward, &circle2(), AlphaFn::Linear { c: 1.0 }, BarrierMode::Positional).unwrap();
        assert_relative_eq!(u, DVector::from_column_slice(&[-1.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn unicycle_closed_form_changes_speed_only() {
        let model = RobotModel::new(ModelKind::Unicycle);
        let x = DVector::from_column_slice(&[2.6, 0.0, std::f64::consts::PI]);
        let u_nom = DVector::from_column_slice(&[1.0, 0.4]);
        let u = cbf_closed_form(&model, &x, &u_nom, &circle2(), AlphaFn::Linear { c: 1.0 }, BarrierMode::Positional).unwrap();
        // ω untouched, v reduced.
        assert_eq!(u[1], u_nom[1]);
        assert!(u[0] < u_nom[0]);

        let mut solver = ActiveSetSolver::new();
        let qp_u = cbf_qp_step(
            &mut solver, &model, &[circle2()], &x, &u_nom,
            AlphaFn::Linear { c: 1.0 }, BarrierMode::Positional, DEFAULT_SENSING_RANGE,
        )
        .unwrap();
        assert_relative_eq!(u, qp_u.u, epsilon = 1e-8);
    }
}
