//! Modulated CBF-QP controllers.
//!
//! The reference variant augments the CBF-QP with slack equality rows that
//! reproduce the tangent-plane action of reference modulation; the
//! on-manifold variant adds a geodesic exit-direction row as a liveness
//! constraint with a tunable progress rate γ.

use nalgebra::{DVector, Matrix2, RowVector2, Vector2};

use crate::cbf::{build_cbf_rows, push_limit_rows, AlphaFn, BarrierMode, StepOutcome};
use crate::error::{Error, Result};
use crate::geodesic::{exit_direction, GeodesicParams};
use crate::geometry::{LocalFrame, Obstacle, PositionalField};
use crate::model::{AugmentedField, RobotModel};
use crate::qp::{ActiveSetSolver, QProblem, QpStatus};

/// n·r values below this degrade the reference machinery.
pub const REFERENCE_DEGENERATE_TOL: f64 = 1e-6;
/// Default barrier band inside which the exit-direction row is active.
pub const DEFAULT_ACTIVATION_BAND: f64 = 1.0;

/// Work matrices of the explicit reference-MCBF solution at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitRmcbfWork {
    pub f: Matrix2<f64>,
    pub a: RowVector2<f64>,
    /// Tangent coefficient of r in the [n t] frame (w₁).
    pub w_tangent: f64,
    /// Normal coefficient n·r (w₀).
    pub w0: f64,
    pub lambda: Matrix2<f64>,
    pub lambda_inv: Matrix2<f64>,
    pub k: f64,
}

impl ExplicitRmcbfWork {
    pub fn from_frame(frame: &LocalFrame) -> Result<Self> {
        let w0 = frame.n.dot(&frame.r);
        if w0 <= REFERENCE_DEGENERATE_TOL {
            return Err(Error::DegenerateReference(w0));
        }
        let w1 = frame.tangent.dot(&frame.r);
        let p = Matrix2::identity() - frame.r * frame.n.transpose() / w0;
        let f = 2.0 * (Matrix2::identity() + p.transpose() * p);
        let grad = (frame.grad_norm * frame.n).transpose();
        let f_inv = f.try_inverse().ok_or(Error::DegenerateReference(w0))?;
        let a = -(grad * f_inv) / (grad * f_inv * grad.transpose())[(0, 0)];
        let k = w0 * w0 / (1.0 + w0 * w0);
        let lambda = Matrix2::new(
            2.0 / (w0 * w0),
            -2.0 * w1 / w0,
            -2.0 * w1 / w0,
            4.0,
        );
        let lambda_inv = Matrix2::new(
            k,
            k * w1 / (2.0 * w0),
            k * w1 / (2.0 * w0),
            0.25 + k * w1 * w1 / (4.0 * w0 * w0),
        );
        Ok(ExplicitRmcbfWork { f, a, w_tangent: w1, w0, lambda, lambda_inv, k })
    }
}

/// Explicit reference-MCBF solution for the fully actuated single-obstacle
/// case without input limits:
///
/// u = u_nom when ∇h·u_nom + α ≥ 0, otherwise
/// u = u_nom − (w₀nnᵀ + rnᵀ)u_nom/(2w₀) + α·Aᵀ with
/// Aᵀ = −(n + r/w₀)/(2‖∇h‖).
pub fn rmcbf_closed_form(
    x: Vector2<f64>,
    u_nom: Vector2<f64>,
    obstacle: &Obstacle,
    alpha: AlphaFn,
) -> Result<Vector2<f64>> {
    let ev = obstacle.eval_boundary(x)?;
    let frame = obstacle.local_frame(x)?;
    let alpha_total = alpha.eval(ev.h) + ev.motion_term;
    let grad = ev.grad2();
    if grad.dot(&u_nom) + alpha_total >= 0.0 {
        return Ok(u_nom);
    }
    let w0 = frame.n.dot(&frame.r);
    if w0 <= REFERENCE_DEGENERATE_TOL {
        return Err(Error::DegenerateReference(w0));
    }
    let n = frame.n;
    let r = frame.r;
    let correction = (w0 * n * n.transpose() + r * n.transpose()) * u_nom / (2.0 * w0);
    let a_t = -(n + r / w0) / (2.0 * frame.grad_norm);
    Ok(u_nom - correction + alpha_total * a_t)
}

/// Boundary-difference oracle: with α = 0 the explicit reference-MCBF and
/// CBF solutions differ by −(r − w₀n)(n·u_nom)/(2w₀) on the active branch.
pub fn mcbf_difference(
    x: Vector2<f64>,
    u_nom: Vector2<f64>,
    obstacle: &Obstacle,
) -> Result<Vector2<f64>> {
    let frame = obstacle.local_frame(x)?;
    let w0 = frame.n.dot(&frame.r);
    if w0 <= REFERENCE_DEGENERATE_TOL {
        return Err(Error::DegenerateReference(w0));
    }
    let proj = frame.grad_norm * frame.n.dot(&u_nom);
    if proj >= 0.0 {
        return Ok(Vector2::zeros());
    }
    Ok(-(frame.r - w0 * frame.n) * frame.n.dot(&u_nom) / (2.0 * w0))
}

/// Whether the straight segment from `a` to `b` crosses the obstacle's
/// interior (sampled test; step bounded by the thinnest shape feature).
fn segment_blocked(obs: &Obstacle, a: Vector2<f64>, b: Vector2<f64>) -> bool {
    let n = ((b - a).norm() / 0.05).ceil().max(1.0) as usize;
    (0..=n).any(|k| {
        let s = k as f64 / n as f64;
        obs.h(a + s * (b - a)) < 0.0
    })
}

fn nearest_sensed(obstacles: &[Obstacle], p: Vector2<f64>, sensing: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, obs) in obstacles.iter().enumerate() {
        let h = obs.h(p);
        if h > sensing {
            continue;
        }
        if best.map_or(true, |(_, bh)| h < bh) {
            best = Some((i, h));
        }
    }
    best
}

/// Reference MCBF-QP step.
///
/// Decision vector (u, ρ): plain CBF rows for every sensed obstacle plus the
/// tangent-projection equality row of the nearest obstacle, relaxed by ρ so
/// feasibility matches the plain CBF-QP exactly. A singular gradient or a
/// degenerate reference direction degrades that obstacle to its plain row.
#[allow(clippy::too_many_arguments)]
pub fn rmcbf_qp_step(
    solver: &mut ActiveSetSolver,
    model: &RobotModel,
    obstacles: &[Obstacle],
    x: &DVector<f64>,
    u_nom: &DVector<f64>,
    alpha: AlphaFn,
    sensing_range: f64,
) -> Result<StepOutcome> {
    let p = model.input_dim();
    let (rows, _skipped) =
        build_cbf_rows(model, obstacles, x, alpha, BarrierMode::Positional, sensing_range)?;
    let pos = Vector2::new(x[0], x[1]);

    // Projection row of the nearest obstacle, when its frame is usable.
    let mut projection: Option<(Vec<f64>, f64)> = None;
    if let Some((idx, _)) = nearest_sensed(obstacles, pos, sensing_range) {
        if let Ok(frame) = obstacles[idx].local_frame(pos) {
            if frame.n.dot(&frame.r) > REFERENCE_DEGENERATE_TOL {
                // Row 2 of E_r⁻¹ is Hᵀ(I − r∇hᵀ/(∇hᵀr)).
                let ph = RowVector2::new(frame.e_r_inv[(1, 0)], frame.e_r_inv[(1, 1)]);
                let fields = model.affine_fields(x)?;
                let g_pos = fields.g.rows(0, 2).into_owned();
                let coeff = ph * g_pos;
                let mut row = vec![0.0; p + 1];
                row[0] = coeff[0];
                row[1] = coeff[1];
                row[p] = -1.0;
                let rhs = coeff[0] * u_nom[0] + coeff[1] * u_nom[1];
                projection = Some((row, rhs));
            }
        }
    }

    let n_vars = p + 1;
    let mut q = nalgebra::DMatrix::identity(n_vars, n_vars) * 2.0;
    q[(p, p)] = 2.0;
    let mut c = DVector::zeros(n_vars);
    for j in 0..p {
        c[j] = -2.0 * u_nom[j];
    }
    let mut qp = QProblem::new(q, c);
    for row in &rows {
        let mut r = vec![0.0; n_vars];
        r[..p].copy_from_slice(row.a_u.as_slice());
        qp.push_ineq(&r, row.b);
    }
    if let Some((row, rhs)) = &projection {
        qp.push_eq(row, *rhs);
    }
    push_limit_rows(&mut qp, model.limits.as_ref(), p);

    let sol = solver.solve(&qp);
    Ok(match sol.status {
        QpStatus::Optimal => StepOutcome::clean(sol.z.rows(0, p).into_owned()),
        QpStatus::Infeasible => StepOutcome::brake(p),
    })
}

/// On-manifold MCBF-QP step.
///
/// Plain CBF rows for every sensed obstacle plus one liveness row
/// φᵀf + φᵀg·u ≥ γ on the nearest obstacle inside the activation band, with
/// φ from the geodesic exit strategy. Infeasibility is resolved by a ladder:
/// drop the φ row, retry as a plain CBF-QP, then brake.
#[allow(clippy::too_many_arguments)]
pub fn onm_mcbf_qp_step(
    solver: &mut ActiveSetSolver,
    model: &RobotModel,
    obstacles: &[Obstacle],
    x: &DVector<f64>,
    u_nom: &DVector<f64>,
    alpha: AlphaFn,
    mode: BarrierMode,
    gamma: f64,
    geodesic: &GeodesicParams,
    activation_band: f64,
    sensing_range: f64,
    target: Vector2<f64>,
) -> Result<StepOutcome> {
    if gamma <= 0.0 {
        return Err(Error::ConfigInvalid("gamma must be positive".into()));
    }
    let p = model.input_dim();
    let (rows, _skipped) = build_cbf_rows(model, obstacles, x, alpha, mode, sensing_range)?;
    let pos = Vector2::new(x[0], x[1]);
    let fields = model.affine_fields(x)?;

    // Liveness row from the exit direction of the nearest obstacle, active
    // only inside the band and while that obstacle blocks the straight line
    // to the target; once the line of sight clears, the row must not force
    // extra motion.
    let mut phi_row: Option<(DVector<f64>, f64)> = None;
    if let Some((idx, h)) = nearest_sensed(obstacles, pos, sensing_range) {
        if h < activation_band && segment_blocked(&obstacles[idx], pos, target) {
            let obs = &obstacles[idx];
            let phi_state = match mode {
                BarrierMode::Augmented { w } => {
                    let field = AugmentedField { obs, w };
                    exit_direction(&field, x, target, geodesic)
                }
                BarrierMode::Positional => {
                    let field = PositionalField(obs);
                    let xp = DVector::from_column_slice(&[x[0], x[1]]);
                    exit_direction(&field, &xp, target, geodesic).map(|phi2| {
                        if x.len() == 2 {
                            phi2
                        } else {
                            DVector::from_column_slice(&[phi2[0], phi2[1], 0.0])
                        }
                    })
                }
            };
            match phi_state {
                Ok(phi) => {
                    let a_u = (phi.transpose() * &fields.g).transpose();
                    let rhs = gamma - phi.dot(&fields.f);
                    phi_row = Some((a_u, rhs));
                }
                Err(Error::AllCollapsed) => {}
                Err(e) => return Err(e),
            }
        }
    }

    let build = |with_phi: bool| {
        let mut qp = QProblem::nearest_point(u_nom);
        for row in &rows {
            qp.push_ineq(row.a_u.as_slice(), row.b);
        }
        if with_phi {
            if let Some((a_u, rhs)) = &phi_row {
                qp.push_ineq(a_u.as_slice(), *rhs);
            }
        }
        push_limit_rows(&mut qp, model.limits.as_ref(), p);
        qp
    };

    if phi_row.is_some() {
        let sol = solver.solve(&build(true));
        if sol.status == QpStatus::Optimal {
            return Ok(StepOutcome::clean(sol.z));
        }
        let retry = solver.solve(&build(false));
        return Ok(match retry.status {
            QpStatus::Optimal => StepOutcome {
                u: retry.z,
                infeasible: true,
                fallback: false,
                phi_dropped: true,
            },
            QpStatus::Infeasible => StepOutcome {
                phi_dropped: true,
                ..StepOutcome::brake(p)
            },
        });
    }
    let sol = solver.solve(&build(false));
    Ok(match sol.status {
        QpStatus::Optimal => StepOutcome::clean(sol.z),
        QpStatus::Infeasible => StepOutcome::brake(p),
    })
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

    fn funnel() -> Obstacle {
        Obstacle::stationary(Shape::Funnel { c_a: [2.5, 0.0], c_b: 0.1 }, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn circle_reduces_to_cbf() {
        // On a circle r = n, so the explicit solution collapses to CBF.
        let x = Vector2::new(3.0, 0.0);
        let u_nom = Vector2::new(-3.0, 0.0);
        let u = rmcbf_closed_form(x, u_nom, &circle2(), AlphaFn::Linear { c: 1.0 }).unwrap();
        assert_relative_eq!(u, Vector2::new(-1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn inactive_branch_returns_nominal() {
        let x = Vector2::new(3.0, 0.0);
        let u_nom = Vector2::new(1.0, 0.3);
        let u = rmcbf_closed_form(x, u_nom, &circle2(), AlphaFn::Linear { c: 1.0 }).unwrap();
        assert_eq!(u, u_nom);
    }

    #[test]
    fn work_identities_on_funnel() {
        let obs = funnel();
        let frame = obs.local_frame(Vector2::new(2.9, 0.35)).unwrap();
        let work = ExplicitRmcbfWork::from_frame(&frame).unwrap();

        assert_relative_eq!(work.w0 * work.w0 + work.w_tangent * work.w_tangent, 1.0, epsilon = 1e-12);
        assert_relative_eq!(work.k, work.w0 * work.w0 / (1.0 + work.w0 * work.w0), epsilon = 1e-15);

        let e = frame.e;
        assert_relative_eq!(work.f, e * work.lambda * e.transpose(), epsilon = 1e-9);
        assert_relative_eq!(work.lambda_inv, work.lambda.try_inverse().unwrap(), epsilon = 1e-9);

        // Compact form of A, with the sign fixed by the circle reduction.
        let compact = -(frame.n + frame.r / work.w0).transpose() / (2.0 * frame.grad_norm);
        assert_relative_eq!(work.a, compact, epsilon = 1e-9);
    }

    #[test]
    fn qp_matches_closed_form_on_funnel() {
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let mut solver = ActiveSetSolver::new();
        let x = DVector::from_column_slice(&[2.9, 0.35]);
        let u_nom = DVector::from_column_slice(&[-1.2, -0.4]);
        let qp_u = rmcbf_qp_step(
            &mut solver, &model, &[funnel()], &x, &u_nom,
            AlphaFn::Linear { c: 1.0 }, crate::cbf::DEFAULT_SENSING_RANGE,
        )
        .unwrap();
        let cf = rmcbf_closed_form(
            Vector2::new(2.9, 0.35),
            Vector2::new(-1.2, -0.4),
            &funnel(),
            AlphaFn::Linear { c: 1.0 },
        )
        .unwrap();
        assert_relative_eq!(qp_u.u[0], cf.x, epsilon = 1e-6);
        assert_relative_eq!(qp_u.u[1], cf.y, epsilon = 1e-6);
    }

    #[test]
    fn slack_case_returns_nominal_with_zero_rho() {
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let mut solver = ActiveSetSolver::new();
        let x = DVector::from_column_slice(&[2.9, 0.35]);
        let u_nom = DVector::from_column_slice(&[0.8, 0.1]);
        let out = rmcbf_qp_step(
            &mut solver, &model, &[funnel()], &x, &u_nom,
            AlphaFn::Linear { c: 1.0 }, crate::cbf::DEFAULT_SENSING_RANGE,
        )
        .unwrap();
        assert_relative_eq!(out.u, u_nom, epsilon = 1e-9);
    }

    #[test]
    fn difference_identities() {
        // Circle: r = n, the difference vanishes.
        let d = mcbf_difference(Vector2::new(3.0, 0.0), Vector2::new(-2.0, 0.4), &circle2()).unwrap();
        assert_relative_eq!(d, Vector2::zeros(), epsilon = 1e-12);

        // Funnel boundary point: matches the subtraction of the two closed
        // forms at α = 0 (cubic with tiny gain stands in for α ≈ 0 exactly
        // at h = 0; use a point on the boundary).
        let obs = funnel();
        // Point on the boundary: c_a + c_b * unit4 direction.
        let dir: Vector2<f64> = Vector2::new(0.6, 0.8);
        let n4 = (dir.x.powi(4) + dir.y.powi(4)).powf(0.25);
        let x = Vector2::new(2.5, 0.0) + dir / n4 * 0.1;
        assert!(obs.h(x).abs() < 1e-12);
        let u_nom = Vector2::new(-1.0, -0.2);
        let alpha = AlphaFn::Linear { c: 1.0 };
        let cf_r = rmcbf_closed_form(x, u_nom, &obs, alpha).unwrap();
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let cf_c = crate::cbf::cbf_closed_form(
            &model,
            &DVector::from_column_slice(&[x.x, x.y]),
            &DVector::from_column_slice(&[u_nom.x, u_nom.y]),
            &obs,
            alpha,
            BarrierMode::Positional,
        )
        .unwrap();
        let d = mcbf_difference(x, u_nom, &obs).unwrap();
        assert_relative_eq!(d.x, cf_r.x - cf_c[0], epsilon = 1e-8);
        assert_relative_eq!(d.y, cf_r.y - cf_c[1], epsilon = 1e-8);
    }

    #[test]
    fn onm_far_from_obstacles_returns_nominal() {
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let mut solver = ActiveSetSolver::new();
        let x = DVector::from_column_slice(&[20.0, 0.0]);
        let u_nom = DVector::from_column_slice(&[-1.0, 0.0]);
        let out = onm_mcbf_qp_step(
            &mut solver,
            &model,
            &[circle2()],
            &x,
            &u_nom,
            AlphaFn::Linear { c: 1.0 },
            BarrierMode::Positional,
            1.0,
            &GeodesicParams::for_dim(2),
            DEFAULT_ACTIVATION_BAND,
            crate::cbf::DEFAULT_SENSING_RANGE,
            Vector2::zeros(),
        )
        .unwrap();
        assert_eq!(out.u, u_nom);
        assert!(!out.infeasible && !out.phi_dropped);
    }

    #[test]
    fn onm_phi_row_is_satisfied() {
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let mut solver = ActiveSetSolver::new();
        let x = DVector::from_column_slice(&[2.5, 0.0]);
        let u_nom = DVector::from_column_slice(&[-1.0, 0.0]);
        let gamma = 1.0;
        let out = onm_mcbf_qp_step(
            &mut solver,
            &model,
            &[circle2()],
            &x,
            &u_nom,
            AlphaFn::Linear { c: 1.0 },
            BarrierMode::Positional,
            gamma,
            &GeodesicParams::for_dim(2),
            DEFAULT_ACTIVATION_BAND,
            crate::cbf::DEFAULT_SENSING_RANGE,
            Vector2::new(-3.0, 0.5),
        )
        .unwrap();
        assert!(!out.infeasible);
        // Recompute φ and check the progress rate.
        let obs = circle2();
        let field = PositionalField(&obs);
        let phi = exit_direction(&field, &x, Vector2::new(-3.0, 0.5), &GeodesicParams::for_dim(2))
            .unwrap();
        assert!(phi.dot(&out.u) >= gamma - 1e-8);
    }
}
