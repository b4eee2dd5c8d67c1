//! Dynamical-system modulation (normal and reference variants) for fully
//! actuated planar systems, the CBF-equivalent eigenvalue selection, and the
//! input-constrained variants that preserve boundary impenetrability.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::cbf::AlphaFn;
use crate::error::{Error, Result};
use crate::geometry::{LocalFrame, Obstacle};
use crate::qp::{self, QProblem, QpStatus};

/// States with any barrier value below this are rejected as interior.
pub const INTERIOR_TOL: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    /// Basis led by the boundary normal n.
    Normal,
    /// Basis led by the reference direction r (interior reference point).
    Reference,
}

/// Eigenvalue policy for the diagonal scaling matrix D = diag(λ, λ_e).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// λ = 1 − 1/(h+1), λ_e = 1 + 1/(h+1), evaluated on h clamped at 0.
    Standard,
    /// λ, λ_e chosen so normal modulation reproduces the CBF-QP filter with
    /// this K∞ function (static obstacles).
    CbfEquivalent(AlphaFn),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationSpec {
    pub direction: DirectionMode,
    pub lambda: LambdaPolicy,
}

impl ModulationSpec {
    pub fn normal() -> Self {
        ModulationSpec { direction: DirectionMode::Normal, lambda: LambdaPolicy::Standard }
    }

    pub fn reference() -> Self {
        ModulationSpec { direction: DirectionMode::Reference, lambda: LambdaPolicy::Standard }
    }
}

/// Modulation matrix M = E·D·E⁻¹ with its factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationMatrix {
    pub m: Matrix2<f64>,
    pub d: Matrix2<f64>,
    pub e: Matrix2<f64>,
}

/// λ values of the Table-style standard policy on clamped h.
pub fn standard_lambdas(h: f64) -> (f64, f64) {
    let hh = h.max(0.0);
    (1.0 - 1.0 / (hh + 1.0), 1.0 + 1.0 / (hh + 1.0))
}

/// Eigenvalues that make normal modulation match the CBF-QP filter:
/// λ = 1 when ∇h·u_nom ≥ −α, otherwise λ = −α/(∇h·u_nom); λ_e = 1.
pub fn cbf_equivalent_lambdas(grad: Vector2<f64>, u_nom: Vector2<f64>, alpha: f64) -> (f64, f64) {
    let proj = grad.dot(&u_nom);
    if proj >= -alpha {
        (1.0, 1.0)
    } else {
        // Here proj < −α ≤ 0, so the division is safe.
        (-alpha / proj, 1.0)
    }
}

/// Builds the modulation matrix of one obstacle at a query state.
///
/// `u_rel` is the nominal velocity relative to the obstacle surface motion;
/// it only matters for the CBF-equivalent policy.
pub fn modulation_matrix(
    spec: &ModulationSpec,
    frame: &LocalFrame,
    h: f64,
    u_rel: Vector2<f64>,
) -> ModulationMatrix {
    let (lambda, lambda_e) = match spec.lambda {
        LambdaPolicy::Standard => standard_lambdas(h),
        LambdaPolicy::CbfEquivalent(alpha) => {
            cbf_equivalent_lambdas(frame.n * frame.grad_norm, u_rel, alpha.eval(h))
        }
    };
    let d = Matrix2::new(lambda, 0.0, 0.0, lambda_e);
    let (e, e_inv) = match spec.direction {
        DirectionMode::Normal => (frame.e, frame.e.transpose()),
        DirectionMode::Reference => (frame.e_r, frame.e_r_inv),
    };
    ModulationMatrix { m: e * d * e_inv, d, e }
}

/// One modulation step: per obstacle u_o = M(u_nom − x̄_o) + x̄_o, combined
/// with the product-of-others weights on clamped barrier values.
pub fn modds_step(
    spec: &ModulationSpec,
    obstacles: &[Obstacle],
    x: Vector2<f64>,
    u_nom: Vector2<f64>,
) -> Result<Vector2<f64>> {
    if obstacles.is_empty() {
        return Ok(u_nom);
    }
    let mut hs = Vec::with_capacity(obstacles.len());
    let mut outputs = Vec::with_capacity(obstacles.len());
    for obs in obstacles {
        let frame = obs.local_frame(x)?;
        let h = obs.h(x);
        if h < INTERIOR_TOL {
            return Err(Error::InsideObstacle(h));
        }
        let xbar = obs.surface_point_velocity(x);
        let mm = modulation_matrix(spec, &frame, h, u_nom - xbar);
        outputs.push(mm.m * (u_nom - xbar) + xbar);
        hs.push(h.max(0.0));
    }
    if obstacles.len() == 1 {
        return Ok(outputs[0]);
    }
    // w_o = Π_{j≠o} ĥ_j / Σ_k Π_{j≠k} ĥ_j
    let prods: Vec<f64> = (0..hs.len())
        .map(|o| hs.iter().enumerate().filter(|(j, _)| *j != o).map(|(_, h)| *h).product())
        .collect();
    let total: f64 = prods.iter().sum();
    let weights: Vec<f64> = if total > 1e-300 {
        prods.iter().map(|p| p / total).collect()
    } else {
        // Several obstacles touched at once: split evenly among the closest.
        let k = hs.iter().filter(|h| **h <= 0.0).count().max(1);
        hs.iter().map(|h| if *h <= 0.0 { 1.0 / k as f64 } else { 0.0 }).collect()
    };
    Ok(outputs
        .iter()
        .zip(&weights)
        .fold(Vector2::zeros(), |acc, (u, w)| acc + *w * u))
}

/// Speed-cap enforcement preserving impenetrability.
///
/// Maximizes ⟨u_unc, u⟩ over ‖u‖₂ = u_ub subject to n·u ≥ v_n with
/// v_n = min(n·x̄_o, n·u_unc); inputs already under the cap pass through.
pub fn constrain_speed(
    u_unc: Vector2<f64>,
    n: Vector2<f64>,
    xbar_o: Vector2<f64>,
    u_ub: f64,
) -> Result<Vector2<f64>> {
    let norm = u_unc.norm();
    if norm <= u_ub {
        return Ok(u_unc);
    }
    let v_n = n.dot(&xbar_o).min(n.dot(&u_unc));
    if v_n > u_ub {
        return Err(Error::InfeasibleSafety { required: v_n, cap: u_ub });
    }
    let scale = u_ub / norm;
    if scale * n.dot(&u_unc) >= v_n {
        return Ok(scale * u_unc);
    }
    let tangential = u_unc - n.dot(&u_unc) * n;
    let v_e = tangential.norm();
    if v_e < 1e-10 {
        return Err(Error::TangentDegenerate);
    }
    Ok(v_n * n + ((u_ub * u_ub - v_n * v_n).sqrt() / v_e) * tangential)
}

/// Box-bound enforcement preserving impenetrability:
/// min ‖u − u_unc‖² s.t. lb ≤ u ≤ ub and n·u ≥ min(n·x̄_o, n·u_unc).
pub fn constrain_velocity(
    u_unc: Vector2<f64>,
    n: Vector2<f64>,
    xbar_o: Vector2<f64>,
    lower: Vector2<f64>,
    upper: Vector2<f64>,
) -> Result<Vector2<f64>> {
    let v_n = n.dot(&xbar_o).min(n.dot(&u_unc));
    let mut qp = QProblem::nearest_point(&nalgebra::DVector::from_column_slice(&[u_unc.x, u_unc.y]));
    qp.push_ineq(&[n.x, n.y], v_n);
    qp.lower = Some(nalgebra::DVector::from_column_slice(&[lower.x, lower.y]));
    qp.upper = Some(nalgebra::DVector::from_column_slice(&[upper.x, upper.y]));
    let sol = qp::solve(&qp);
    match sol.status {
        QpStatus::Optimal => Ok(Vector2::new(sol.z[0], sol.z[1])),
        QpStatus::Infeasible => Err(Error::Infeasible),
    }
}
