//! First-order rollouts along barrier isosurfaces and the exit-direction
//! selection used as a liveness constraint: candidate tangent directions are
//! rolled out with the tangent projector re-evaluated at every step, and the
//! one with the smallest accumulated target penalty wins.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{tangent_basis, BarrierField};

/// Projected directions with norm below this collapse the rollout.
pub const COLLAPSE_TOL: f64 = 1e-10;

/// Penalty accumulated along a rollout; the default is the planar distance
/// from the path point to the target.
pub type PenaltyFn = fn(&DVector<f64>, Vector2<f64>) -> f64;

pub fn position_distance_penalty(x: &DVector<f64>, target: Vector2<f64>) -> f64 {
    (Vector2::new(x[0], x[1]) - target).norm()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeodesicParams {
    /// Step length β.
    pub beta: f64,
    /// Number of rollout steps N.
    pub horizon: usize,
    /// Number of candidate directions m (≥ 2^(d−1)).
    pub candidates: usize,
    #[serde(skip, default = "default_penalty")]
    pub penalty: PenaltyFn,
}

fn default_penalty() -> PenaltyFn {
    position_distance_penalty
}

impl GeodesicParams {
    pub fn for_dim(d: usize) -> Self {
        GeodesicParams {
            beta: 0.05,
            horizon: 60,
            candidates: if d <= 2 { 2 } else { 20 },
            penalty: position_distance_penalty,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let min_candidates = 1usize << (d - 1);
        if self.beta > 0.0 && self.horizon >= 1 && self.candidates >= min_candidates {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!(
                "geodesic parameters out of range (beta {}, horizon {}, candidates {} < {})",
                self.beta, self.horizon, self.candidates, min_candidates
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicRollout {
    pub path: Vec<DVector<f64>>,
    pub directions: Vec<DVector<f64>>,
    pub potential: f64,
}

/// Unit candidate directions spanning the tangent space: the two signed
/// tangents in 2-D, evenly spaced directions in the tangent plane in 3-D.
pub fn candidate_directions(basis: &DMatrix<f64>, m: usize) -> Vec<DVector<f64>> {
    match basis.nrows() {
        2 => {
            let t = basis.column(0).into_owned();
            vec![t.clone(), -t]
        }
        3 => (0..m)
            .map(|i| {
                let phi = std::f64::consts::TAU * i as f64 / m as f64;
                basis.column(0) * phi.cos() + basis.column(1) * phi.sin()
            })
            .collect(),
        d => panic!("candidate directions only defined for d in {{2, 3}}, got {d}"),
    }
}

/// Rolls the surface approximation forward:
/// x⁺ = x + β·HHᵀe, e⁺ = HHᵀe/‖HHᵀe‖, P⁺ = P + β·p(x⁺, x*),
/// with the projector HHᵀ = I − nnᵀ re-evaluated at every step.
pub fn geodesic_rollout(
    field: &dyn BarrierField,
    x0: &DVector<f64>,
    e0: &DVector<f64>,
    params: &GeodesicParams,
    target: Vector2<f64>,
) -> Result<GeodesicRollout> {
    let d = field.dim();
    let mut x = x0.clone();
    let mut e = e0.clone();
    let mut path = vec![x.clone()];
    let mut directions = Vec::with_capacity(params.horizon + 1);
    let mut potential = 0.0;
    for _ in 0..params.horizon {
        let ev = field.eval(&x)?;
        let n = &ev.grad_x / ev.grad_x.norm();
        let projected = &e - &n * n.dot(&e);
        let norm = projected.norm();
        if norm < COLLAPSE_TOL {
            return Err(Error::ProjectionCollapse);
        }
        x += params.beta * &projected;
        e = projected / norm;
        potential += params.beta * (params.penalty)(&x, target);
        path.push(x.clone());
        directions.push(e.clone());
        debug_assert_eq!(x.len(), d);
    }
    Ok(GeodesicRollout { path, directions, potential })
}

/// Near-ties in the candidate potentials resolve to the lowest index; the
/// relative deadband keeps the selection from flipping between steps when
/// two escape routes cost almost the same.
pub const TIE_REL_TOL: f64 = 0.02;

/// Exit strategy φ: the candidate whose rollout accumulates the least
/// penalty. Candidates within `TIE_REL_TOL` of the minimum count as tied and
/// resolve to the lowest index; if every candidate collapses the caller must
/// omit the liveness constraint.
pub fn exit_direction(
    field: &dyn BarrierField,
    x: &DVector<f64>,
    target: Vector2<f64>,
    params: &GeodesicParams,
) -> Result<DVector<f64>> {
    params.validate(field.dim())?;
    let ev = field.eval(x)?;
    let n = &ev.grad_x / ev.grad_x.norm();
    let basis = tangent_basis(&n);
    let candidates = candidate_directions(&basis, params.candidates);
    let mut potentials: Vec<Option<f64>> = Vec::with_capacity(candidates.len());
    for e0 in &candidates {
        match geodesic_rollout(field, x, e0, params, target) {
            Ok(out) => potentials.push(Some(out.potential)),
            Err(Error::ProjectionCollapse) => potentials.push(None),
            Err(e) => return Err(e),
        }
    }
    let min_p = potentials
        .iter()
        .flatten()
        .fold(f64::INFINITY, |acc, p| acc.min(*p));
    if min_p.is_infinite() {
        return Err(Error::AllCollapsed);
    }
    let cutoff = min_p + TIE_REL_TOL * min_p.abs();
    let selected = potentials
        .iter()
        .position(|p| p.is_some_and(|p| p <= cutoff))
        .expect("a finite potential exists");
    Ok(candidates[selected].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Obstacle, PositionalField, Shape};
    use crate::model::AugmentedField;
    use approx::assert_relative_eq;

    fn circle2() -> Obstacle {
        Obstacle::stationary(Shape::Circle { c_r: 2.0 }, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn candidates_are_tangent() {
        let obs = circle2();
        let f = obs.local_frame(Vector2::new(2.0, 0.0)).unwrap();
        let n = DVector::from_column_slice(&[f.n.x, f.n.y]);
        let basis = tangent_basis(&n);
        let dirs = candidate_directions(&basis, 2);
        assert_eq!(dirs.len(), 2);
        assert_relative_eq!(dirs[0], DVector::from_column_slice(&[0.0, 1.0]), epsilon = 1e-12);
        assert_relative_eq!(dirs[1], DVector::from_column_slice(&[0.0, -1.0]), epsilon = 1e-12);
        for d in &dirs {
            assert!(n.dot(d).abs() < 1e-12);
        }
    }

    #[test]
    fn candidates_3d_even_spacing() {
        let n = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
        let basis = tangent_basis(&n);
        let dirs = candidate_directions(&basis, 4);
        assert_eq!(dirs.len(), 4);
        for (i, d) in dirs.iter().enumerate() {
            assert_relative_eq!(d.norm(), 1.0, epsilon = 1e-12);
            assert!(n.dot(d).abs() < 1e-12);
            let next = &dirs[(i + 1) % 4];
            assert_relative_eq!(d.dot(next), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rollout_stays_on_isosurface() {
        let obs = circle2();
        let field = PositionalField(&obs);
        let x0 = DVector::from_column_slice(&[2.0, 0.0]);
        let e0 = DVector::from_column_slice(&[0.0, 1.0]);
        let params = GeodesicParams { beta: 0.01, horizon: 10, ..GeodesicParams::for_dim(2) };
        let out = geodesic_rollout(&field, &x0, &e0, &params, Vector2::zeros()).unwrap();
        let h0 = field.value(&x0);
        for p in &out.path {
            assert!((field.value(p) - h0).abs() <= 5e-4);
        }
        // Per-step drift bound from the surface curvature 1/c_r.
        for w in out.path.windows(2) {
            let dh = (field.value(&w[1]) - field.value(&w[0])).abs();
            assert!(dh <= params.beta * params.beta * (1.0 / 2.0) + 1e-12);
        }
    }

    #[test]
    fn single_step_potential() {
        let obs = circle2();
        let field = PositionalField(&obs);
        let x0 = DVector::from_column_slice(&[2.0, 0.0]);
        let e0 = DVector::from_column_slice(&[0.0, 1.0]);
        let params = GeodesicParams { beta: 0.05, horizon: 1, ..GeodesicParams::for_dim(2) };
        let target = Vector2::new(-3.0, 1.0);
        let out = geodesic_rollout(&field, &x0, &e0, &params, target).unwrap();
        let expected = params.beta * (Vector2::new(out.path[1][0], out.path[1][1]) - target).norm();
        assert_relative_eq!(out.potential, expected, epsilon = 1e-15);
    }

    #[test]
    fn normal_candidate_collapses() {
        let obs = circle2();
        let field = PositionalField(&obs);
        let x0 = DVector::from_column_slice(&[2.0, 0.0]);
        let n = DVector::from_column_slice(&[1.0, 0.0]);
        let params = GeodesicParams::for_dim(2);
        assert!(matches!(
            geodesic_rollout(&field, &x0, &n, &params, Vector2::zeros()),
            Err(Error::ProjectionCollapse)
        ));
    }

    #[test]
    fn exit_direction_prefers_side_of_target() {
        let obs = circle2();
        let field = PositionalField(&obs);
        let x = DVector::from_column_slice(&[2.0, 0.0]);
        let params = GeodesicParams::for_dim(2);

        let phi = exit_direction(&field, &x, Vector2::new(-3.0, 1.0), &params).unwrap();
        assert_relative_eq!(phi, DVector::from_column_slice(&[0.0, 1.0]), epsilon = 1e-12);

        // Symmetric target: tie resolves to candidate 0.
        let phi = exit_direction(&field, &x, Vector2::new(-3.0, 0.0), &params).unwrap();
        assert_relative_eq!(phi, DVector::from_column_slice(&[0.0, 1.0]), epsilon = 1e-12);

        // The selected direction is tangent.
        let ev = field.eval(&x).unwrap();
        let n = &ev.grad_x / ev.grad_x.norm();
        assert!(n.dot(&phi).abs() <= 1e-8);
    }

    #[test]
    fn exit_direction_in_augmented_space() {
        let obs = circle2();
        let field = AugmentedField { obs: &obs, w: 0.3 };
        let x = DVector::from_column_slice(&[3.0, 3.0, 0.0]);
        let params = GeodesicParams { candidates: 20, ..GeodesicParams::for_dim(3) };
        let target = Vector2::new(-3.0, -1.0);
        let phi = exit_direction(&field, &x, target, &params).unwrap();

        // Exhaustive check: the selected candidate is the argmin over all 20.
        let ev = field.eval(&x).unwrap();
        let n = &ev.grad_x / ev.grad_x.norm();
        let dirs = candidate_directions(&tangent_basis(&n), 20);
        let mut best = f64::MAX;
        let mut potentials = Vec::new();
        for d in &dirs {
            let p = geodesic_rollout(&field, &x, d, &params, target).unwrap().potential;
            potentials.push(p);
            best = best.min(p);
        }
        let selected = dirs.iter().position(|d| (d - &phi).norm() < 1e-12).unwrap();
        assert_eq!(potentials[selected], best);
        assert!(n.dot(&phi).abs() <= 1e-8);
    }
}
