//! Trajectory behavior metrics: path length ratio, average jerk,
//! straight-line deviation, obstacle clearance and near-obstacle velocity,
//! integrated with the trapezoid rule over the recorded samples.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Outcome, TrajectoryRecord};

/// Clearance weights are clamped at this floor in the near-obstacle velocity.
const CLEARANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub outcome: Outcome,
    /// Trajectory length ∫1 ds.
    pub l: f64,
    /// Length of the obstacle-free nominal path from the same start.
    pub l_nom: f64,
    pub l_ratio: f64,
    /// (1/l)∫‖x⃛‖ ds from third differences of the positions.
    pub avg_jerk: f64,
    /// (1/l)∫ dist(x, start→target line) ds.
    pub eta: f64,
    /// (1/l)∫ clearance ds.
    pub d_obs: f64,
    /// Clearance-weighted mean speed: ∫(‖ẋ‖/clearance)ds / ∫(1/clearance)ds.
    pub v_near: f64,
    pub runtime_mean_ms: f64,
    pub infeasible_count: usize,
    pub fallback_count: usize,
}

fn polyline_length(points: &[Vector2<f64>]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

fn trapezoid(values: &[f64], points: &[Vector2<f64>]) -> f64 {
    values
        .windows(2)
        .zip(points.windows(2))
        .map(|(v, p)| 0.5 * (v[0] + v[1]) * (p[1] - p[0]).norm())
        .sum()
}

/// Computes the behavior metrics of one recorded trajectory against its
/// obstacle-free nominal path. Needs at least four samples for the jerk
/// differences.
pub fn compute_metrics(
    traj: &TrajectoryRecord,
    nominal_path: &[Vector2<f64>],
    start: Vector2<f64>,
    target: Vector2<f64>,
) -> Result<MetricsReport> {
    let points = traj.positions();
    let n = points.len();
    if n < 4 {
        return Err(Error::TooShort);
    }
    let l = polyline_length(&points);
    let l_nom = polyline_length(nominal_path);

    // Straight-line deviation against the start→target line.
    let axis = target - start;
    let eta_vals: Vec<f64> = if axis.norm() < 1e-12 {
        vec![0.0; n]
    } else {
        let dir = axis / axis.norm();
        points
            .iter()
            .map(|p| {
                let rel = p - start;
                (rel - rel.dot(&dir) * dir).norm()
            })
            .collect()
    };

    // Third forward differences, held constant over the last three samples.
    let dt = traj.steps[1].t - traj.steps[0].t;
    let mut jerk_vals = vec![0.0; n];
    for i in 0..n - 3 {
        let d3 = points[i + 3] - 3.0 * points[i + 2] + 3.0 * points[i + 1] - points[i];
        jerk_vals[i] = d3.norm() / dt.powi(3);
    }
    for i in n - 3..n {
        jerk_vals[i] = jerk_vals[n.saturating_sub(4)];
    }

    // Speeds by central differences (one-sided at the ends).
    let mut speeds = vec![0.0; n];
    for i in 0..n {
        speeds[i] = if i == 0 {
            (points[1] - points[0]).norm() / dt
        } else if i == n - 1 {
            (points[n - 1] - points[n - 2]).norm() / dt
        } else {
            (points[i + 1] - points[i - 1]).norm() / (2.0 * dt)
        };
    }

    let clearances: Vec<f64> = traj.steps.iter().map(|s| s.h_min).collect();
    let weights: Vec<f64> = clearances.iter().map(|c| 1.0 / c.max(CLEARANCE_FLOOR)).collect();
    let weighted_speed: Vec<f64> = speeds.iter().zip(&weights).map(|(v, w)| v * w).collect();

    let (eta, avg_jerk, d_obs, v_near) = if l > 0.0 {
        let wsum = trapezoid(&weights, &points);
        (
            trapezoid(&eta_vals, &points) / l,
            trapezoid(&jerk_vals, &points) / l,
            trapezoid(&clearances, &points) / l,
            if wsum > 0.0 { trapezoid(&weighted_speed, &points) / wsum } else { 0.0 },
        )
    } else {
        (0.0, 0.0, clearances[0], 0.0)
    };

    let executed = &traj.steps[..n - 1];
    let runtime_mean_ms = if executed.is_empty() {
        0.0
    } else {
        executed.iter().map(|s| s.step_ms).sum::<f64>() / executed.len() as f64
    };

    Ok(MetricsReport {
        outcome: traj.outcome,
        l,
        l_nom,
        l_ratio: if l_nom > 0.0 { l / l_nom } else { f64::NAN },
        avg_jerk,
        eta,
        d_obs,
        v_near,
        runtime_mean_ms,
        infeasible_count: traj.infeasible_count(),
        fallback_count: executed.iter().filter(|s| s.fallback).count(),
    })
}
