//! Pointwise vector-field sampling of a controller over a planar grid, the
//! data behind stream plots: modified input, speed ratio against the nominal
//! and an interior mask.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, ControllerConfig};
use crate::error::{Error, Result};
use crate::geometry::Obstacle;
use crate::model::{nominal_linear, GainMode, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    /// Samples per axis.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub x: f64,
    pub y: f64,
    pub ux: f64,
    pub uy: f64,
    pub speed_ratio: f64,
    pub masked: bool,
}

/// Samples the closed-loop input field of a fully actuated controller on a
/// regular grid, row-major from (xmin, ymin). Points inside obstacles are
/// emitted masked with zero input.
pub fn sample_field(
    model: &RobotModel,
    obstacles: &[Obstacle],
    controller_cfg: &ControllerConfig,
    gain: GainMode,
    target: Vector2<f64>,
    grid: &FieldGrid,
    sensing_range: f64,
) -> Result<Vec<FieldSample>> {
    if !model.is_fully_actuated() {
        return Err(Error::UnsupportedModel);
    }
    if grid.n < 2 || grid.xmax <= grid.xmin || grid.ymax <= grid.ymin {
        return Err(Error::ConfigInvalid("degenerate field grid".into()));
    }
    let mut controller = Controller::new(controller_cfg.clone(), model, sensing_range)?;
    let mut samples = Vec::with_capacity(grid.n * grid.n);
    for j in 0..grid.n {
        let y = grid.ymin + (grid.ymax - grid.ymin) * j as f64 / (grid.n - 1) as f64;
        for i in 0..grid.n {
            let x = grid.xmin + (grid.xmax - grid.xmin) * i as f64 / (grid.n - 1) as f64;
            let p = Vector2::new(x, y);
            let masked = obstacles.iter().any(|o| o.h(p) < 0.0);
            if masked {
                samples.push(FieldSample { x, y, ux: 0.0, uy: 0.0, speed_ratio: 0.0, masked });
                continue;
            }
            let (u_nom, at_target) = nominal_linear(p, target, gain);
            if at_target {
                samples.push(FieldSample { x, y, ux: 0.0, uy: 0.0, speed_ratio: 1.0, masked });
                continue;
            }
            let state = DVector::from_column_slice(&[x, y]);
            let nom = DVector::from_column_slice(&[u_nom.x, u_nom.y]);
            let out = controller.step(model, obstacles, &state, &nom, target)?;
            let ratio = if u_nom.norm() > 1e-12 { out.u.norm() / u_nom.norm() } else { 1.0 };
            samples.push(FieldSample { x, y, ux: out.u[0], uy: out.u[1], speed_ratio: ratio, masked });
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbf::{AlphaFn, BarrierMode};
    use crate::geometry::Shape;
    use crate::model::ModelKind;
    use approx::assert_relative_eq;

    #[test]
    fn empty_scene_preserves_nominal() {
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let cfg = ControllerConfig::Cbf {
            alpha: AlphaFn::Linear { c: 1.0 },
            barrier_mode: BarrierMode::Positional,
        };
        let grid = FieldGrid { xmin: -2.0, xmax: 2.0, ymin: -2.0, ymax: 2.0, n: 9 };
        let samples = sample_field(
            &model,
            &[],
            &cfg,
            GainMode::Fixed(2.0),
            Vector2::zeros(),
            &grid,
            3.0,
        )
        .unwrap();
        assert_eq!(samples.len(), 81);
        for s in samples {
            assert!(!s.masked);
            assert_relative_eq!(s.speed_ratio, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mask_matches_interior() {
        let model = RobotModel::new(ModelKind::SingleIntegrator);
        let obs = Obstacle::stationary(Shape::Circle { c_r: 2.0 }, [2.5, 0.0]).unwrap();
        let cfg = ControllerConfig::Cbf {
            alpha: AlphaFn::Linear { c: 1.0 },
            barrier_mode: BarrierMode::Positional,
        };
        let grid = FieldGrid { xmin: -1.0, xmax: 6.0, ymin: -3.0, ymax: 3.0, n: 15 };
        let samples = sample_field(
            &model,
            std::slice::from_ref(&obs),
            &cfg,
            GainMode::Fixed(2.0),
            Vector2::zeros(),
            &grid,
            3.0,
        )
        .unwrap();
        for s in samples {
            assert_eq!(s.masked, obs.h(Vector2::new(s.x, s.y)) < 0.0);
        }
    }

    #[test]
    fn unicycle_field_rejected() {
        let model = RobotModel::new(ModelKind::Unicycle);
        let cfg = ControllerConfig::Cbf {
            alpha: AlphaFn::Linear { c: 1.0 },
            barrier_mode: BarrierMode::Positional,
        };
        let grid = FieldGrid { xmin: 0.0, xmax: 1.0, ymin: 0.0, ymax: 1.0, n: 3 };
        let r = sample_field(&model, &[], &cfg, GainMode::Normalized, Vector2::zeros(), &grid, 3.0);
        assert!(matches!(r, Err(Error::UnsupportedModel)));
    }
}
