//! Controller configuration and dispatch: one enum covers every safety
//! filter the scenario engine can run, each holding exactly the knobs its
//! config block exposes.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::cbf::{cbf_qp_step, AlphaFn, BarrierMode, StepOutcome, DEFAULT_SENSING_RANGE};
use crate::error::{Error, Result};
use crate::geodesic::GeodesicParams;
use crate::geometry::Obstacle;
use crate::mcbf::{onm_mcbf_qp_step, rmcbf_qp_step, DEFAULT_ACTIVATION_BAND};
use crate::model::RobotModel;
use crate::modulation::{
    constrain_speed, constrain_velocity, modds_step, DirectionMode, LambdaPolicy, ModulationSpec,
};
use crate::qp::ActiveSetSolver;

fn default_barrier_mode() -> BarrierMode {
    BarrierMode::Positional
}

fn default_activation_band() -> f64 {
    DEFAULT_ACTIVATION_BAND
}

fn default_lambda() -> LambdaPolicy {
    LambdaPolicy::Standard
}

/// Input constraint of the modulation controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModConstraint {
    Speed { u_ub: f64 },
    Box { lower: [f64; 2], upper: [f64; 2] },
}

/// Geodesic block of the on-manifold controller config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicConfig {
    pub beta: f64,
    pub horizon: usize,
    pub candidates: usize,
}

impl GeodesicConfig {
    pub fn params(&self) -> GeodesicParams {
        GeodesicParams {
            beta: self.beta,
            horizon: self.horizon,
            candidates: self.candidates,
            ..GeodesicParams::for_dim(2)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControllerConfig {
    Cbf {
        alpha: AlphaFn,
        #[serde(default = "default_barrier_mode")]
        barrier_mode: BarrierMode,
    },
    ModNormal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constraint: Option<ModConstraint>,
        #[serde(default = "default_lambda")]
        lambda: LambdaPolicy,
    },
    ModReference {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constraint: Option<ModConstraint>,
        #[serde(default = "default_lambda")]
        lambda: LambdaPolicy,
    },
    Rmcbf {
        alpha: AlphaFn,
    },
    OnmMcbf {
        alpha: AlphaFn,
        gamma: f64,
        #[serde(default = "default_activation_band")]
        activation_band: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        geodesic: Option<GeodesicConfig>,
        #[serde(default = "default_barrier_mode")]
        barrier_mode: BarrierMode,
    },
}

impl ControllerConfig {
    pub fn label(&self) -> String {
        match self {
            ControllerConfig::Cbf { alpha, barrier_mode } => {
                format!("cbf{}{}", alpha_label(alpha), mode_label(barrier_mode))
            }
            ControllerConfig::ModNormal { .. } => "mod_normal".into(),
            ControllerConfig::ModReference { .. } => "mod_reference".into(),
            ControllerConfig::Rmcbf { alpha } => format!("rmcbf{}", alpha_label(alpha)),
            ControllerConfig::OnmMcbf { gamma, barrier_mode, .. } => {
                format!("onm_mcbf(g={gamma}){}", mode_label(barrier_mode))
            }
        }
    }
}

fn alpha_label(a: &AlphaFn) -> String {
    match a {
        AlphaFn::Linear { c } => format!("(a={c}h)"),
        AlphaFn::Cubic { c } => format!("(a={c}h3)"),
    }
}

fn mode_label(m: &BarrierMode) -> &'static str {
    match m {
        BarrierMode::Positional => "",
        BarrierMode::Augmented { .. } => "[aug]",
    }
}

/// A live controller instance: config plus the warm-start workspace. One
/// instance per simulated robot.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    solver: ActiveSetSolver,
    sensing_range: f64,
}

impl Controller {
    pub fn new(cfg: ControllerConfig, model: &RobotModel, sensing_range: f64) -> Result<Self> {
        model.validate()?;
        match &cfg {
            ControllerConfig::Cbf { alpha, barrier_mode } => {
                alpha.validate()?;
                check_mode(barrier_mode, model)?;
            }
            ControllerConfig::ModNormal { .. } | ControllerConfig::ModReference { .. } => {
                if !model.is_fully_actuated() {
                    return Err(Error::UnsupportedModel);
                }
            }
            ControllerConfig::Rmcbf { alpha } => alpha.validate()?,
            ControllerConfig::OnmMcbf { alpha, gamma, activation_band, geodesic, barrier_mode } => {
                alpha.validate()?;
                check_mode(barrier_mode, model)?;
                if *gamma <= 0.0 {
                    return Err(Error::ConfigInvalid("gamma must be positive".into()));
                }
                if *activation_band <= 0.0 {
                    return Err(Error::ConfigInvalid("activation band must be positive".into()));
                }
                if let Some(g) = geodesic {
                    let dim = if matches!(barrier_mode, BarrierMode::Augmented { .. }) { 3 } else { 2 };
                    g.params().validate(dim)?;
                }
            }
        }
        Ok(Controller { cfg, solver: ActiveSetSolver::new(), sensing_range })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    /// One control step. Recoverable controller failures (interior states,
    /// singular gradients, infeasible stages) brake and set flags; only
    /// configuration-level errors propagate.
    pub fn step(
        &mut self,
        model: &RobotModel,
        obstacles: &[Obstacle],
        x: &DVector<f64>,
        u_nom: &DVector<f64>,
        target: Vector2<f64>,
    ) -> Result<StepOutcome> {
        let p = model.input_dim();
        match self.cfg.clone() {
            ControllerConfig::Cbf { alpha, barrier_mode } => cbf_qp_step(
                &mut self.solver,
                model,
                obstacles,
                x,
                u_nom,
                alpha,
                barrier_mode,
                self.sensing_range,
            ),
            ControllerConfig::Rmcbf { alpha } => rmcbf_qp_step(
                &mut self.solver,
                model,
                obstacles,
                x,
                u_nom,
                alpha,
                self.sensing_range,
            ),
            ControllerConfig::OnmMcbf { alpha, gamma, activation_band, geodesic, barrier_mode } => {
                let dim = if matches!(barrier_mode, BarrierMode::Augmented { .. }) { 3 } else { 2 };
                let params = geodesic.map(|g| g.params()).unwrap_or_else(|| GeodesicParams::for_dim(dim));
                onm_mcbf_qp_step(
                    &mut self.solver,
                    model,
                    obstacles,
                    x,
                    u_nom,
                    alpha,
                    barrier_mode,
                    gamma,
                    &params,
                    activation_band,
                    self.sensing_range,
                    target,
                )
            }
            ControllerConfig::ModNormal { constraint, lambda } => {
                self.mod_step(DirectionMode::Normal, lambda, constraint, obstacles, x, u_nom, p)
            }
            ControllerConfig::ModReference { constraint, lambda } => {
                self.mod_step(DirectionMode::Reference, lambda, constraint, obstacles, x, u_nom, p)
            }
        }
    }

    fn mod_step(
        &mut self,
        direction: DirectionMode,
        lambda: LambdaPolicy,
        constraint: Option<ModConstraint>,
        obstacles: &[Obstacle],
        x: &DVector<f64>,
        u_nom: &DVector<f64>,
        p: usize,
    ) -> Result<StepOutcome> {
        let pos = Vector2::new(x[0], x[1]);
        let sensed: Vec<Obstacle> = obstacles
            .iter()
            .filter(|o| o.h(pos) <= self.sensing_range)
            .cloned()
            .collect();
        let spec = ModulationSpec { direction, lambda };
        let unconstrained = match modds_step(&spec, &sensed, pos, Vector2::new(u_nom[0], u_nom[1])) {
            Ok(u) => u,
            Err(Error::InsideObstacle(_)) | Err(Error::GradientSingular(_)) => {
                return Ok(StepOutcome::brake(p))
            }
            Err(e) => return Err(e),
        };
        // Safety projection direction from the nearest sensed obstacle; with
        // nothing sensed a zero normal reduces both constraints to plain
        // scaling / clamping.
        let (n, xbar) = sensed
            .iter()
            .map(|o| (o.h(pos), o))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .and_then(|(_, o)| {
                o.local_frame(pos).ok().map(|f| (f.n, o.surface_point_velocity(pos)))
            })
            .unwrap_or((Vector2::zeros(), Vector2::zeros()));
        let constrained = match constraint {
            None => unconstrained,
            Some(ModConstraint::Speed { u_ub }) => {
                match constrain_speed(unconstrained, n, xbar, u_ub) {
                    Ok(u) => u,
                    Err(Error::InfeasibleSafety { .. }) | Err(Error::TangentDegenerate) => {
                        return Ok(StepOutcome::brake(p))
                    }
                    Err(e) => return Err(e),
                }
            }
            Some(ModConstraint::Box { lower, upper }) => {
                match constrain_velocity(
                    unconstrained,
                    n,
                    xbar,
                    Vector2::new(lower[0], lower[1]),
                    Vector2::new(upper[0], upper[1]),
                ) {
                    Ok(u) => u,
                    Err(Error::Infeasible) => return Ok(StepOutcome::brake(p)),
                    Err(e) => return Err(e),
                }
            }
        };
        Ok(StepOutcome::clean(DVector::from_column_slice(&[constrained.x, constrained.y])))
    }
}

fn check_mode(mode: &BarrierMode, model: &RobotModel) -> Result<()> {
    match mode {
        BarrierMode::Positional => Ok(()),
        BarrierMode::Augmented { w } => {
            if model.state_dim() != 3 {
                Err(Error::ConfigInvalid("augmented barrier needs a 3-state model".into()))
            } else if *w <= 0.0 {
                Err(Error::ConfigInvalid("augmentation weight must be positive".into()))
            } else {
                Ok(())
            }
        }
    }
}

/// Default sensing radius re-exported for config plumbing.
pub fn default_sensing_range() -> f64 {
    DEFAULT_SENSING_RANGE
}
