//! Reactive safe control for planar mobile robots: CBF-QP safety filters,
//! dynamical-system modulation (normal and reference), the modulated CBF-QP
//! controllers that combine them, and a deterministic scenario harness with
//! behavior metrics.
//!
//! Conventions: boundary functions are positive outside obstacles and
//! negative inside; all quantities are SI (meters, radians, seconds); every
//! numeric path is `f64`.

pub mod cbf;
pub mod controller;
pub mod error;
pub mod field;
pub mod geodesic;
pub mod geometry;
pub mod mcbf;
pub mod metrics;
pub mod model;
pub mod modulation;
pub mod presets;
pub mod qp;
pub mod sim;

pub use cbf::{AlphaFn, BarrierMode, CbfRow, StepOutcome};
pub use controller::{Controller, ControllerConfig, GeodesicConfig, ModConstraint};
pub use error::{Error, Result};
pub use field::{sample_field, FieldGrid, FieldSample};
pub use geodesic::{exit_direction, geodesic_rollout, GeodesicParams, GeodesicRollout};
pub use geometry::{BarrierField, BoundaryEval, LocalFrame, Motion, Obstacle, Pose, Shape};
pub use mcbf::{mcbf_difference, rmcbf_closed_form, ExplicitRmcbfWork};
pub use metrics::{compute_metrics, MetricsReport};
pub use model::{augmented_barrier, GainMode, InputLimits, ModelKind, RobotModel};
pub use modulation::{
    cbf_equivalent_lambdas, constrain_speed, constrain_velocity, modds_step, DirectionMode,
    LambdaPolicy, ModulationSpec,
};
pub use qp::{ActiveSetSolver, QProblem, QSolution, QpStatus};
pub use sim::{
    classify, nominal_trajectory, run_scenario, Outcome, Scenario, ScenarioConfig, StepRecord,
    Thresholds, TrajectoryRecord,
};
