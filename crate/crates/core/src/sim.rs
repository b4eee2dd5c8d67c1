//! Closed-loop scenario execution: obstacle motion, controller stepping,
//! termination classification and trajectory recording.

use nalgebra::{DVector, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{default_sensing_range, Controller, ControllerConfig};
use crate::error::{Error, Result};
use crate::geometry::{Motion, Obstacle, Pose, Shape};
use crate::model::{nominal_linear, nominal_unicycle, GainMode, InputLimits, ModelKind, RobotModel};

/// Penetrations past this depth classify as collisions; shallower ones are
/// discretization noise and only show up in the logs.
pub const COLLISION_TOL: f64 = -1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub reach_radius: f64,
    pub collision_tol: f64,
    pub stuck_window: f64,
    pub stuck_displacement: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            reach_radius: 0.1,
            collision_tol: COLLISION_TOL,
            stuck_window: 2.0,
            stuck_displacement: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Reached,
    Collided,
    Stuck,
    Timeout,
}

/// One recorded control step; the last row of a trajectory is the terminal
/// state with zeroed inputs and no timing.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub u_nom: DVector<f64>,
    pub h_min: f64,
    pub infeasible: bool,
    pub fallback: bool,
    pub step_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub start_index: usize,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
}

impl TrajectoryRecord {
    pub fn positions(&self) -> Vec<Vector2<f64>> {
        self.steps.iter().map(|s| Vector2::new(s.x[0], s.x[1])).collect()
    }

    pub fn final_position(&self) -> Vector2<f64> {
        let last = self.steps.last().expect("trajectory has at least one row");
        Vector2::new(last.x[0], last.x[1])
    }

    /// Infeasible stages over the executed control steps.
    pub fn infeasible_count(&self) -> usize {
        let n = self.steps.len();
        self.steps[..n.saturating_sub(1)].iter().filter(|s| s.infeasible).count()
    }
}

/// A fully resolved scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: RobotModel,
    pub obstacles: Vec<Obstacle>,
    pub controller: ControllerConfig,
    pub starts: Vec<DVector<f64>>,
    pub target: Vector2<f64>,
    pub rate_hz: f64,
    pub timeout: f64,
    pub seed: u64,
    pub sensing_range: f64,
    pub nominal_gain: GainMode,
    pub thresholds: Thresholds,
}

impl Scenario {
    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn with_controller(mut self, controller: ControllerConfig) -> Self {
        self.controller = controller;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.rate_hz <= 0.0 || self.timeout <= 0.0 {
            return Err(Error::ConfigInvalid("rate and timeout must be positive".into()));
        }
        if self.starts.is_empty() {
            return Err(Error::ConfigInvalid("scenario needs at least one start".into()));
        }
        let d = self.model.state_dim();
        for (i, s) in self.starts.iter().enumerate() {
            if s.len() != d {
                return Err(Error::ConfigInvalid(format!(
                    "start {i} has dimension {} but the model expects {d}",
                    s.len()
                )));
            }
            let pos = Vector2::new(s[0], s[1]);
            for obs in &self.obstacles {
                if obs.h(pos) <= 0.0 {
                    return Err(Error::ConfigInvalid(format!("start {i} lies inside an obstacle")));
                }
            }
        }
        Controller::new(self.controller.clone(), &self.model, self.sensing_range)?;
        Ok(())
    }

    /// Nominal input at a state. The speed is additionally capped at
    /// distance/dt so a single control period cannot overshoot the target
    /// (the continuous nominal flow never does; uncapped discrete hops at
    /// unit speed would straddle the reach ball forever).
    fn nominal(&self, x: &DVector<f64>) -> DVector<f64> {
        let dist = (Vector2::new(x[0], x[1]) - self.target).norm();
        let cap = dist / self.dt();
        match self.model.kind {
            ModelKind::SingleIntegrator => {
                let (u, _) = nominal_linear(Vector2::new(x[0], x[1]), self.target, self.nominal_gain);
                let u = if u.norm() > cap { u * (cap / u.norm()) } else { u };
                DVector::from_column_slice(&[u.x, u.y])
            }
            ModelKind::Unicycle | ModelKind::ShiftedUnicycle { .. } => {
                let bound = self.model.limits.as_ref().and_then(|l| l.omega_bound());
                let mut u = nominal_unicycle(x, self.target, self.dt(), bound).0;
                u[0] = u[0].min(cap);
                u
            }
        }
    }
}

/// Terminal condition at sample `k` of a position/h history, or `None` while
/// the run continues. Checked in the order reached, collided, stuck, timeout.
fn terminal_at(
    k: usize,
    times: &[f64],
    positions: &[Vector2<f64>],
    h_mins: &[f64],
    target: Vector2<f64>,
    th: &Thresholds,
    timeout: f64,
    rate_hz: f64,
) -> Option<Outcome> {
    if (positions[k] - target).norm() <= th.reach_radius {
        return Some(Outcome::Reached);
    }
    if h_mins[k] < th.collision_tol {
        return Some(Outcome::Collided);
    }
    let window_steps = (th.stuck_window * rate_hz).round() as usize;
    if window_steps > 0 && k >= window_steps {
        if (positions[k] - positions[k - window_steps]).norm() < th.stuck_displacement {
            return Some(Outcome::Stuck);
        }
    }
    if times[k] >= timeout - 1e-9 {
        return Some(Outcome::Timeout);
    }
    None
}

/// Post-hoc outcome classification of a recorded history.
pub fn classify(
    times: &[f64],
    positions: &[Vector2<f64>],
    h_mins: &[f64],
    target: Vector2<f64>,
    th: &Thresholds,
    timeout: f64,
    rate_hz: f64,
) -> Outcome {
    assert!(!positions.is_empty(), "classification needs a nonempty history");
    for k in 0..positions.len() {
        if let Some(outcome) = terminal_at(k, times, positions, h_mins, target, th, timeout, rate_hz) {
            return outcome;
        }
    }
    Outcome::Timeout
}

fn h_min_at(obstacles: &[Obstacle], pos: Vector2<f64>) -> f64 {
    obstacles.iter().map(|o| o.h(pos)).fold(f64::INFINITY, f64::min)
}

fn run_single(s: &Scenario, start_index: usize) -> Result<TrajectoryRecord> {
    let mut controller = Controller::new(s.controller.clone(), &s.model, s.sensing_range)?;
    let dt = s.dt();
    let p = s.model.input_dim();
    let mut x = s.starts[start_index].clone();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut times = Vec::new();
    let mut positions = Vec::new();
    let mut h_mins = Vec::new();

    let outcome = loop {
        let k = steps.len();
        let t = k as f64 * dt;
        let obstacles: Vec<Obstacle> = s.obstacles.iter().map(|o| o.at_time(t)).collect();
        let pos = Vector2::new(x[0], x[1]);
        let h_min = h_min_at(&obstacles, pos);
        times.push(t);
        positions.push(pos);
        h_mins.push(h_min);

        if let Some(outcome) =
            terminal_at(k, &times, &positions, &h_mins, s.target, &s.thresholds, s.timeout, s.rate_hz)
        {
            steps.push(StepRecord {
                t,
                x: x.clone(),
                u: DVector::zeros(p),
                u_nom: DVector::zeros(p),
                h_min,
                infeasible: false,
                fallback: false,
                step_ms: 0.0,
            });
            break outcome;
        }

        let u_nom = s.nominal(&x);
        let clock = std::time::Instant::now();
        let out = controller.step(&s.model, &obstacles, &x, &u_nom, s.target)?;
        let step_ms = clock.elapsed().as_secs_f64() * 1e3;
        steps.push(StepRecord {
            t,
            x: x.clone(),
            u: out.u.clone(),
            u_nom,
            h_min,
            infeasible: out.infeasible,
            fallback: out.fallback,
            step_ms,
        });
        x = s.model.propagate(&x, &out.u, dt)?;
    };

    Ok(TrajectoryRecord { start_index, steps, outcome })
}

/// Runs every start of a scenario (starts in parallel, each loop strictly
/// sequential) and returns the records in start order.
pub fn run_scenario(s: &Scenario) -> Result<Vec<TrajectoryRecord>> {
    s.validate()?;
    (0..s.starts.len())
        .into_par_iter()
        .map(|i| run_single(s, i))
        .collect()
}

/// Obstacle-free closed-loop rollout of the nominal controller from one
/// start; the reference path for the length-ratio metric.
pub fn nominal_trajectory(s: &Scenario, start_index: usize) -> Result<Vec<Vector2<f64>>> {
    let dt = s.dt();
    let mut x = s.starts[start_index].clone();
    let mut path = vec![Vector2::new(x[0], x[1])];
    let max_steps = (s.timeout / dt).ceil() as usize;
    for _ in 0..max_steps {
        if (Vector2::new(x[0], x[1]) - s.target).norm() <= s.thresholds.reach_radius {
            break;
        }
        let u = s.nominal(&x);
        x = s.model.propagate(&x, &u, dt)?;
        path.push(Vector2::new(x[0], x[1]));
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Serde-facing scenario schema
// ---------------------------------------------------------------------------

/// Obstacle block of the scenario files; the reference point is derived from
/// the shape unless overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleConfig {
    pub shape: Shape,
    pub pose: Pose,
    #[serde(default = "Motion::stationary")]
    pub motion: Motion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_point: Option<[f64; 2]>,
}

impl ObstacleConfig {
    pub fn build(&self) -> Result<Obstacle> {
        let obs = Obstacle::new(self.shape.clone(), self.pose, self.motion)?;
        match self.reference_point {
            Some(rp) => obs.with_reference_point(rp),
            None => Ok(obs),
        }
    }

    pub fn from_obstacle(o: &Obstacle) -> Self {
        ObstacleConfig {
            shape: o.shape.clone(),
            pose: o.pose,
            motion: o.motion,
            reference_point: Some(o.reference_point),
        }
    }
}

fn default_seed() -> u64 {
    0
}

fn default_nominal() -> GainMode {
    GainMode::Normalized
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<InputLimits>,
}

/// On-disk scenario schema (JSON). All quantities are SI: meters, radians,
/// seconds, m/s, rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelConfig,
    pub obstacles: Vec<ObstacleConfig>,
    pub controller: ControllerConfig,
    pub starts: Vec<Vec<f64>>,
    pub target: [f64; 2],
    pub rate_hz: f64,
    pub timeout_s: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_sensing_range")]
    pub sensing_range: f64,
    #[serde(default = "default_nominal")]
    pub nominal: GainMode,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<Scenario> {
        let obstacles: Result<Vec<Obstacle>> = self.obstacles.iter().map(|o| o.build()).collect();
        let scenario = Scenario {
            name: self.name.clone(),
            model: RobotModel { kind: self.model.kind, limits: self.model.limits.clone() },
            obstacles: obstacles?,
            controller: self.controller.clone(),
            starts: self.starts.iter().map(|s| DVector::from_column_slice(s)).collect(),
            target: Vector2::new(self.target[0], self.target[1]),
            rate_hz: self.rate_hz,
            timeout: self.timeout_s,
            seed: self.seed,
            sensing_range: self.sensing_range,
            nominal_gain: self.nominal,
            thresholds: self.thresholds.unwrap_or_default(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        ScenarioConfig {
            name: s.name.clone(),
            model: ModelConfig { kind: s.model.kind, limits: s.model.limits.clone() },
            obstacles: s.obstacles.iter().map(ObstacleConfig::from_obstacle).collect(),
            controller: s.controller.clone(),
            starts: s.starts.iter().map(|v| v.iter().copied().collect()).collect(),
            target: [s.target.x, s.target.y],
            rate_hz: s.rate_hz,
            timeout_s: s.timeout,
            seed: s.seed,
            sensing_range: s.sensing_range,
            nominal: s.nominal_gain,
            thresholds: Some(s.thresholds),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbf::AlphaFn;
    use approx::assert_relative_eq;

    fn free_scenario() -> Scenario {
        Scenario {
            name: "free".into(),
            model: RobotModel::new(ModelKind::SingleIntegrator),
            obstacles: vec![],
            controller: ControllerConfig::Cbf {
                alpha: AlphaFn::Linear { c: 1.0 },
                barrier_mode: crate::cbf::BarrierMode::Positional,
            },
            starts: vec![DVector::from_column_slice(&[4.0, 3.0])],
            target: Vector2::zeros(),
            rate_hz: 5.0,
            timeout: 20.0,
            seed: 0,
            sensing_range: 3.0,
            nominal_gain: GainMode::Normalized,
            thresholds: Thresholds::default(),
        }
    }

    #[test]
    fn obstacle_free_run_reaches_straight() {
        let s = free_scenario();
        let recs = run_scenario(&s).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].outcome, Outcome::Reached);
        // Straight path: every position lies on the start→target line.
        let dir = Vector2::new(-0.8, -0.6);
        for p in recs[0].positions() {
            let along = p.dot(&dir);
            let off = (p - along * dir).norm();
            assert!(off < 1e-9, "deviation {off}");
        }
        // Timestamps advance by 1/rate.
        for w in recs[0].steps.windows(2) {
            assert_relative_eq!(w[1].t - w[0].t, 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn start_inside_obstacle_rejected() {
        let mut s = free_scenario();
        s.obstacles =
            vec![Obstacle::stationary(Shape::Circle { c_r: 2.0 }, [4.0, 3.0]).unwrap()];
        assert!(matches!(s.validate(), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn forced_penetration_classifies_collided() {
        let times = [0.0, 0.2, 0.4];
        let positions = [Vector2::new(3.0, 0.0), Vector2::new(2.5, 0.0), Vector2::new(2.0, 0.0)];
        let h_mins = [1.0, 0.2, -0.5];
        let out = classify(
            &times,
            &positions,
            &h_mins,
            Vector2::zeros(),
            &Thresholds::default(),
            10.0,
            5.0,
        );
        assert_eq!(out, Outcome::Collided);
    }

    #[test]
    fn stationary_at_target_classifies_reached() {
        let out = classify(
            &[0.0],
            &[Vector2::new(0.05, 0.0)],
            &[10.0],
            Vector2::zeros(),
            &Thresholds::default(),
            10.0,
            5.0,
        );
        assert_eq!(out, Outcome::Reached);
    }

    #[test]
    fn scenario_config_roundtrip() {
        let s = free_scenario();
        let cfg = ScenarioConfig::from_scenario(&s);
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let parsed: ScenarioConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, parsed);
        let rebuilt = parsed.build().unwrap();
        assert_eq!(rebuilt.starts, s.starts);
        assert_eq!(rebuilt.rate_hz, s.rate_hz);
    }
}
