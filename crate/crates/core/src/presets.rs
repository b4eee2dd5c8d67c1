//! Named benchmark scenarios.
//!
//! The three desk-scale shape scenes share a target at the origin, an
//! obstacle centered at [2.5, 0] and ten starts on a ring of radius ~9
//! (including [4, 8] and [7, 5]); runs are at 5 Hz with a unit-speed nominal.
//! The remaining presets cover the reference-MCBF funnel scenes, the γ study,
//! the underactuated open-ring scenes and a scripted dynamic mix.

use nalgebra::{DVector, Vector2};

use crate::cbf::{AlphaFn, BarrierMode};
use crate::controller::{ControllerConfig, GeodesicConfig};
use crate::error::{Error, Result};
use crate::geometry::{Motion, Obstacle, Pose, Shape};
use crate::model::{GainMode, InputLimits, ModelKind, RobotModel};
use crate::sim::{Scenario, Thresholds};

pub const PRESET_NAMES: &[&str] = &[
    "convex5hz",
    "star5hz",
    "cshape5hz",
    "funnel-rmcbf",
    "funnel-rmcbf-capped",
    "funnel-rmcbf-multi",
    "cshape-gamma",
    "cshape-unicycle-shifted",
    "cshape-unicycle-augmented",
    "hospital-lite",
    "theorem1",
];

fn alpha_h() -> AlphaFn {
    AlphaFn::Linear { c: 1.0 }
}

fn cbf_controller() -> ControllerConfig {
    ControllerConfig::Cbf { alpha: alpha_h(), barrier_mode: BarrierMode::Positional }
}

pub fn onm_controller(gamma: f64) -> ControllerConfig {
    // Cubic gain keeps the allowed approach rate tiny near boundaries, so the
    // exit row's tangential speed cannot carve into thin walls at 5 Hz.
    ControllerConfig::OnmMcbf {
        alpha: AlphaFn::Cubic { c: 1.0 },
        gamma,
        activation_band: 2.0,
        geodesic: Some(GeodesicConfig { beta: 0.05, horizon: 180, candidates: 2 }),
        barrier_mode: BarrierMode::Positional,
    }
}

/// On-manifold controller over the orientation-augmented barrier; the
/// rollout runs in the 3-D state space with candidates spread in its
/// tangent plane.
pub fn onm_controller_augmented(gamma: f64, w: f64) -> ControllerConfig {
    ControllerConfig::OnmMcbf {
        alpha: AlphaFn::Cubic { c: 1.0 },
        gamma,
        activation_band: 2.0,
        geodesic: Some(GeodesicConfig { beta: 0.05, horizon: 180, candidates: 20 }),
        barrier_mode: BarrierMode::Augmented { w },
    }
}

fn circle_at(c_r: f64, p_o: [f64; 2]) -> Obstacle {
    Obstacle::stationary(Shape::Circle { c_r }, p_o).expect("valid circle")
}

fn funnel_at(p_o: [f64; 2]) -> Obstacle {
    Obstacle::stationary(Shape::Funnel { c_a: [2.5, 0.0], c_b: 0.1 }, p_o).expect("valid funnel")
}

fn cshape_at(p_o: [f64; 2], gap_heading: f64) -> Obstacle {
    Obstacle::stationary(
        Shape::OpenRing {
            r_in: 2.0,
            r_out: 2.3,
            gap_half_angle: std::f64::consts::FRAC_PI_4,
            gap_heading,
        },
        p_o,
    )
    .expect("valid open ring")
}

fn ring_starts(angles_deg: &[f64], radius: f64) -> Vec<DVector<f64>> {
    let mut starts = vec![
        DVector::from_column_slice(&[4.0, 8.0]),
        DVector::from_column_slice(&[7.0, 5.0]),
    ];
    starts.extend(angles_deg.iter().map(|a| {
        let rad = a.to_radians();
        DVector::from_column_slice(&[radius * rad.cos(), radius * rad.sin()])
    }));
    starts
}

fn base_scene(name: &str, obstacles: Vec<Obstacle>, starts: Vec<DVector<f64>>) -> Scenario {
    Scenario {
        name: name.into(),
        model: RobotModel::new(ModelKind::SingleIntegrator),
        obstacles,
        controller: cbf_controller(),
        starts,
        target: Vector2::zeros(),
        rate_hz: 5.0,
        timeout: 60.0,
        seed: 0,
        sensing_range: 3.0,
        nominal_gain: GainMode::Normalized,
        thresholds: Thresholds::default(),
    }
}

/// Ten starts of the circle scene: two on the axis ray behind the obstacle
/// (the inverse-collinearity trap), the rest spread over the approach ring.
fn convex5hz() -> Scenario {
    let mut starts = ring_starts(&[-70.0, -45.0, -20.0, 20.0, 45.0, 70.0], 9.0);
    starts.push(DVector::from_column_slice(&[9.0, 0.0]));
    starts.push(DVector::from_column_slice(&[6.5, 0.0]));
    Scenario { ..base_scene("convex5hz", vec![circle_at(2.0, [2.5, 0.0])], starts) }
}

/// Funnel scene: one start on the trap ray and one in its shadow.
fn star5hz() -> Scenario {
    let mut starts = ring_starts(&[-70.0, -45.0, -20.0, 20.0, 45.0, 70.0], 9.0);
    starts.push(DVector::from_column_slice(&[9.0, 0.0]));
    starts.push(DVector::from_column_slice(&[9.0, 0.02]));
    Scenario { ..base_scene("star5hz", vec![funnel_at([0.0, 0.0])], starts) }
}

/// Open-ring scene: the mouth is tilted off the approach axis and four
/// starts (including [7, 5]) feed the concave pocket.
fn cshape5hz() -> Scenario {
    let obstacle = cshape_at([2.5, 0.0], 0.61);
    let mut starts = ring_starts(&[-90.0, -70.0, 40.0, 45.0, 70.0], 9.0);
    starts.push(DVector::from_column_slice(&[9.0, 0.0]));
    starts.push(DVector::from_column_slice(&[9.0, 0.02]));
    starts.push(DVector::from_column_slice(&[9.0, 0.16]));
    Scenario { ..base_scene("cshape5hz", vec![obstacle], starts) }
}

fn funnel_rmcbf(capped: bool) -> Scenario {
    let mut starts = ring_starts(&[-60.0, -40.0, -20.0, 20.0, 45.0, 70.0, 110.0], 9.0);
    starts.push(DVector::from_column_slice(&[9.0, 0.0]));
    let mut s = base_scene(
        if capped { "funnel-rmcbf-capped" } else { "funnel-rmcbf" },
        vec![funnel_at([0.0, 0.0])],
        starts,
    );
    s.controller = ControllerConfig::Rmcbf { alpha: alpha_h() };
    if capped {
        s.model = s.model.with_limits(InputLimits { speed_cap: Some(2.0), lower: None, upper: None });
    }
    s
}

/// Multi-obstacle reference-MCBF scene: no start sits on a reference ray.
fn funnel_rmcbf_multi() -> Scenario {
    let obstacles = vec![
        funnel_at([0.0, 0.0]),
        funnel_at([0.5, 3.2]),
        circle_at(1.0, [1.0, -3.0]),
    ];
    let starts = ring_starts(&[-55.0, -35.0, -12.0, 12.0, 30.0, 55.0, 75.0, 100.0], 9.0);
    let mut s = base_scene("funnel-rmcbf-multi", obstacles, starts);
    s.controller = ControllerConfig::Rmcbf { alpha: alpha_h() };
    s.model = s.model.with_limits(InputLimits { speed_cap: Some(2.0), lower: None, upper: None });
    s
}

/// Open ring with its solid side to the flow, at 20 Hz: every start must
/// circumnavigate the band, so the progress rate sets the detour width.
fn cshape_gamma() -> Scenario {
    let obstacle = cshape_at([2.5, 0.0], std::f64::consts::PI);
    let mut starts = ring_starts(&[-70.0, -45.0, -20.0, 20.0, 45.0, 70.0], 9.0);
    starts.push(DVector::from_column_slice(&[9.0, 0.5]));
    starts.push(DVector::from_column_slice(&[9.0, -0.5]));
    let mut s = base_scene("cshape-gamma", vec![obstacle], starts);
    s.name = "cshape-gamma".into();
    s.rate_hz = 20.0;
    // Small progress rates circumnavigate slowly; give them room.
    s.timeout = 300.0;
    s.controller = onm_controller(1.0);
    s
}

fn unicycle_starts(position: [f64; 2]) -> Vec<DVector<f64>> {
    (0..10)
        .map(|i| {
            let theta = -std::f64::consts::PI + std::f64::consts::TAU * i as f64 / 10.0;
            DVector::from_column_slice(&[position[0], position[1], theta])
        })
        .collect()
}

/// Tuned on-manifold configs of the underactuated scenes: the liveness row
/// stays out of the deep hole interior where the boundary normal spins.
pub fn onm_unicycle_shifted(gamma: f64) -> ControllerConfig {
    ControllerConfig::OnmMcbf {
        alpha: AlphaFn::Cubic { c: 1.0 },
        gamma,
        activation_band: 1.0,
        geodesic: Some(GeodesicConfig { beta: 0.05, horizon: 180, candidates: 2 }),
        barrier_mode: BarrierMode::Positional,
    }
}

pub fn onm_unicycle_augmented(gamma: f64, w: f64) -> ControllerConfig {
    ControllerConfig::OnmMcbf {
        alpha: AlphaFn::Cubic { c: 1.0 },
        gamma,
        activation_band: 1.0,
        geodesic: Some(GeodesicConfig { beta: 0.05, horizon: 180, candidates: 20 }),
        barrier_mode: BarrierMode::Augmented { w },
    }
}

fn cshape_unicycle(shifted: bool) -> Scenario {
    let name = if shifted { "cshape-unicycle-shifted" } else { "cshape-unicycle-augmented" };
    // The robot begins inside the C cluster (ten headings from one pose)
    // and must navigate out of the mouth and around to the target.
    let mut s = base_scene(
        name,
        vec![cshape_at([2.5, 0.0], std::f64::consts::FRAC_PI_4)],
        unicycle_starts([1.8, 0.2]),
    );
    s.rate_hz = 20.0;
    s.timeout = 90.0;
    s.model = if shifted {
        RobotModel::new(ModelKind::ShiftedUnicycle { a: 0.3 })
    } else {
        RobotModel::new(ModelKind::Unicycle)
    }
    .with_limits(InputLimits {
        speed_cap: None,
        lower: Some(vec![-2.0, -4.0]),
        upper: Some(vec![2.0, 4.0]),
    });
    s.controller = if shifted {
        ControllerConfig::Cbf { alpha: alpha_h(), barrier_mode: BarrierMode::Positional }
    } else {
        ControllerConfig::Cbf { alpha: alpha_h(), barrier_mode: BarrierMode::Augmented { w: 0.3 } }
    };
    s
}

/// Scripted indoor mix: a concave counter, two static discs and one disc
/// crossing the scene.
fn hospital_lite() -> Scenario {
    let moving = Obstacle::new(
        Shape::Circle { c_r: 0.5 },
        Pose { p_o: [6.0, -2.5], orientation: 0.0 },
        Motion { x_r: [6.0, -2.5], v_r: [-0.35, 0.25], omega: 0.0 },
    )
    .expect("valid moving disc");
    let obstacles = vec![
        cshape_at([2.0, 0.5], std::f64::consts::FRAC_PI_4),
        circle_at(0.8, [-1.5, -2.0]),
        circle_at(0.6, [0.5, 3.0]),
        moving,
    ];
    let starts = vec![
        DVector::from_column_slice(&[7.0, 1.0]),
        DVector::from_column_slice(&[7.5, -1.5]),
        DVector::from_column_slice(&[6.0, 3.5]),
        DVector::from_column_slice(&[8.0, 0.0]),
    ];
    let mut s = base_scene("hospital-lite", obstacles, starts);
    s.target = Vector2::new(-5.0, 0.5);
    s.rate_hz = 20.0;
    s.controller = onm_controller(1.0);
    s
}

/// Head-on stall demonstration: inverse collinearity between the nominal
/// input and the boundary normal freezes the filtered flow at the boundary.
fn theorem1() -> Scenario {
    let mut s = base_scene(
        "theorem1",
        vec![circle_at(2.0, [0.0, 0.0])],
        vec![DVector::from_column_slice(&[6.0, 0.0])],
    );
    s.name = "theorem1".into();
    s
}

pub fn preset(name: &str) -> Result<Scenario> {
    let s = match name {
        "convex5hz" => convex5hz(),
        "star5hz" => star5hz(),
        "cshape5hz" => cshape5hz(),
        "funnel-rmcbf" => funnel_rmcbf(false),
        "funnel-rmcbf-capped" => funnel_rmcbf(true),
        "funnel-rmcbf-multi" => funnel_rmcbf_multi(),
        "cshape-gamma" => cshape_gamma(),
        "cshape-unicycle-shifted" => cshape_unicycle(true),
        "cshape-unicycle-augmented" => cshape_unicycle(false),
        "hospital-lite" => hospital_lite(),
        "theorem1" => theorem1(),
        other => {
            return Err(Error::ConfigInvalid(format!(
                "unknown preset '{other}' (available: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for name in PRESET_NAMES {
            let s = preset(name).unwrap();
            s.validate().unwrap_or_else(|e| panic!("preset {name}: {e}"));
            assert_eq!(s.name, *name);
        }
    }

    #[test]
    fn shape_scenes_have_ten_starts() {
        for name in ["convex5hz", "star5hz", "cshape5hz"] {
            let s = preset(name).unwrap();
            assert_eq!(s.starts.len(), 10, "{name}");
            assert!(s.starts.iter().any(|p| (p[0] - 4.0).abs() < 1e-9 && (p[1] - 8.0).abs() < 1e-9));
            assert!(s.starts.iter().any(|p| (p[0] - 7.0).abs() < 1e-9 && (p[1] - 5.0).abs() < 1e-9));
            assert_eq!(s.rate_hz, 5.0);
        }
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(preset("nope").is_err());
    }
}
