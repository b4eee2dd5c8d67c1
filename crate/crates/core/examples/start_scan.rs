//! Scans candidate starts for a shape scene and prints the outcome of every
//! static-table method at each start, to help pick preset start sets.
//!
//!     cargo run --release -p cbfmod --example start_scan -- cshape 0.785

use cbfmod::cbf::{AlphaFn, BarrierMode};
use cbfmod::controller::ControllerConfig;
use cbfmod::geometry::{Obstacle, Shape};
use cbfmod::model::{GainMode, ModelKind, RobotModel};
use cbfmod::presets::onm_controller;
use cbfmod::sim::{run_scenario, Outcome, Scenario, Thresholds};
use nalgebra::{DVector, Vector2};

fn mark(o: Outcome) -> char {
    match o {
        Outcome::Reached => 'R',
        Outcome::Collided => 'C',
        Outcome::Stuck => 'S',
        Outcome::Timeout => 'T',
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let shape_name = args.next().unwrap_or_else(|| "cshape".into());
    let gap_heading: f64 = args.next().unwrap_or_else(|| "0".into()).parse().unwrap();

    let shape = match shape_name.as_str() {
        "convex" => Shape::Circle { c_r: 2.0 },
        "star" => Shape::Funnel { c_a: [2.5, 0.0], c_b: 0.1 },
        "cshape" => Shape::OpenRing {
            r_in: 2.0,
            r_out: 2.3,
            gap_half_angle: std::f64::consts::FRAC_PI_4,
            gap_heading,
        },
        other => panic!("unknown shape {other}"),
    };
    let p_o = if shape_name == "star" { [0.0, 0.0] } else { [2.5, 0.0] };
    let mut obstacle = Obstacle::stationary(shape, p_o).unwrap();

    if shape_name == "cshape" && (gap_heading - std::f64::consts::PI).abs() < 1e-9 {
        obstacle = obstacle.with_reference_point([4.65, 0.0]).unwrap();
    }

    // Candidate starts: ring of radius 9 over a dense angle sweep, plus
    // small offsets from the +x axis.
    let mut starts: Vec<DVector<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for deg in (-90..=90).step_by(10) {
        let rad = (deg as f64).to_radians();
        starts.push(DVector::from_column_slice(&[9.0 * rad.cos(), 9.0 * rad.sin()]));
        labels.push(format!("ring{deg:+03}"));
    }
    for off in [0.0, 0.005, 0.02, 0.04, 0.06, 0.09, 0.12, 0.16, 0.2, 0.3, 0.5, 0.8] {
        starts.push(DVector::from_column_slice(&[9.0, off]));
        labels.push(format!("off{off}"));
    }
    starts.push(DVector::from_column_slice(&[4.0, 8.0]));
    labels.push("p48".into());
    starts.push(DVector::from_column_slice(&[7.0, 5.0]));
    labels.push("p75".into());
    if shape_name == "cshape" {
        // Ray through the ring's interior reference point (r* at the
        // mid-band opposite the gap): candidate reference-anti-collinear
        // starts.
        let mid = gap_heading + std::f64::consts::PI;
        let rstar = Vector2::new(2.5 + 2.15 * mid.cos(), 2.15 * mid.sin());
        let dir = rstar / rstar.norm();
        for (k, scale) in [(0, 1.0), (1, 1.002), (2, 1.01), (3, 1.05)] {
            let p = 9.0 * scale * dir;
            starts.push(DVector::from_column_slice(&[p.x, p.y]));
            labels.push(format!("ray{k}"));
        }
        for off in [0.02f64, 0.05, 0.1, 0.3] {
            let perp = Vector2::new(-dir.y, dir.x);
            let p = 9.0 * dir + off * perp;
            starts.push(DVector::from_column_slice(&[p.x, p.y]));
            labels.push(format!("rayoff{off}"));
        }
    }

    let base = Scenario {
        name: "scan".into(),
        model: RobotModel::new(ModelKind::SingleIntegrator),
        obstacles: vec![obstacle],
        controller: onm_controller(1.0),
        starts,
        target: Vector2::zeros(),
        rate_hz: 5.0,
        timeout: 60.0,
        seed: 0,
        sensing_range: 3.0,
        nominal_gain: GainMode::Normalized,
        thresholds: Thresholds::default(),
    };

    let methods: Vec<(&str, ControllerConfig)> = vec![
        ("cbf_a1", ControllerConfig::Cbf { alpha: AlphaFn::Linear { c: 1.0 }, barrier_mode: BarrierMode::Positional }),
        ("cbf_a5", ControllerConfig::Cbf { alpha: AlphaFn::Linear { c: 5.0 }, barrier_mode: BarrierMode::Positional }),
        ("mod_normal", ControllerConfig::ModNormal { constraint: None, lambda: cbfmod::LambdaPolicy::Standard }),
        ("mod_ref", ControllerConfig::ModReference { constraint: None, lambda: cbfmod::LambdaPolicy::Standard }),
        ("onm", onm_controller(1.0)),
    ];

    println!(
        "shape {shape_name} gap_heading {gap_heading:.3} gap_half {:.3}",
        std::env::args().nth(3).map(|v| v.parse::<f64>().unwrap()).unwrap_or(std::f64::consts::FRAC_PI_4)
    );
    let mut rows: Vec<String> = labels.iter().map(|l| format!("{l:>10}")).collect();
    for (name, controller) in methods {
        let scenario = base.clone().with_controller(controller);
        let recs = run_scenario(&scenario).expect("run");
        for (i, r) in recs.iter().enumerate() {
            rows[i].push_str(&format!(" {:>10}", mark(r.outcome)));
        }
        print!("{name:>11}");
    }
    println!();
    for row in rows {
        println!("{row}");
    }
}
