//! Prints the per-start outcome matrix of a preset for each static-table
//! method; handy when adjusting start sets.
//!
//!     cargo run --release -p cbfmod --example outcome_matrix -- convex5hz

use cbfmod::cbf::{AlphaFn, BarrierMode};
use cbfmod::controller::ControllerConfig;
use cbfmod::presets;
use cbfmod::sim::{run_scenario, Outcome};

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "convex5hz".into());
    let base = presets::preset(&name).expect("preset");
    let methods: Vec<(&str, ControllerConfig)> = vec![
        (
            "cbf_a1",
            ControllerConfig::Cbf { alpha: AlphaFn::Linear { c: 1.0 }, barrier_mode: BarrierMode::Positional },
        ),
        (
            "cbf_a5",
            ControllerConfig::Cbf { alpha: AlphaFn::Linear { c: 5.0 }, barrier_mode: BarrierMode::Positional },
        ),
        (
            "mod_normal",
            ControllerConfig::ModNormal { constraint: None, lambda: cbfmod::LambdaPolicy::Standard },
        ),
        (
            "mod_ref",
            ControllerConfig::ModReference { constraint: None, lambda: cbfmod::LambdaPolicy::Standard },
        ),
        ("onm", presets::onm_controller(1.0)),
    ];

    println!("preset {name}: {} starts, timeout {}s", base.starts.len(), base.timeout);
    for (i, s) in base.starts.iter().enumerate() {
        let coords: Vec<String> = s.iter().map(|v| format!("{v:.2}")).collect();
        println!("  start {i}: [{}]", coords.join(", "));
    }
    for (label, controller) in methods {
        let scenario = base.clone().with_controller(controller);
        let t0 = std::time::Instant::now();
        let records = run_scenario(&scenario).expect("run");
        let marks: String = records
            .iter()
            .map(|r| match r.outcome {
                Outcome::Reached => 'R',
                Outcome::Collided => 'C',
                Outcome::Stuck => 'S',
                Outcome::Timeout => 'T',
            })
            .collect();
        let reached = records.iter().filter(|r| r.outcome == Outcome::Reached).count();
        println!(
            "{label:>10}: {marks}  success {}/{} ({:.1}s)",
            reached,
            records.len(),
            t0.elapsed().as_secs_f64()
        );
    }
}
