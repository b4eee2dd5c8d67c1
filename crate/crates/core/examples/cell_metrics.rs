//! Per-start outcome and l/l_nom of one preset under one method.
//!
//!     cargo run --release -p cbfmod --example cell_metrics -- cshape5hz mod_ref

use cbfmod::cbf::{AlphaFn, BarrierMode};
use cbfmod::controller::ControllerConfig;
use cbfmod::metrics::compute_metrics;
use cbfmod::presets;
use cbfmod::sim::{nominal_trajectory, run_scenario, Outcome};
use nalgebra::Vector2;

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "cshape5hz".into());
    let method = args.next().unwrap_or_else(|| "mod_ref".into());
    let controller = match method.as_str() {
        "cbf_a1" => ControllerConfig::Cbf { alpha: AlphaFn::Linear { c: 1.0 }, barrier_mode: BarrierMode::Positional },
        "cbf_a5" => ControllerConfig::Cbf { alpha: AlphaFn::Linear { c: 5.0 }, barrier_mode: BarrierMode::Positional },
        "mod_normal" => ControllerConfig::ModNormal { constraint: None, lambda: cbfmod::LambdaPolicy::Standard },
        "mod_ref" => ControllerConfig::ModReference { constraint: None, lambda: cbfmod::LambdaPolicy::Standard },
        "onm" => presets::onm_controller(1.0),
        other => panic!("unknown method {other}"),
    };
    let scenario = presets::preset(&name).unwrap().with_controller(controller);
    let recs = run_scenario(&scenario).unwrap();
    let mut reached_ratios = Vec::new();
    for rec in &recs {
        let nominal = nominal_trajectory(&scenario, rec.start_index).unwrap();
        let start = &scenario.starts[rec.start_index];
        let m = compute_metrics(rec, &nominal, Vector2::new(start[0], start[1]), scenario.target).unwrap();
        println!(
            "start {}: {:?} l_ratio {:.3} v_near {:.3} d_obs {:.3}",
            rec.start_index, rec.outcome, m.l_ratio, m.v_near, m.d_obs
        );
        if rec.outcome == Outcome::Reached {
            reached_ratios.push(m.l_ratio);
        }
    }
    let mean = reached_ratios.iter().sum::<f64>() / reached_ratios.len().max(1) as f64;
    println!("{name}/{method}: mean l_ratio over reached = {mean:.3}");
}
