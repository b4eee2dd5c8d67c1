//! Prints a sparse trace of one start under one method.
//!
//!     cargo run --release -p cbfmod --example trace -- convex5hz mod_normal 1

use cbfmod::cbf::{AlphaFn, BarrierMode};
use cbfmod::controller::ControllerConfig;
use cbfmod::presets;
use cbfmod::sim::run_scenario;

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "convex5hz".into());
    let method = args.next().unwrap_or_else(|| "mod_normal".into());
    let start: usize = args.next().unwrap_or_else(|| "0".into()).parse().unwrap();

    let mut base = presets::preset(&name).expect("preset");
    base.starts = vec![base.starts[start].clone()];
    let controller = match method.as_str() {
        "cbf_a1" => ControllerConfig::Cbf { alpha: AlphaFn::Linear { c: 1.0 }, barrier_mode: BarrierMode::Positional },
        "cbf_a5" => ControllerConfig::Cbf { alpha: AlphaFn::Linear { c: 5.0 }, barrier_mode: BarrierMode::Positional },
        "mod_normal" => ControllerConfig::ModNormal { constraint: None, lambda: cbfmod::LambdaPolicy::Standard },
        "mod_ref" => ControllerConfig::ModReference { constraint: None, lambda: cbfmod::LambdaPolicy::Standard },
        "onm" => presets::onm_controller(1.0),
        "onm01" => presets::onm_controller(0.1),
        "onm10" => presets::onm_controller(10.0),
        "onm_aug" => presets::onm_unicycle_augmented(1.0, 0.3),
        "onm_s" => presets::onm_unicycle_shifted(1.0),
        "keep" => base.controller.clone(),
        other => panic!("unknown method {other}"),
    };
    let scenario = base.with_controller(controller);
    let recs = run_scenario(&scenario).expect("run");
    let rec = &recs[0];
    println!("outcome: {:?}, steps {}", rec.outcome, rec.steps.len());
    let stride = (rec.steps.len() / 40).max(1);
    for (i, s) in rec.steps.iter().enumerate() {
        if i % stride == 0 || i + 1 == rec.steps.len() {
            let x: Vec<String> = s.x.iter().map(|v| format!("{v:7.3}")).collect();
            let u: Vec<String> = s.u.iter().map(|v| format!("{v:7.3}")).collect();
            println!(
                "t={:6.2} x=[{}] u=[{}] |u|={:.4} h_min={:8.4} inf={} fb={}",
                s.t,
                x.join(","),
                u.join(","),
                s.u.norm(),
                s.h_min,
                u8::from(s.infeasible),
                u8::from(s.fallback)
            );
        }
    }
}
