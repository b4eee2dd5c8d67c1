//! Quick outcome check of one preset under its own controller.
//!
//!     cargo run --release -p cbfmod --example suite_check -- funnel-rmcbf

use cbfmod::presets;
use cbfmod::sim::{run_scenario, Outcome};
use nalgebra::DVector;

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "funnel-rmcbf".into());
    let gamma: Option<f64> = std::env::args().nth(2).and_then(|v| v.parse().ok());
    let mut scenario = presets::preset(&name).expect("preset");
    if let Some(g) = gamma {
        scenario = scenario.with_controller(presets::onm_controller(g));
    }
    let recs = run_scenario(&scenario).expect("run");
    let mut reached = 0;
    for rec in &recs {
        let start = &scenario.starts[rec.start_index];
        let coords: Vec<String> = start.iter().map(|v| format!("{v:.2}")).collect();
        let min_h = rec.steps.iter().map(|s| s.h_min).fold(f64::INFINITY, f64::min);
        let final_u = rec
            .steps
            .iter()
            .rev()
            .nth(1)
            .map(|s| s.u.norm())
            .unwrap_or(0.0);
        println!(
            "start {} [{}]: {:?} (min h {:.4}, final |u| {:.2e}, {} steps, infeasible {})",
            rec.start_index,
            coords.join(", "),
            rec.outcome,
            min_h,
            final_u,
            rec.steps.len(),
            rec.infeasible_count()
        );
        if rec.outcome == Outcome::Reached {
            reached += 1;
        }
    }
    let _ = DVector::<f64>::zeros(1);
    println!("{name}: reached {reached}/{}", recs.len());
}
