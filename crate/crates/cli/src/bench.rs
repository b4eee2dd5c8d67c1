//! Benchmark suites: the static shape/method matrix and the modulated-CBF
//! scenario batch. Tables are written as CSV and Markdown.

use std::path::PathBuf;

use anyhow::Result;
use nalgebra::Vector2;

use cbfmod::cbf::{AlphaFn, BarrierMode};
use cbfmod::controller::ControllerConfig;
use cbfmod::metrics::{compute_metrics, MetricsReport};
use cbfmod::presets::{self, onm_controller};
use cbfmod::sim::{nominal_trajectory, run_scenario, Outcome, Scenario};

use crate::io::write_atomic;

struct ShapeMethodRow {
    shape: String,
    method: String,
    l_ratio: (f64, f64),
    jerk: (f64, f64),
    d_obs: (f64, f64),
    v_near: (f64, f64),
    eta: (f64, f64),
    runtime_s: f64,
    infeasible_mean: f64,
    success_pct: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn fmt_ms(v: (f64, f64)) -> String {
    if v.0.is_nan() {
        "NA".into()
    } else {
        format!("{:.2} ({:.2})", v.0, v.1)
    }
}

/// Runs one (scenario, controller) cell and folds the per-start metrics the
/// way the static table reports them: l/l_nom, d_obs and v_near over runs
/// that reached the target; jerk and eta over the two canonical starts.
fn run_cell(scenario: &Scenario, method: &str) -> Result<(ShapeMethodRow, Vec<MetricsReport>)> {
    let records = run_scenario(scenario)?;
    let mut reports = Vec::new();
    for rec in &records {
        let nominal = nominal_trajectory(scenario, rec.start_index)?;
        let start = &scenario.starts[rec.start_index];
        reports.push(compute_metrics(
            rec,
            &nominal,
            Vector2::new(start[0], start[1]),
            scenario.target,
        )?);
    }
    let reached: Vec<&MetricsReport> =
        reports.iter().filter(|r| r.outcome == Outcome::Reached).collect();
    let canonical: Vec<&MetricsReport> = reports
        .iter()
        .take(2)
        .filter(|r| r.outcome == Outcome::Reached)
        .collect();
    let row = ShapeMethodRow {
        shape: scenario.name.clone(),
        method: method.to_string(),
        l_ratio: mean_std(&reached.iter().map(|r| r.l_ratio).collect::<Vec<_>>()),
        jerk: mean_std(&canonical.iter().map(|r| r.avg_jerk).collect::<Vec<_>>()),
        d_obs: mean_std(&reached.iter().map(|r| r.d_obs).collect::<Vec<_>>()),
        v_near: mean_std(&reached.iter().map(|r| r.v_near).collect::<Vec<_>>()),
        eta: mean_std(&canonical.iter().map(|r| r.eta).collect::<Vec<_>>()),
        runtime_s: reports.iter().map(|r| r.runtime_mean_ms).sum::<f64>()
            / reports.len().max(1) as f64
            / 1e3,
        infeasible_mean: reports.iter().map(|r| r.infeasible_count as f64).sum::<f64>()
            / reports.len().max(1) as f64,
        success_pct: 100.0 * reached.len() as f64 / reports.len().max(1) as f64,
    };
    Ok((row, reports))
}

pub fn static_methods() -> Vec<(&'static str, ControllerConfig)> {
    vec![
        (
            "cbf_a1",
            ControllerConfig::Cbf {
                alpha: AlphaFn::Linear { c: 1.0 },
                barrier_mode: BarrierMode::Positional,
            },
        ),
        (
            "cbf_a5",
            ControllerConfig::Cbf {
                alpha: AlphaFn::Linear { c: 5.0 },
                barrier_mode: BarrierMode::Positional,
            },
        ),
        (
            "mod_normal",
            ControllerConfig::ModNormal {
                constraint: None,
                lambda: cbfmod::LambdaPolicy::Standard,
            },
        ),
        (
            "mod_reference",
            ControllerConfig::ModReference {
                constraint: None,
                lambda: cbfmod::LambdaPolicy::Standard,
            },
        ),
        ("onm_mcbf", onm_controller(1.0)),
    ]
}

fn static_table(out_dir: &PathBuf) -> Result<()> {
    let mut rows = Vec::new();
    for shape in ["convex5hz", "star5hz", "cshape5hz"] {
        let base = presets::preset(shape)?;
        for (method, controller) in static_methods() {
            let scenario = base.clone().with_controller(controller);
            let (row, _) = run_cell(&scenario, method)?;
            println!("{shape} / {method}: success {:.0}%", row.success_pct);
            rows.push(row);
        }
    }

    let mut csv = String::from(
        "shape,method,l_ratio_mean,l_ratio_std,jerk_mean,jerk_std,d_obs_mean,d_obs_std,\
         v_near_mean,v_near_std,eta_mean,eta_std,infeasible_mean,success_pct,runtime_s\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.shape,
            r.method,
            r.l_ratio.0,
            r.l_ratio.1,
            r.jerk.0,
            r.jerk.1,
            r.d_obs.0,
            r.d_obs.1,
            r.v_near.0,
            r.v_near.1,
            r.eta.0,
            r.eta.1,
            r.infeasible_mean,
            r.success_pct,
            r.runtime_s
        ));
    }
    write_atomic(&out_dir.join("static_table.csv"), &csv)?;

    let mut md = String::from(
        "| Shape | Method | l/l_nom (std) | jerk (std) | d_obs (std) | v_near (std) | eta (std) | Runtime [s] | Success % |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for r in &rows {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {:.4e} | {:.0} |\n",
            r.shape,
            r.method,
            fmt_ms(r.l_ratio),
            fmt_ms(r.jerk),
            fmt_ms(r.d_obs),
            fmt_ms(r.v_near),
            fmt_ms(r.eta),
            r.runtime_s,
            r.success_pct
        ));
    }
    write_atomic(&out_dir.join("static_table.md"), &md)?;
    println!("static_table: {} rows -> {}", rows.len(), out_dir.display());
    Ok(())
}

struct SuiteRow {
    scenario: String,
    controller: String,
    reached: usize,
    collided: usize,
    stuck: usize,
    timeout: usize,
    min_clearance: f64,
    infeasible_mean: f64,
}

fn run_suite_row(scenario: &Scenario, label: &str) -> Result<SuiteRow> {
    let records = run_scenario(scenario)?;
    let mut tally = [0usize; 4];
    let mut min_clearance = f64::INFINITY;
    let mut infeasible = 0usize;
    for rec in &records {
        let idx = match rec.outcome {
            Outcome::Reached => 0,
            Outcome::Collided => 1,
            Outcome::Stuck => 2,
            Outcome::Timeout => 3,
        };
        tally[idx] += 1;
        infeasible += rec.infeasible_count();
        for s in &rec.steps {
            min_clearance = min_clearance.min(s.h_min);
        }
    }
    println!(
        "{} / {}: reached {}/{}",
        scenario.name,
        label,
        tally[0],
        records.len()
    );
    Ok(SuiteRow {
        scenario: scenario.name.clone(),
        controller: label.to_string(),
        reached: tally[0],
        collided: tally[1],
        stuck: tally[2],
        timeout: tally[3],
        min_clearance,
        infeasible_mean: infeasible as f64 / records.len().max(1) as f64,
    })
}

fn mcbf_suite(out_dir: &PathBuf) -> Result<()> {
    let mut rows = Vec::new();

    for name in ["funnel-rmcbf", "funnel-rmcbf-capped", "funnel-rmcbf-multi"] {
        let s = presets::preset(name)?;
        let label = s.controller.label();
        rows.push(run_suite_row(&s, &label)?);
    }

    for gamma in [0.1, 1.0, 10.0] {
        let s = presets::preset("cshape-gamma")?.with_controller(onm_controller(gamma));
        rows.push(run_suite_row(&s, &format!("onm_mcbf(g={gamma})"))?);
    }

    for name in ["cshape-unicycle-shifted", "cshape-unicycle-augmented"] {
        let base = presets::preset(name)?;
        let prefix = if name.ends_with("shifted") { "S" } else { "A" };
        let cbf_label = format!("{prefix}-cbf");
        rows.push(run_suite_row(&base, &cbf_label)?);
        let onm = match &base.controller {
            ControllerConfig::Cbf { barrier_mode: BarrierMode::Augmented { w }, .. } => {
                presets::onm_unicycle_augmented(1.0, *w)
            }
            _ => presets::onm_unicycle_shifted(1.0),
        };
        let s = base.with_controller(onm);
        rows.push(run_suite_row(&s, &format!("{prefix}-onm_mcbf"))?);
    }

    let hospital = presets::preset("hospital-lite")?;
    let label = hospital.controller.label();
    rows.push(run_suite_row(&hospital, &label)?);

    let mut csv = String::from(
        "scenario,controller,reached,collided,stuck,timeout,min_clearance,infeasible_mean\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.scenario,
            r.controller,
            r.reached,
            r.collided,
            r.stuck,
            r.timeout,
            r.min_clearance,
            r.infeasible_mean
        ));
    }
    write_atomic(&out_dir.join("mcbf_suite.csv"), &csv)?;

    let mut md = String::from(
        "| Scenario | Controller | Reached | Collided | Stuck | Timeout | Min clearance | Infeasible/run |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for r in &rows {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {:.4} | {:.2} |\n",
            r.scenario, r.controller, r.reached, r.collided, r.stuck, r.timeout, r.min_clearance, r.infeasible_mean
        ));
    }
    write_atomic(&out_dir.join("mcbf_suite.md"), &md)?;
    println!("mcbf_suite: {} rows -> {}", rows.len(), out_dir.display());
    Ok(())
}

pub fn cmd_bench(suite: &str, out_dir: PathBuf) -> Result<()> {
    match suite {
        "static_table" => static_table(&out_dir),
        "mcbf_suite" => mcbf_suite(&out_dir),
        other => Err(anyhow::anyhow!(cbfmod::Error::ConfigInvalid(format!(
            "unknown suite '{other}' (available: static_table, mcbf_suite)"
        )))),
    }
}
