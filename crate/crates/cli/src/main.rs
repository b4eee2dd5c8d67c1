//! Scenario runner, field sampler, benchmark batches and metric recompute.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod bench;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;

use cbfmod::cbf::{AlphaFn, BarrierMode};
use cbfmod::controller::ControllerConfig;
use cbfmod::field::{sample_field, FieldGrid};
use cbfmod::metrics::compute_metrics;
use cbfmod::presets;
use cbfmod::sim::{nominal_trajectory, run_scenario, Scenario, ScenarioConfig};

use io::{aggregate, output_root, write_atomic, RunSummary, StartReport};

#[derive(Parser)]
#[command(name = "cbfmod", version, about = "Reactive safe-control scenario runner and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (preset name or JSON file) and write trajectory CSVs
    /// plus a summary JSON.
    Run(RunArgs),
    /// Sample a controller's planar input field on a grid (fully actuated
    /// models only) and write it as CSV.
    Field(FieldArgs),
    /// Run a benchmark suite and write its result tables.
    Bench(BenchArgs),
    /// Recompute the summary JSON from previously written trajectory CSVs.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or path to a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// Controller override: cbf | cbf5 | mod_normal | mod_reference | rmcbf
    /// | onm_mcbf, or an inline controller JSON object.
    #[arg(long)]
    controller: Option<String>,
    /// Output directory (default: $CBFMOD_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed recorded in the outputs (the engine itself is deterministic).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FieldArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    controller: Option<String>,
    #[arg(long, default_value_t = -5.0)]
    xmin: f64,
    #[arg(long, default_value_t = 9.0)]
    xmax: f64,
    #[arg(long, default_value_t = -7.0)]
    ymin: f64,
    #[arg(long, default_value_t = 7.0)]
    ymax: f64,
    /// Samples per axis.
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite: static_table | mcbf_suite.
    #[arg(long)]
    suite: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    scenario: String,
    /// Directory holding the trajectory CSVs of a previous run.
    #[arg(long)]
    traj_dir: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Field(args) => cmd_field(args),
        Command::Bench(args) => bench::cmd_bench(&args.suite, output_root(args.out)),
        Command::Metrics(args) => cmd_metrics(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    if let Some(core) = e.downcast_ref::<cbfmod::Error>() {
        matches!(
            core,
            cbfmod::Error::ConfigInvalid(_)
                | cbfmod::Error::UnsupportedModel
                | cbfmod::Error::DimensionMismatch { .. }
        )
    } else {
        e.to_string().contains("config")
    }
}

/// Resolves a scenario argument: preset name first, then JSON file path.
fn load_scenario(spec: &str) -> Result<Scenario> {
    if presets::PRESET_NAMES.contains(&spec) {
        return Ok(presets::preset(spec)?);
    }
    let path = PathBuf::from(spec);
    if !path.exists() {
        return Err(anyhow!(cbfmod::Error::ConfigInvalid(format!(
            "'{spec}' is neither a preset ({}) nor an existing file",
            presets::PRESET_NAMES.join(", ")
        ))));
    }
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading scenario file {}", path.display()))?;
    let cfg: ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| anyhow!(cbfmod::Error::ConfigInvalid(format!("scenario JSON: {e}"))))?;
    Ok(cfg.build()?)
}

fn parse_controller(spec: &str) -> Result<ControllerConfig> {
    let shorthand = match spec {
        "cbf" => Some(ControllerConfig::Cbf {
            alpha: AlphaFn::Linear { c: 1.0 },
            barrier_mode: BarrierMode::Positional,
        }),
        "cbf5" => Some(ControllerConfig::Cbf {
            alpha: AlphaFn::Linear { c: 5.0 },
            barrier_mode: BarrierMode::Positional,
        }),
        "mod_normal" => Some(ControllerConfig::ModNormal {
            constraint: None,
            lambda: cbfmod::LambdaPolicy::Standard,
        }),
        "mod_reference" => Some(ControllerConfig::ModReference {
            constraint: None,
            lambda: cbfmod::LambdaPolicy::Standard,
        }),
        "rmcbf" => Some(ControllerConfig::Rmcbf { alpha: AlphaFn::Linear { c: 1.0 } }),
        "onm_mcbf" => Some(presets::onm_controller(1.0)),
        _ => None,
    };
    if let Some(c) = shorthand {
        return Ok(c);
    }
    if spec.trim_start().starts_with('{') {
        return serde_json::from_str(spec)
            .map_err(|e| anyhow!(cbfmod::Error::ConfigInvalid(format!("controller JSON: {e}"))));
    }
    Err(anyhow!(cbfmod::Error::ConfigInvalid(format!("unknown controller '{spec}'"))))
}

fn apply_overrides(mut s: Scenario, controller: Option<&str>, seed: Option<u64>) -> Result<Scenario> {
    if let Some(c) = controller {
        s = s.with_controller(parse_controller(c)?);
    }
    if let Some(seed) = seed {
        s.seed = seed;
    }
    s.validate()?;
    Ok(s)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let scenario = apply_overrides(load_scenario(&args.scenario)?, args.controller.as_deref(), args.seed)?;
    let out_dir = output_root(args.out);
    let records = run_scenario(&scenario)?;

    let d = scenario.model.state_dim();
    let p = scenario.model.input_dim();
    let mut results = Vec::new();
    for rec in &records {
        let csv = io::trajectory_csv(rec, d, p);
        let path = out_dir.join(format!("{}_start{}.csv", scenario.name, rec.start_index));
        write_atomic(&path, &csv)?;

        let nominal = nominal_trajectory(&scenario, rec.start_index)?;
        let start = &scenario.starts[rec.start_index];
        let metrics = compute_metrics(
            rec,
            &nominal,
            Vector2::new(start[0], start[1]),
            scenario.target,
        )?;
        results.push(StartReport {
            start_index: rec.start_index,
            start: start.iter().copied().collect(),
            metrics,
        });
    }
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        controller: scenario.controller.label(),
        seed: scenario.seed,
        rate_hz: scenario.rate_hz,
        aggregate: aggregate(&results),
        results,
    };
    let path = out_dir.join(format!("{}_summary.json", scenario.name));
    write_atomic(&path, &serde_json::to_string_pretty(&summary)?)?;
    for r in &summary.results {
        println!(
            "{} start {}: {:?} (l/l_nom {:.4}, infeasible {})",
            scenario.name, r.start_index, r.metrics.outcome, r.metrics.l_ratio, r.metrics.infeasible_count
        );
    }
    println!(
        "{}: success {:.0}% -> {}",
        scenario.name,
        summary.aggregate.success_pct,
        out_dir.display()
    );
    Ok(())
}

fn cmd_field(args: FieldArgs) -> Result<()> {
    let scenario = apply_overrides(load_scenario(&args.scenario)?, args.controller.as_deref(), None)?;
    let grid = FieldGrid { xmin: args.xmin, xmax: args.xmax, ymin: args.ymin, ymax: args.ymax, n: args.n };
    let samples = sample_field(
        &scenario.model,
        &scenario.obstacles,
        &scenario.controller,
        scenario.nominal_gain,
        scenario.target,
        &grid,
        scenario.sensing_range,
    )?;
    let mut csv = String::from("x,y,u_x,u_y,speed_ratio,mask\n");
    for s in &samples {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.x,
            s.y,
            s.ux,
            s.uy,
            s.speed_ratio,
            u8::from(s.masked)
        ));
    }
    let path = args
        .out
        .unwrap_or_else(|| output_root(None).join(format!("{}_field.csv", scenario.name)));
    write_atomic(&path, &csv)?;
    println!("{} field: {} samples -> {}", scenario.name, samples.len(), path.display());
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let mut results = Vec::new();
    for (i, start) in scenario.starts.iter().enumerate() {
        let path = args.traj_dir.join(format!("{}_start{}.csv", scenario.name, i));
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let rec = io::parse_trajectory_csv(&text, &scenario, i)?;
        let nominal = nominal_trajectory(&scenario, i)?;
        let metrics =
            compute_metrics(&rec, &nominal, Vector2::new(start[0], start[1]), scenario.target)?;
        results.push(StartReport { start_index: i, start: start.iter().copied().collect(), metrics });
    }
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        controller: scenario.controller.label(),
        seed: scenario.seed,
        rate_hz: scenario.rate_hz,
        aggregate: aggregate(&results),
        results,
    };
    let path = args
        .out
        .unwrap_or_else(|| args.traj_dir.join(format!("{}_summary.json", scenario.name)));
    write_atomic(&path, &serde_json::to_string_pretty(&summary)?)?;
    println!("recomputed metrics -> {}", path.display());
    Ok(())
}
