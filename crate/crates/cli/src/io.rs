//! Trajectory CSV and summary JSON serialization. Floats are written with
//! Rust's shortest round-trip formatting, so re-parsing recovers the exact
//! f64 values.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use cbfmod::metrics::MetricsReport;
use cbfmod::sim::{classify, Scenario, StepRecord, TrajectoryRecord};

/// Writes a file atomically (temp file + rename in the target directory).
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn trajectory_csv(traj: &TrajectoryRecord, state_dim: usize, input_dim: usize) -> String {
    let mut out = String::new();
    out.push('t');
    for i in 0..state_dim {
        out.push_str(&format!(",x{i}"));
    }
    for i in 0..input_dim {
        out.push_str(&format!(",u{i}"));
    }
    out.push_str(",h_min,infeasible,fallback,step_ms\n");
    for s in &traj.steps {
        out.push_str(&format!("{}", s.t));
        for v in s.x.iter() {
            out.push_str(&format!(",{v}"));
        }
        for v in s.u.iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(
            ",{},{},{},{}\n",
            s.h_min,
            u8::from(s.infeasible),
            u8::from(s.fallback),
            s.step_ms
        ));
    }
    out
}

/// Parses a trajectory CSV back into a record; the outcome is re-derived
/// from the recorded history and the scenario thresholds.
pub fn parse_trajectory_csv(
    text: &str,
    scenario: &Scenario,
    start_index: usize,
) -> Result<TrajectoryRecord> {
    let mut lines = text.lines();
    let header = lines.next().context("empty trajectory file")?;
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols.iter().filter(|c| c.starts_with('x')).count();
    let p = cols.iter().filter(|c| c.starts_with('u')).count();
    if d == 0 || p == 0 {
        bail!("malformed trajectory header: {header}");
    }
    let mut steps = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("bad number on data row {ln}"))?;
        if f.len() != 1 + d + p + 4 {
            bail!("row {ln} has {} fields, expected {}", f.len(), 1 + d + p + 4);
        }
        steps.push(StepRecord {
            t: f[0],
            x: DVector::from_column_slice(&f[1..1 + d]),
            u: DVector::from_column_slice(&f[1 + d..1 + d + p]),
            u_nom: DVector::zeros(p),
            h_min: f[1 + d + p],
            infeasible: f[1 + d + p + 1] != 0.0,
            fallback: f[1 + d + p + 2] != 0.0,
            step_ms: f[1 + d + p + 3],
        });
    }
    if steps.is_empty() {
        bail!("trajectory file has no data rows");
    }
    let times: Vec<f64> = steps.iter().map(|s| s.t).collect();
    let positions: Vec<Vector2<f64>> = steps.iter().map(|s| Vector2::new(s.x[0], s.x[1])).collect();
    let h_mins: Vec<f64> = steps.iter().map(|s| s.h_min).collect();
    let outcome = classify(
        &times,
        &positions,
        &h_mins,
        scenario.target,
        &scenario.thresholds,
        scenario.timeout,
        scenario.rate_hz,
    );
    Ok(TrajectoryRecord { start_index, steps, outcome })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StartReport {
    pub start_index: usize,
    pub start: Vec<f64>,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub success_pct: f64,
    pub collisions: usize,
    /// Mean l/l_nom over runs that reached the target (NaN when none did).
    pub mean_l_ratio_reached: f64,
    pub infeasible_total: usize,
    pub runtime_mean_ms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub rate_hz: f64,
    pub results: Vec<StartReport>,
    pub aggregate: Aggregate,
}

pub fn aggregate(results: &[StartReport]) -> Aggregate {
    let n = results.len().max(1);
    let reached: Vec<&StartReport> =
        results.iter().filter(|r| r.metrics.outcome == cbfmod::sim::Outcome::Reached).collect();
    let mean_ratio = if reached.is_empty() {
        f64::NAN
    } else {
        reached.iter().map(|r| r.metrics.l_ratio).sum::<f64>() / reached.len() as f64
    };
    Aggregate {
        success_pct: 100.0 * reached.len() as f64 / n as f64,
        collisions: results
            .iter()
            .filter(|r| r.metrics.outcome == cbfmod::sim::Outcome::Collided)
            .count(),
        mean_l_ratio_reached: mean_ratio,
        infeasible_total: results.iter().map(|r| r.metrics.infeasible_count).sum(),
        runtime_mean_ms: results.iter().map(|r| r.metrics.runtime_mean_ms).sum::<f64>() / n as f64,
    }
}

/// Output root: explicit flag, else $CBFMOD_OUT, else ./out.
pub fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("CBFMOD_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}
