//! Run reports and their on-disk form.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::smoothing::step::PhaseTimings;

use super::config::{ExperimentConfig, Method};
use super::convergence::ConvergenceReport;

/// Diagnostics after one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub max_speed: f64,
    pub volume: f64,
    pub area: f64,
    pub kappa_avg: f64,
    pub solver_iters: usize,
    pub components: usize,
    pub flagged: usize,
    /// Mean distance of the closest points from the circle centre.
    pub mean_radius: Option<f64>,
    /// Minimum cross-section of the Cassini neck.
    pub neck_width: Option<f64>,
}

/// Interface error of a circle run against the exact radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub t: f64,
    pub exact_radius: f64,
    pub mean_radius: f64,
    /// Largest `| |x_Γ - c| - r(t) |` over all closest points.
    pub linf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    SemiStable,
    Unstable,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Stable => "stable",
            Self::SemiStable => "semi-stable",
            Self::Unstable => "unstable",
        })
    }
}

/// One time step of a stability sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub dt: f64,
    pub dt_over_h2: f64,
    pub verdict: Verdict,
    pub steps_completed: usize,
    /// Max minus min speed over the tail window, if the run completed.
    pub speed_spread: Option<f64>,
    pub min_speed: Option<f64>,
    pub failure: Option<String>,
}

/// One configuration of a benchmark matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub method: Method,
    pub nodes: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub linf: f64,
    /// Advection, smoothing solve and sub-grid update; reinitialisation excluded.
    pub evolution_seconds: f64,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config: ExperimentConfig,
    pub h: f64,
    pub dt: f64,
    pub records: Vec<StepRecord>,
    pub final_error: Option<ErrorMetrics>,
    /// Summed over all steps.
    pub timings: PhaseTimings,
    pub verdict: Option<Verdict>,
    pub failure: Option<String>,
    /// `(V_end - V_0) / V_0`.
    pub volume_change: Option<f64>,
    pub sweep: Vec<SweepEntry>,
    pub dt_max: Option<f64>,
    pub bench: Vec<BenchEntry>,
    pub convergence: Option<ConvergenceReport>,
    pub snapshots: Vec<String>,
}

#[derive(Serialize)]
struct TimeseriesRow {
    step: usize,
    t: f64,
    max_speed: f64,
    volume: f64,
    area: f64,
    kappa_avg: f64,
    solver_iters: usize,
}

impl RunReport {
    /// Writes `report.json`, `timeseries.csv` and, for sweeps, benchmarks and
    /// convergence studies, `errors.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("report.json"))?), self)?;

        let mut w = csv::Writer::from_path(dir.join("timeseries.csv"))?;
        if self.records.is_empty() {
            w.write_record(["step", "t", "max_speed", "volume", "area", "kappa_avg", "solver_iters"])?;
        }
        for r in &self.records {
            w.serialize(TimeseriesRow {
                step: r.step,
                t: r.t,
                max_speed: r.max_speed,
                volume: r.volume,
                area: r.area,
                kappa_avg: r.kappa_avg,
                solver_iters: r.solver_iters,
            })?;
        }
        w.flush()?;

        if !self.sweep.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("errors.csv"))?;
            w.write_record(["dt", "dt_over_h2", "verdict", "steps_completed", "speed_spread", "min_speed"])?;
            for e in &self.sweep {
                w.write_record([
                    e.dt.to_string(),
                    e.dt_over_h2.to_string(),
                    e.verdict.to_string(),
                    e.steps_completed.to_string(),
                    e.speed_spread.map(|v| v.to_string()).unwrap_or_default(),
                    e.min_speed.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        } else if !self.bench.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("errors.csv"))?;
            w.write_record(["method", "nodes", "h", "dt", "steps", "linf", "evolution_seconds"])?;
            for e in &self.bench {
                w.write_record([
                    e.method.to_string(),
                    e.nodes.to_string(),
                    e.h.to_string(),
                    e.dt.to_string(),
                    e.steps.to_string(),
                    e.linf.to_string(),
                    e.evolution_seconds.to_string(),
                ])?;
            }
            w.flush()?;
        } else if let Some(c) = &self.convergence {
            let mut w = csv::Writer::from_path(dir.join("errors.csv"))?;
            w.write_record(["step_size", "error", "order_to_next"])?;
            for (i, (s, e)) in c.steps.iter().zip(&c.errors).enumerate() {
                let order = c.orders.get(i).map(|p| p.to_string()).unwrap_or_default();
                w.write_record([s.to_string(), e.to_string(), order])?;
            }
            w.flush()?;
        }
        Ok(())
    }
}
