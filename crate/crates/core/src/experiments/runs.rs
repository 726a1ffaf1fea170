//! Experiment drivers.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::baseline::{weno_step, WenoState};
use crate::error::{Error, Result};
use crate::geometry::{count_components, interface_measures, neck_width, Reinitialized};
use crate::grid::{norm, GridSpec, Point, ScalarField};
use crate::smoothing::step::PhaseTimings;
use crate::smoothing::{semijet_step, SchemeConfig, StepDiagnostics, StepState};
use crate::velocity::{VelocityModel, VelocityProvider};

use super::convergence::convergence_order;
use super::config::{DtSpec, ExperimentConfig, Method, ShapeSpec};
use super::report::{BenchEntry, ErrorMetrics, RunReport, StepRecord, SweepEntry, Verdict};
use super::shapes::init_shape;

/// Steps of a stability run.
pub const STABILITY_STEPS: usize = 1000;
/// Trailing window whose speed spread decides between stable and semi-stable.
pub const STABILITY_WINDOW: usize = 100;
/// Allowed spread relative to the smallest speed of the run.
pub const STABILITY_SPREAD: f64 = 0.1;
/// Half-length of the axis segment searched for the Cassini neck.
const NECK_SEARCH: f64 = 0.25;

enum Engine {
    Jet(StepState),
    Weno(WenoState),
}

/// A configured run that can be advanced step by step.
pub struct Simulation {
    pub cfg: ExperimentConfig,
    pub grid: GridSpec,
    pub scheme: SchemeConfig,
    engine: Engine,
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid_spec()?;
        let band = cfg.band()?;
        let jet = init_shape(&cfg.shape, grid, cfg.jet, band)?;
        let engine = match cfg.method {
            Method::Weno => Engine::Weno(WenoState::new(jet.phi, band)?),
            Method::Jet | Method::Semijet => Engine::Jet(StepState::new(&jet, band)?),
        };
        Ok(Self { cfg: cfg.clone(), grid, scheme: cfg.scheme(grid.h()), engine })
    }

    pub fn state(&self) -> &StepState {
        match &self.engine {
            Engine::Jet(s) => s,
            Engine::Weno(w) => &w.inner,
        }
    }

    pub fn current(&self) -> &Reinitialized {
        &self.state().current
    }

    pub fn t(&self) -> f64 {
        self.state().t
    }

    /// Advances one step with the configured velocity model.
    pub fn step(&mut self) -> Result<StepDiagnostics> {
        let v = self.cfg.velocity;
        self.step_with(&v)
    }

    pub fn step_with(&mut self, velocity: &dyn VelocityProvider) -> Result<StepDiagnostics> {
        match &mut self.engine {
            Engine::Jet(s) => semijet_step(s, velocity, &self.scheme),
            Engine::Weno(w) => weno_step(w, velocity, self.scheme.dt, self.cfg.time_order, self.cfg.weno_form, self.scheme.band),
        }
    }

    /// Measures of the current state, combined with the step's diagnostics.
    pub fn record(&self, d: &StepDiagnostics) -> StepRecord {
        let cur = self.current();
        let m = interface_measures(&cur.jet, &ScalarField::zeros(self.grid));
        let mean_radius = match self.cfg.shape {
            ShapeSpec::Circle { center, .. } => Some(circle_error(self.grid, cur, center, 0.0).1),
            _ => None,
        };
        let neck = match self.cfg.shape {
            ShapeSpec::Cassini { .. } => Some(neck_width(&cur.jet, -NECK_SEARCH, NECK_SEARCH)),
            _ => None,
        };
        StepRecord {
            step: d.step,
            t: d.t,
            max_speed: d.max_speed,
            volume: m.volume,
            area: m.area,
            kappa_avg: d.kappa_avg,
            solver_iters: d.solver.iterations,
            components: count_components(&cur.jet.phi),
            flagged: d.flagged_closest_points,
            mean_radius,
            neck_width: neck,
        }
    }

    fn snapshot(&self, dir: &Path, label: usize) -> Result<String> {
        let name = format!("interface_{label:03}.csv");
        let w = BufWriter::new(File::create(dir.join(&name))?);
        self.current().samples.write_csv(&self.grid, w)?;
        Ok(name)
    }
}

/// `(L∞ error, mean radius)` of the closest points about `center` against `radius`.
pub fn circle_error(grid: GridSpec, r: &Reinitialized, center: Point, radius: f64) -> (f64, f64) {
    let mut linf: f64 = 0.0;
    let mut sum = 0.0;
    for s in &r.samples.samples {
        let rho = norm(grid.periodic_delta(center, s.point));
        linf = linf.max((rho - radius).abs());
        sum += rho;
    }
    let n = r.samples.len().max(1) as f64;
    (linf, sum / n)
}

/// Exact radius of a circle or sphere under mean curvature flow.
pub fn exact_radius(r0: f64, t: f64) -> f64 {
    (r0 * r0 - 2.0 * t).max(0.0).sqrt()
}

struct Evolution {
    report: RunReport,
    error: Option<Error>,
}

/// Runs `cfg` to completion. A failing step ends the run and is returned
/// alongside the records gathered so far.
fn evolve(sim: &mut Simulation, out: Option<&Path>) -> Result<Evolution> {
    let h = sim.grid.h();
    let n = sim.cfg.step_count(h)?;
    let mut report = RunReport { name: sim.cfg.name.clone(), config: sim.cfg.clone(), h, dt: sim.scheme.dt, ..Default::default() };
    let every = sim.cfg.snapshot_every.filter(|&k| k > 0);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        report.snapshots.push(sim.snapshot(dir, 0)?);
    }
    let mut error = None;
    let mut totals = PhaseTimings::default();
    for _ in 0..n {
        match sim.step() {
            Ok(d) => {
                totals.velocity += d.timings.velocity;
                totals.advection += d.timings.advection;
                totals.solve += d.timings.solve;
                totals.subgrid += d.timings.subgrid;
                totals.reinit += d.timings.reinit;
                report.records.push(sim.record(&d));
                if let (Some(dir), Some(k)) = (out, every) {
                    if d.step % k == 0 && d.step != n {
                        report.snapshots.push(sim.snapshot(dir, d.step)?);
                    }
                }
            }
            Err(e) => {
                report.failure = Some(e.to_string());
                error = Some(e);
                break;
            }
        }
    }
    if let Some(dir) = out {
        if error.is_none() {
            report.snapshots.push(sim.snapshot(dir, n)?);
        }
    }
    report.timings = totals;
    let v0 = sim.state().initial_volume;
    if let Some(last) = report.records.last() {
        if v0 > 0.0 {
            report.volume_change = Some((last.volume - v0) / v0);
        }
    }
    Ok(Evolution { report, error })
}

fn finish(ev: Evolution, out: Option<&Path>) -> Result<RunReport> {
    if let Some(e) = ev.error {
        if let Some(dir) = out {
            ev.report.write_to(dir)?;
        }
        return Err(e);
    }
    if let Some(dir) = out {
        ev.report.write_to(dir)?;
    }
    Ok(ev.report)
}

/// Runs any configuration and reports its measures over time.
pub fn run_evolution(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunReport> {
    let mut sim = Simulation::new(cfg)?;
    let ev = evolve(&mut sim, out)?;
    finish(ev, out)
}

/// Circle under mean curvature flow, compared with `r(t) = sqrt(r0² - 2t)`.
pub fn run_collapse_circle(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunReport> {
    let ShapeSpec::Circle { radius, center } = cfg.shape else {
        return Err(Error::Usage("collapse-circle needs the circle shape".into()));
    };
    if cfg.velocity != VelocityModel::Mcf {
        return Err(Error::Usage("collapse-circle needs mean curvature flow".into()));
    }
    let mut sim = Simulation::new(cfg)?;
    let mut ev = evolve(&mut sim, out)?;
    if ev.error.is_none() {
        let t = sim.t();
        let exact = exact_radius(radius, t);
        let (linf, mean) = circle_error(sim.grid, sim.current(), center, exact);
        ev.report.final_error = Some(ErrorMetrics { t, exact_radius: exact, mean_radius: mean, linf });
    }
    finish(ev, out)
}

/// Multibody volume-conserving flow.
pub fn run_multibody(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunReport> {
    if cfg.shape != ShapeSpec::EllipseSet || cfg.velocity != VelocityModel::Vcmcf {
        return Err(Error::Usage("multibody needs the ellipse-set shape and vcmcf velocity".into()));
    }
    run_evolution(cfg, out)
}

/// Cassini oval pinch-off under mean curvature flow.
pub fn run_cassini(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunReport> {
    if !matches!(cfg.shape, ShapeSpec::Cassini { .. }) || cfg.grid.dim != 3 {
        return Err(Error::Usage("cassini needs the cassini shape on a 3D grid".into()));
    }
    run_evolution(cfg, out)
}

/// Verdict from a run's speed history (`None` if the run failed).
pub fn classify(speeds: Option<&[f64]>, steps: usize) -> (Verdict, Option<f64>, Option<f64>) {
    let Some(s) = speeds.filter(|s| s.len() >= steps) else {
        return (Verdict::Unstable, None, None);
    };
    let min_all = s.iter().copied().fold(f64::INFINITY, f64::min);
    let tail = &s[s.len().saturating_sub(STABILITY_WINDOW)..];
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = hi - lo;
    let v = if spread <= STABILITY_SPREAD * min_all { Verdict::Stable } else { Verdict::SemiStable };
    (v, Some(spread), Some(min_all))
}

/// Stability run at one time step: the configured shape under
/// volume-conserving flow with volume correction after every step.
pub fn stability_run(cfg: &ExperimentConfig, dt: f64) -> Result<SweepEntry> {
    let steps = cfg.steps.unwrap_or(STABILITY_STEPS);
    let run_cfg = ExperimentConfig {
        dt: DtSpec::Absolute(dt),
        steps: Some(steps),
        velocity: VelocityModel::Vcmcf,
        volume_correction: true,
        snapshot_every: None,
        ..cfg.clone()
    };
    let mut sim = Simulation::new(&run_cfg)?;
    let h = sim.grid.h();
    let ev = evolve(&mut sim, None)?;
    let speeds: Vec<f64> = ev.report.records.iter().map(|r| r.max_speed).collect();
    let completed = ev.error.is_none();
    let (verdict, spread, min_speed) = classify(completed.then_some(&speeds[..]), steps);
    Ok(SweepEntry {
        dt,
        dt_over_h2: dt / (h * h),
        verdict,
        steps_completed: speeds.len(),
        speed_spread: spread,
        min_speed,
        failure: ev.report.failure,
    })
}

/// Classifies every time step in `dts`.
///
/// Non-monotone classifications (a stable step above a failing one) are kept
/// in the report; `RunReport::failure` lists them.
pub fn run_stability_sweep(cfg: &ExperimentConfig, dts: &[f64], out: Option<&Path>) -> Result<RunReport> {
    if dts.is_empty() {
        return Err(Error::Usage("stability sweep needs at least one time step".into()));
    }
    let grid = cfg.grid_spec()?;
    let mut report = RunReport { name: cfg.name.clone(), config: cfg.clone(), h: grid.h(), ..Default::default() };
    for &dt in dts {
        report.sweep.push(stability_run(cfg, dt)?);
    }
    report.failure = monotonicity_violations(&report.sweep);
    report.dt_max = report.sweep.iter().filter(|e| e.verdict == Verdict::Stable).map(|e| e.dt).fold(None, |a, d| Some(a.map_or(d, |x: f64| x.max(d))));
    if let Some(dir) = out {
        report.write_to(dir)?;
    }
    Ok(report)
}

fn monotonicity_violations(entries: &[SweepEntry]) -> Option<String> {
    let mut msgs = Vec::new();
    for a in entries {
        for b in entries {
            if a.dt < b.dt && b.verdict == Verdict::Stable && a.verdict == Verdict::Unstable {
                msgs.push(format!("dt {:.4e} unstable below stable dt {:.4e}", a.dt, b.dt));
            }
        }
    }
    (!msgs.is_empty()).then(|| msgs.join("; "))
}

/// Largest stable time step, bisected between a stable `lo` and a
/// non-stable `hi` until `hi / lo - 1 <= rel_width`. Midpoints are geometric
/// so wide brackets cost only a few extra runs.
///
/// Every probe is appended to the report's sweep entries.
pub fn find_dt_max(cfg: &ExperimentConfig, lo: f64, hi: f64, rel_width: f64, out: Option<&Path>) -> Result<RunReport> {
    if !(lo > 0.0 && hi > lo && rel_width > 0.0) {
        return Err(Error::Usage(format!("bad bisection bracket [{lo}, {hi}]")));
    }
    let grid = cfg.grid_spec()?;
    let mut report = RunReport { name: cfg.name.clone(), config: cfg.clone(), h: grid.h(), ..Default::default() };
    let (mut lo, mut hi) = (lo, hi);
    let first = stability_run(cfg, lo)?;
    let lo_ok = first.verdict == Verdict::Stable;
    report.sweep.push(first);
    if !lo_ok {
        report.failure = Some(format!("lower bracket dt {lo:.4e} is not stable"));
        return finish_sweep(report, out);
    }
    let last = stability_run(cfg, hi)?;
    let hi_bad = last.verdict != Verdict::Stable;
    report.sweep.push(last);
    if !hi_bad {
        report.failure = Some(format!("upper bracket dt {hi:.4e} is stable"));
        report.dt_max = Some(hi);
        return finish_sweep(report, out);
    }
    while hi / lo - 1.0 > rel_width {
        let mid = (lo * hi).sqrt();
        let e = stability_run(cfg, mid)?;
        if e.verdict == Verdict::Stable {
            lo = mid;
        } else {
            hi = mid;
        }
        report.sweep.push(e);
    }
    report.dt_max = Some(lo);
    finish_sweep(report, out)
}

fn finish_sweep(mut report: RunReport, out: Option<&Path>) -> Result<RunReport> {
    report.sweep.sort_by(|a, b| a.dt.total_cmp(&b.dt));
    if report.failure.is_none() {
        report.failure = monotonicity_violations(&report.sweep);
    }
    if let Some(dir) = out {
        report.write_to(dir)?;
    }
    Ok(report)
}

/// Circle collapse for each configuration, with the evolution time
/// (advection, solve, sub-grid update) separated from reinitialisation.
pub fn run_benchmark(cfgs: &[ExperimentConfig], out: Option<&Path>) -> Result<RunReport> {
    let first = cfgs.first().ok_or_else(|| Error::Usage("benchmark needs at least one configuration".into()))?;
    let mut report = RunReport { name: "bench".into(), config: first.clone(), ..Default::default() };
    for cfg in cfgs {
        let r = run_collapse_circle(cfg, None)?;
        let t = r.timings;
        report.bench.push(BenchEntry {
            method: cfg.method,
            nodes: cfg.grid_spec()?.n()[0],
            h: r.h,
            dt: r.dt,
            steps: r.records.len(),
            linf: r.final_error.map(|e| e.linf).unwrap_or(f64::INFINITY),
            evolution_seconds: t.advection + t.solve + t.subgrid,
            timings: t,
        });
    }
    report.h = report.bench[0].h;
    report.dt = report.bench[0].dt;
    if let Some(dir) = out {
        report.write_to(dir)?;
    }
    Ok(report)
}

/// Circle collapse at each time step in `dts` with the convergence orders
/// of the final `L∞` errors. Runs that fail numerically are listed in
/// `RunReport::failure` and left out of the orders.
pub fn run_convergence(cfg: &ExperimentConfig, dts: &[f64], out: Option<&Path>) -> Result<RunReport> {
    if dts.len() < 2 {
        return Err(Error::Usage("convergence study needs at least two time steps".into()));
    }
    let grid = cfg.grid_spec()?;
    let mut report = RunReport { name: cfg.name.clone(), config: cfg.clone(), h: grid.h(), ..Default::default() };
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    let mut failed = Vec::new();
    for &dt in dts {
        let run_cfg = ExperimentConfig { dt: DtSpec::Absolute(dt), snapshot_every: None, ..cfg.clone() };
        match run_collapse_circle(&run_cfg, None) {
            Ok(r) => {
                let e = r.final_error.map(|e| e.linf).unwrap_or(f64::INFINITY);
                if e > 0.0 && e.is_finite() {
                    steps.push(r.dt);
                    errors.push(e);
                }
            }
            Err(e) if e.is_numerical() => failed.push(format!("dt {dt:.4e}: {e}")),
            Err(e) => return Err(e),
        }
    }
    if !failed.is_empty() {
        report.failure = Some(failed.join("; "));
    }
    report.convergence = Some(convergence_order(&errors, &steps)?);
    if let Some(dir) = out {
        report.write_to(dir)?;
    }
    Ok(report)
}
