//! One full time step of the smoothed jet scheme.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{interface_measures, reinitialize, BandSpec, Reinitialized};
use crate::grid::{ScalarField, VectorField};
use crate::interpolation::JetField;
use crate::transport::{update_subgrid_jet, TimeOrder, Transport, TransportInputs, DEFAULT_EPS};
use crate::velocity::{check_band_cfl, volume_correct, VelocityProvider};

use super::{smoothing_source, solve_smoothing_first, solve_smoothing_second, SmoothingConfig, SolveReport};

/// Scheme parameters shared by every step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub dt: f64,
    pub time_order: TimeOrder,
    pub smoothing: SmoothingConfig,
    /// Offset of the sub-grid points.
    pub eps: f64,
    pub band: BandSpec,
    /// Sub-grid gradients are recomputed where `|φ_{n+1}| < subgrid_band * h`;
    /// `None` recomputes them everywhere.
    pub subgrid_band: Option<f64>,
    /// Shift the level set after each step to keep the enclosed measure fixed.
    pub volume_correction: bool,
}

impl SchemeConfig {
    pub fn new(dt: f64, time_order: TimeOrder, beta: f64) -> Self {
        let band = BandSpec::default();
        Self {
            dt,
            time_order,
            smoothing: SmoothingConfig::with_beta(beta),
            eps: DEFAULT_EPS,
            band,
            subgrid_band: Some(band.width),
            volume_correction: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Usage(format!("time step must be positive, got {}", self.dt)));
        }
        self.smoothing.validate()
    }
}

/// Level set and history carried between steps.
#[derive(Debug, Clone)]
pub struct StepState {
    /// Reinitialised jet at `t_n` with its closest-point samples.
    pub current: Reinitialized,
    /// Reinitialised jet at `t_{n-1}`.
    pub previous: Option<JetField>,
    /// Velocity used by the previous step.
    pub u_prev: Option<VectorField>,
    pub step: usize,
    pub t: f64,
    /// Enclosed measure of the initial level set.
    pub initial_volume: f64,
}

impl StepState {
    /// Reinitialises `jet` and records its enclosed measure.
    pub fn new(jet: &JetField, band: BandSpec) -> Result<Self> {
        let current = reinitialize(jet, band)?;
        let zero = ScalarField::zeros(*jet.grid());
        let initial_volume = interface_measures(&current.jet, &zero).volume;
        Ok(Self { current, previous: None, u_prev: None, step: 0, t: 0.0, initial_volume })
    }

    pub fn jet(&self) -> &JetField {
        &self.current.jet
    }
}

/// Wall-clock seconds spent in each phase of a step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub velocity: f64,
    pub advection: f64,
    pub solve: f64,
    pub subgrid: f64,
    pub reinit: f64,
}

impl PhaseTimings {
    /// Total time without the velocity evaluation.
    pub fn scheme(&self) -> f64 {
        self.advection + self.solve + self.subgrid + self.reinit
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub order_used: TimeOrder,
    pub solver: SolveReport,
    pub max_speed: f64,
    pub kappa_avg: f64,
    pub volume_shift: f64,
    pub flagged_closest_points: usize,
    pub timings: PhaseTimings,
}

/// Output of [`smoothed_update`]: the un-reinitialised jet at `t_{n+1}`.
#[derive(Debug, Clone)]
pub struct SmoothedUpdate {
    pub jet: JetField,
    pub source: ScalarField,
    pub solver: SolveReport,
    pub order_used: TimeOrder,
    pub timings: PhaseTimings,
}

/// Advection, implicit smoothing and sub-grid gradient recovery for one step.
///
/// Second order falls back to first order when no history is available.
pub fn smoothed_update(
    jet_n: &JetField,
    jet_nm1: Option<&JetField>,
    u_n: &VectorField,
    u_nm1: Option<&VectorField>,
    cfg: &SchemeConfig,
) -> Result<SmoothedUpdate> {
    cfg.validate()?;
    let order = match (cfg.time_order, jet_nm1, u_nm1) {
        (TimeOrder::Second, Some(_), Some(_)) => TimeOrder::Second,
        _ => TimeOrder::First,
    };
    let mut timings = PhaseTimings::default();
    let clock = Instant::now();
    let transport = Transport::new(TransportInputs { jet_n, jet_nm1, u_n, u_nm1, dt: cfg.dt, order })?;
    let (phi_d, phi_d_nm1) = transport.advect_values();
    timings.advection = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (phi, phi_hat, solver) = match (order, phi_d_nm1, jet_nm1) {
        (TimeOrder::Second, Some(d_nm1), Some(j_nm1)) => {
            let hat = jet_n.phi.axpby(2.0, &j_nm1.phi, -1.0);
            let (phi, rep) = solve_smoothing_second(&phi_d, &d_nm1, &hat, &cfg.smoothing, cfg.dt)?;
            (phi, hat, rep)
        }
        _ => {
            let (phi, rep) = solve_smoothing_first(&phi_d, &jet_n.phi, &cfg.smoothing, cfg.dt)?;
            (phi, jet_n.phi.clone(), rep)
        }
    };
    let source = smoothing_source(&phi, &phi_hat, &cfg.smoothing)?;
    timings.solve = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let psi = match &jet_n.psi {
        None => None,
        Some(psi_n) => {
            let h = jet_n.grid().h();
            let mask: Option<Vec<bool>> =
                cfg.subgrid_band.map(|w| phi.values().iter().map(|p| p.abs() < w * h).collect());
            Some(update_subgrid_jet(&transport, &source, cfg.eps, mask.as_deref(), psi_n)?)
        }
    };
    timings.subgrid = clock.elapsed().as_secs_f64();
    let jet = JetField { phi, psi };
    if !jet.is_finite() {
        return Err(Error::Numerical("non-finite values after smoothing".into()));
    }
    Ok(SmoothedUpdate { jet, source, solver, order_used: order, timings })
}

/// Advances `state` by one step with the velocity from `velocity`.
pub fn semijet_step(
    state: &mut StepState,
    velocity: &dyn VelocityProvider,
    cfg: &SchemeConfig,
) -> Result<StepDiagnostics> {
    let grid = *state.current.jet.grid();
    let clock = Instant::now();
    let vel = velocity.velocity(&mut state.current, state.t)?;
    let velocity_time = clock.elapsed().as_secs_f64();
    if vel.band_supported {
        check_band_cfl(vel.max_speed, cfg.dt, grid.h(), cfg.band.width)?;
    }

    let update = smoothed_update(
        &state.current.jet,
        state.previous.as_ref(),
        &vel.field,
        state.u_prev.as_ref(),
        cfg,
    )?;
    let mut timings = update.timings;
    timings.velocity = velocity_time;

    let clock = Instant::now();
    let mut next = reinitialize(&update.jet, cfg.band)?;
    timings.reinit = clock.elapsed().as_secs_f64();

    let volume_shift = if cfg.volume_correction { volume_correct(&mut next, state.initial_volume)? } else { 0.0 };
    let flagged = next.samples.flagged();

    let old = std::mem::replace(&mut state.current, next);
    state.previous = Some(old.jet);
    state.u_prev = Some(vel.field);
    state.step += 1;
    state.t += cfg.dt;

    Ok(StepDiagnostics {
        step: state.step,
        t: state.t,
        order_used: update.order_used,
        solver: update.solver,
        max_speed: vel.max_speed,
        kappa_avg: vel.kappa_avg,
        volume_shift,
        flagged_closest_points: flagged,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{norm, GridSpec, Point};
    use crate::interpolation::JetOrder;
    use crate::transport::{plain_jet_step, NodalVelocity};
    use crate::velocity::{PrescribedVelocity, VelocityModel};

    fn circle(g: GridSpec, c: Point, r: f64, order: JetOrder) -> JetField {
        JetField::from_fn(g, order, move |p| norm(g.periodic_delta(c, p)) - r, move |p| {
            let d = g.periodic_delta(c, p);
            let n = norm(d).max(1e-12);
            [d[0] / n, d[1] / n, d[2] / n]
        })
    }

    fn swirl(g: GridSpec) -> VectorField {
        use std::f64::consts::FRAC_PI_2;
        VectorField::from_fn(g, |p| {
            [0.3 * (FRAC_PI_2 * p[1]).sin(), 0.2 * (FRAC_PI_2 * p[0]).cos(), 0.0]
        })
    }

    #[test]
    fn zero_beta_matches_plain_jet_step() {
        let g = GridSpec::cube(2, -2.0, 2.0, 24).unwrap();
        let jet_nm1 = circle(g, [0.02, 0.0, 0.0], 1.0, JetOrder::P1);
        let jet_n = circle(g, [0.0, 0.01, 0.0], 1.0, JetOrder::P1);
        let u_n = swirl(g);
        let u_nm1 = VectorField::from_fn(g, |p| {
            [0.28 * (std::f64::consts::FRAC_PI_2 * p[1]).sin(), 0.2, 0.0]
        });
        for order in [TimeOrder::First, TimeOrder::Second] {
            let mut cfg = SchemeConfig::new(0.05, order, 0.0);
            cfg.subgrid_band = None;
            let a = smoothed_update(&jet_n, Some(&jet_nm1), &u_n, Some(&u_nm1), &cfg).unwrap();
            let (un, unm1) = (NodalVelocity::new(&u_n), NodalVelocity::new(&u_nm1));
            let b = match order {
                TimeOrder::First => plain_jet_step(&jet_n, None, &un, None, cfg.dt, cfg.eps),
                TimeOrder::Second => plain_jet_step(&jet_n, Some(&jet_nm1), &un, Some(&unm1), cfg.dt, cfg.eps),
            };
            assert!(a.source.max_abs() == 0.0);
            for i in 0..g.len() {
                assert!((a.jet.phi.get(i) - b.phi.get(i)).abs() <= 1e-12, "{order} {i} {} {}", a.jet.phi.get(i), b.phi.get(i));
                let (pa, pb) = (a.jet.psi.as_ref().unwrap().at(i), b.psi.as_ref().unwrap().at(i));
                assert!((pa[0] - pb[0]).abs() <= 1e-12 && (pa[1] - pb[1]).abs() <= 1e-12, "{order}");
            }
        }
    }

    #[test]
    fn zero_velocity_keeps_interface() {
        let g = GridSpec::cube(2, -2.0, 2.0, 32).unwrap();
        let mut state = StepState::new(&circle(g, [0.0; 3], 1.0, JetOrder::P1), BandSpec::default()).unwrap();
        let before = state.jet().phi.clone();
        let cfg = SchemeConfig::new(4.0 * g.h() * g.h(), TimeOrder::Second, 0.5);
        for _ in 0..3 {
            semijet_step(&mut state, &VelocityModel::Zero, &cfg).unwrap();
        }
        for s in &state.current.samples.samples {
            // Repeated reinitialisation only re-fits the zero set of the interpolant.
            assert!((state.jet().phi.get(s.node) - before.get(s.node)).abs() < 1e-4 * g.h());
        }
    }

    #[test]
    fn gradient_stays_bounded_after_smooth_step() {
        let g = GridSpec::cube(2, -2.0, 2.0, 48).unwrap();
        let state = StepState::new(&circle(g, [0.0; 3], 1.0, JetOrder::P1), BandSpec::default()).unwrap();
        let u = swirl(g);
        let cfg = SchemeConfig::new(8.0 * g.h() * g.h(), TimeOrder::First, 0.5);
        let up = smoothed_update(state.jet(), None, &u, None, &cfg).unwrap();
        let psi = up.jet.psi.as_ref().unwrap();
        for s in &state.current.samples.samples {
            let n = norm(psi.at(s.node));
            assert!((0.5..=2.0).contains(&n), "{n}");
        }
    }

    #[test]
    fn collapsing_circle_loses_area_at_rate_two_pi() {
        let g = GridSpec::cube(2, -2.0, 2.0, 32).unwrap();
        let h = g.h();
        for jet_order in [JetOrder::Zero, JetOrder::P1] {
            let mut state = StepState::new(&circle(g, [0.0; 3], 1.0, jet_order), BandSpec::default()).unwrap();
            let cfg = SchemeConfig::new(0.5 * h * h, TimeOrder::Second, 0.5);
            let v0 = state.initial_volume;
            let steps = 16;
            for _ in 0..steps {
                semijet_step(&mut state, &VelocityModel::Mcf, &cfg).unwrap();
            }
            let v = interface_measures(state.jet(), &ScalarField::zeros(g)).volume;
            let rate = (v0 - v) / state.t;
            assert!((rate - 2.0 * std::f64::consts::PI).abs() < 0.1, "{jet_order}: {rate}");
        }
    }

    #[test]
    fn volume_correction_holds_measure() {
        let g = GridSpec::cube(2, -2.0, 2.0, 32).unwrap();
        let mut state = StepState::new(&circle(g, [0.0; 3], 1.0, JetOrder::P1), BandSpec::default()).unwrap();
        let mut cfg = SchemeConfig::new(0.5 * g.h() * g.h(), TimeOrder::First, 0.5);
        cfg.volume_correction = true;
        for _ in 0..5 {
            semijet_step(&mut state, &VelocityModel::Mcf, &cfg).unwrap();
        }
        let v = interface_measures(state.jet(), &ScalarField::zeros(g)).volume;
        assert!((v - state.initial_volume).abs() < 1e-3 * state.initial_volume, "{v} {}", state.initial_volume);
    }

    #[test]
    fn prescribed_translation_moves_circle() {
        let g = GridSpec::cube(2, -2.0, 2.0, 64).unwrap();
        let mut state = StepState::new(&circle(g, [0.0; 3], 0.8, JetOrder::P1), BandSpec::default()).unwrap();
        let cfg = SchemeConfig::new(0.05, TimeOrder::Second, 0.0);
        let v = PrescribedVelocity(|_p: Point, _t: f64| [1.0, 0.0, 0.0]);
        for _ in 0..10 {
            semijet_step(&mut state, &v, &cfg).unwrap();
        }
        let s = state.current.samples.samples.iter().find(|s| s.distance.abs() < 0.5 * g.h()).unwrap();
        let c = [0.5, 0.0, 0.0];
        assert!((g.periodic_distance(s.point, c) - 0.8).abs() < 1e-4, "{:?}", s);
    }
}
