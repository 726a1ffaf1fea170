//! Fifth-order upwind WENO baseline for Hamilton-Jacobi advection.

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{reinitialize, BandSpec};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::interpolation::JetField;
use crate::smoothing::step::{PhaseTimings, StepDiagnostics, StepState};
use crate::smoothing::SolveReport;
use crate::transport::TimeOrder;
use crate::velocity::{check_band_cfl, VelocityProvider};

pub const WENO_EPS: f64 = 1e-6;
const OPTIMAL: [f64; 3] = [0.1, 0.6, 0.3];

/// Nonlinear weights for the five one-sided differences `v`.
pub fn weno_weights(v: [f64; 5]) -> [f64; 3] {
    let s1 = 13.0 / 12.0 * (v[0] - 2.0 * v[1] + v[2]).powi(2) + 0.25 * (v[0] - 4.0 * v[1] + 3.0 * v[2]).powi(2);
    let s2 = 13.0 / 12.0 * (v[1] - 2.0 * v[2] + v[3]).powi(2) + 0.25 * (v[1] - v[3]).powi(2);
    let s3 = 13.0 / 12.0 * (v[2] - 2.0 * v[3] + v[4]).powi(2) + 0.25 * (3.0 * v[2] - 4.0 * v[3] + v[4]).powi(2);
    let a = [
        OPTIMAL[0] / (WENO_EPS + s1).powi(2),
        OPTIMAL[1] / (WENO_EPS + s2).powi(2),
        OPTIMAL[2] / (WENO_EPS + s3).powi(2),
    ];
    let sum = a[0] + a[1] + a[2];
    [a[0] / sum, a[1] / sum, a[2] / sum]
}

/// WENO5 combination of the three third-order candidate derivatives.
pub fn weno5(v: [f64; 5]) -> f64 {
    let w = weno_weights(v);
    let p1 = v[0] / 3.0 - 7.0 / 6.0 * v[1] + 11.0 / 6.0 * v[2];
    let p2 = -v[1] / 6.0 + 5.0 / 6.0 * v[2] + v[3] / 3.0;
    let p3 = v[2] / 3.0 + 5.0 / 6.0 * v[3] - v[4] / 6.0;
    w[0] * p1 + w[1] * p2 + w[2] * p3
}

/// One-sided derivative along `axis` at node `flat`: left-biased when
/// `left` is true (information arriving from below), right-biased otherwise.
fn one_sided(grid: &GridSpec, phi: &[f64], flat: usize, axis: usize, left: bool) -> f64 {
    let idx = grid.multi_index(flat);
    let at = |k: isize| {
        let mut o = [0isize; 3];
        o[axis] = k;
        phi[grid.offset_index(idx, o)]
    };
    let h = grid.h();
    let mut v = [0.0; 5];
    if left {
        for (m, k) in (-2..=2).enumerate() {
            v[m] = (at(k) - at(k - 1)) / h;
        }
    } else {
        for (m, k) in (-2..=2).rev().enumerate() {
            v[m] = (at(k + 1) - at(k)) / h;
        }
    }
    weno5(v)
}

/// Upwind WENO5 gradient: on each axis the stencil is biased against the
/// corresponding velocity component.
pub fn weno5_upwind_gradient(phi: &ScalarField, u: &VectorField) -> VectorField {
    let grid = *phi.grid();
    let dim = grid.dim();
    let vals = phi.values();
    let g: Vec<[f64; 3]> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let ui = u.at(i);
            let mut d = [0.0; 3];
            for a in 0..dim {
                d[a] = one_sided(&grid, vals, i, a, ui[a] >= 0.0);
            }
            d
        })
        .collect();
    let mut out = VectorField::zeros(grid);
    for (i, d) in g.into_iter().enumerate() {
        out.set(i, d);
    }
    out
}

/// `u · ∇φ` with the upwind WENO5 gradient.
pub fn advection_rate(phi: &ScalarField, u: &VectorField) -> ScalarField {
    let grid = *phi.grid();
    let dim = grid.dim();
    let vals = phi.values();
    let r: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let ui = u.at(i);
            (0..dim)
                .filter(|&a| ui[a] != 0.0)
                .map(|a| ui[a] * one_sided(&grid, vals, i, a, ui[a] >= 0.0))
                .sum()
        })
        .collect();
    ScalarField::from_values(grid, r).expect("sizes match")
}

/// Time discretisation of the WENO baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WenoTimeForm {
    /// `(3φ_{n+1} - 4φ_n + φ_{n-1}) / 2dt + 2 u_n·∇φ_n - u_{n-1}·∇φ_{n-1} = 0`.
    #[default]
    Bdf2,
    /// The `3, -2, 1` numerator. Not consistent: it does not preserve a
    /// steady field even with zero velocity. Kept for comparison only.
    Printed,
}

impl FromStr for WenoTimeForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bdf2" => Ok(Self::Bdf2),
            "printed" => Ok(Self::Printed),
            _ => Err(Error::Usage(format!("unknown WENO time form `{s}`"))),
        }
    }
}

/// `φ_{n+1}` from the current and previous advection rates `u·∇φ`.
///
/// Without history this is a forward Euler step.
pub fn weno_update(
    phi_n: &ScalarField,
    rate_n: &ScalarField,
    history: Option<(&ScalarField, &ScalarField)>,
    dt: f64,
    form: WenoTimeForm,
) -> ScalarField {
    let mut out = phi_n.clone();
    match history {
        None => {
            for (o, r) in out.values_mut().iter_mut().zip(rate_n.values()) {
                *o -= dt * r;
            }
        }
        Some((phi_nm1, rate_nm1)) => {
            let c_n = match form {
                WenoTimeForm::Bdf2 => 4.0,
                WenoTimeForm::Printed => 2.0,
            };
            let (pn, pm, rn, rm) = (phi_n.values(), phi_nm1.values(), rate_n.values(), rate_nm1.values());
            for (i, o) in out.values_mut().iter_mut().enumerate() {
                *o = (c_n * pn[i] - pm[i]) / 3.0 - 2.0 * dt / 3.0 * (2.0 * rn[i] - rm[i]);
            }
        }
    }
    out
}

/// Level set history of a WENO run. Reinitialisation and curvature reuse
/// the value-only jet path.
#[derive(Debug, Clone)]
pub struct WenoState {
    pub inner: StepState,
    prev_rate: Option<ScalarField>,
}

impl WenoState {
    pub fn new(phi: ScalarField, band: BandSpec) -> Result<Self> {
        Ok(Self { inner: StepState::new(&JetField::zero_jet(phi), band)?, prev_rate: None })
    }
}

/// Advances a WENO run by one step.
pub fn weno_step(
    state: &mut WenoState,
    velocity: &dyn VelocityProvider,
    dt: f64,
    order: TimeOrder,
    form: WenoTimeForm,
    band: BandSpec,
) -> Result<StepDiagnostics> {
    let grid = *state.inner.current.jet.grid();
    let clock = Instant::now();
    let vel = velocity.velocity(&mut state.inner.current, state.inner.t)?;
    let mut timings = PhaseTimings { velocity: clock.elapsed().as_secs_f64(), ..Default::default() };
    if vel.band_supported {
        check_band_cfl(vel.max_speed, dt, grid.h(), band.width)?;
    }

    let clock = Instant::now();
    let phi_n = &state.inner.current.jet.phi;
    let rate = advection_rate(phi_n, &vel.field);
    let history = match (order, &state.inner.previous, &state.prev_rate) {
        (TimeOrder::Second, Some(prev), Some(r)) => Some((&prev.phi, r)),
        _ => None,
    };
    let order_used = if history.is_some() { TimeOrder::Second } else { TimeOrder::First };
    let phi = weno_update(phi_n, &rate, history, dt, form);
    timings.advection = clock.elapsed().as_secs_f64();
    if !phi.is_finite() {
        return Err(Error::Numerical("non-finite values in WENO step".into()));
    }

    let clock = Instant::now();
    let next = reinitialize(&JetField::zero_jet(phi), band)?;
    timings.reinit = clock.elapsed().as_secs_f64();
    let flagged = next.samples.flagged();

    let old = std::mem::replace(&mut state.inner.current, next);
    state.inner.previous = Some(old.jet);
    state.inner.u_prev = Some(vel.field);
    state.prev_rate = Some(rate);
    state.inner.step += 1;
    state.inner.t += dt;
    Ok(StepDiagnostics {
        step: state.inner.step,
        t: state.inner.t,
        order_used,
        solver: SolveReport::default(),
        max_speed: vel.max_speed,
        kappa_avg: vel.kappa_avg,
        volume_shift: 0.0,
        flagged_closest_points: flagged,
        timings,
    })
}
