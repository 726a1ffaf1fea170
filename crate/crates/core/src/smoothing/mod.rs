//! Implicit smoothing of the transported level set.
//!
//! The advected values are corrected by a damping term `β ∇²` treated
//! implicitly while the same term is subtracted explicitly at the old time
//! level. The difference of the two is kept as a source so that sub-grid
//! characteristics see exactly the correction the node values received.

pub mod solver;
pub mod step;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian_into, ScalarField};

pub use solver::{conjugate_residual, SolveReport};
pub use step::{semijet_step, SchemeConfig, StepDiagnostics, StepState};

/// Parameters of the damping operator and its linear solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub beta: f64,
    /// Order of the damping derivative; only the Laplacian (2) is supported.
    pub m: u32,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { beta: 0.5, m: 2, tolerance: 1e-8, max_iterations: 1000 }
    }
}

impl SmoothingConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self { beta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Usage(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.m != 2 {
            return Err(Error::Usage(format!("only m = 2 damping is supported, got {}", self.m)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Usage("solver tolerance must be positive".into()));
        }
        Ok(())
    }
}

fn check_same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::Usage("fields live on different grids".into()));
    }
    Ok(())
}

/// Solves `(I - c ∇²) x = rhs` starting from `guess`.
fn helmholtz_solve(
    rhs: &ScalarField,
    guess: &ScalarField,
    c: f64,
    cfg: &SmoothingConfig,
) -> Result<(ScalarField, SolveReport)> {
    let grid = *rhs.grid();
    let mut x = guess.clone();
    if c == 0.0 {
        x.values_mut().copy_from_slice(rhs.values());
        return Ok((x, SolveReport { iterations: 0, relative_residual: 0.0, history: vec![0.0] }));
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        laplacian_into(&grid, v, out);
        for (o, &vi) in out.iter_mut().zip(v) {
            *o = vi - c * *o;
        }
    };
    let report = conjugate_residual(apply, rhs.values(), x.values_mut(), cfg.tolerance, cfg.max_iterations)?;
    Ok((x, report))
}

/// `a - c ∇² b`, node-wise.
fn minus_scaled_laplacian(a: &ScalarField, b: &ScalarField, c: f64) -> ScalarField {
    let mut out = ScalarField::zeros(*a.grid());
    laplacian_into(b.grid(), b.values(), out.values_mut());
    for (o, &ai) in out.values_mut().iter_mut().zip(a.values()) {
        *o = ai - c * *o;
    }
    out
}

/// First-order smoothing: `(I - β dt ∇²) φ_{n+1} = φ^d - β dt ∇² φ_n`.
pub fn solve_smoothing_first(
    phi_d: &ScalarField,
    phi_n: &ScalarField,
    cfg: &SmoothingConfig,
    dt: f64,
) -> Result<(ScalarField, SolveReport)> {
    cfg.validate()?;
    check_same_grid(phi_d, phi_n)?;
    let c = cfg.beta * dt;
    let rhs = minus_scaled_laplacian(phi_d, phi_n, c);
    helmholtz_solve(&rhs, phi_d, c, cfg)
}

/// Second-order smoothing, written after multiplication by `2 dt / 3`:
/// `(I - 2/3 β dt ∇²) φ_{n+1} = (4 φ^d_n - φ^d_{n-1}) / 3 - 2/3 β dt ∇² φ̂`.
pub fn solve_smoothing_second(
    phi_d_n: &ScalarField,
    phi_d_nm1: &ScalarField,
    phi_hat: &ScalarField,
    cfg: &SmoothingConfig,
    dt: f64,
) -> Result<(ScalarField, SolveReport)> {
    cfg.validate()?;
    check_same_grid(phi_d_n, phi_d_nm1)?;
    check_same_grid(phi_d_n, phi_hat)?;
    let c = 2.0 * cfg.beta * dt / 3.0;
    let bdf = phi_d_n.axpby(4.0 / 3.0, phi_d_nm1, -1.0 / 3.0);
    let rhs = minus_scaled_laplacian(&bdf, phi_hat, c);
    helmholtz_solve(&rhs, &bdf, c, cfg)
}

/// Smoothing source `S = β ∇² φ_{n+1} - β ∇² φ̂`.
pub fn smoothing_source(phi_np1: &ScalarField, phi_hat: &ScalarField, cfg: &SmoothingConfig) -> Result<ScalarField> {
    check_same_grid(phi_np1, phi_hat)?;
    let diff = phi_np1.axpby(1.0, phi_hat, -1.0);
    let mut out = ScalarField::zeros(*phi_np1.grid());
    laplacian_into(diff.grid(), diff.values(), out.values_mut());
    for v in out.values_mut() {
        *v *= cfg.beta;
    }
    Ok(out)
}

/// Per-step amplification of a Fourier mode with wavenumber `k` for
/// `φ_t = α φ_xx` with the explicit part stabilised by implicit `β` damping.
pub fn amplification_factor(alpha: f64, beta: f64, dt: f64, h: f64, k: f64) -> f64 {
    let s2 = (0.5 * h * k).sin().powi(2);
    let r = dt / (h * h) * s2;
    1.0 - 4.0 * alpha * r / (1.0 + 4.0 * beta * r)
}

/// True when `(4α - 8β) dt/h² sin²(kh/2) ≤ 2`, the condition for `|ξ| ≤ 1`.
pub fn is_stable_mode(alpha: f64, beta: f64, dt: f64, h: f64, k: f64) -> bool {
    let s2 = (0.5 * h * k).sin().powi(2);
    (4.0 * alpha - 8.0 * beta) * dt / (h * h) * s2 <= 2.0
}
