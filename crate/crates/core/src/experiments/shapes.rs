//! Initial level sets.

use crate::error::Result;
use crate::geometry::{reinitialize, BandSpec};
use crate::grid::{norm, GridSpec, Point};
use crate::interpolation::{JetField, JetOrder};

use super::config::ShapeSpec;

/// Ellipses of the multibody set as `(center, semi-axes)`. Neighbouring
/// bodies are about 0.05 apart, under one grid spacing at `h = 0.0634`.
pub const ELLIPSE_SET: [(Point, [f64; 2]); 2] = [([-0.3, -0.6, 0.0], [0.9, 0.45]), ([0.74, 0.44, 0.0], [0.45, 0.9])];
/// The circle of the multibody set as `(center, radius)`.
pub const ELLIPSE_SET_CIRCLE: (Point, f64) = ([-0.9, 0.21, 0.0], 0.4);

const FD_STEP: f64 = 1e-6;

fn numeric_gradient(dim: usize, f: &impl Fn(Point) -> f64, p: Point) -> Point {
    let mut g = [0.0; 3];
    for a in 0..dim {
        let mut lo = p;
        let mut hi = p;
        lo[a] -= FD_STEP;
        hi[a] += FD_STEP;
        g[a] = (f(hi) - f(lo)) / (2.0 * FD_STEP);
    }
    g
}

/// `f / |∇f|`, a first-order distance estimate near the zero set of `f`.
fn normalized(dim: usize, f: impl Fn(Point) -> f64) -> impl Fn(Point) -> f64 {
    move |p| f(p) / norm(numeric_gradient(dim, &f, p)).max(1e-3)
}

/// Jet of `seed` with a finite-difference gradient.
fn sampled_jet(grid: GridSpec, order: JetOrder, seed: impl Fn(Point) -> f64) -> JetField {
    let dim = grid.dim();
    JetField::from_fn(grid, order, &seed, |p| numeric_gradient(dim, &seed, p))
}

fn circle_jet(grid: GridSpec, order: JetOrder, radius: f64, center: Point) -> JetField {
    JetField::from_fn(grid, order, move |p| norm(grid.periodic_delta(center, p)) - radius, move |p| {
        let d = grid.periodic_delta(center, p);
        let r = norm(d);
        if r < 1e-12 {
            [0.0; 3]
        } else {
            [d[0] / r, d[1] / r, d[2] / r]
        }
    })
}

/// Level set before reinitialisation. Only the circle is a true distance.
pub fn seed_shape(shape: &ShapeSpec, grid: GridSpec, order: JetOrder) -> JetField {
    let dim = grid.dim();
    match *shape {
        ShapeSpec::Circle { radius, center } => circle_jet(grid, order, radius, center),
        ShapeSpec::EllipseSet => {
            let seed = move |p: Point| {
                let mut best = {
                    let (c, r) = ELLIPSE_SET_CIRCLE;
                    norm(grid.periodic_delta(c, p)) - r
                };
                for (c, [a, b]) in ELLIPSE_SET {
                    let d = grid.periodic_delta(c, p);
                    let e = normalized(2, move |q: Point| ((q[0] / a).powi(2) + (q[1] / b).powi(2)).sqrt() - 1.0);
                    best = best.min(e(d));
                }
                best
            };
            sampled_jet(grid, order, seed)
        }
        ShapeSpec::Cassini { a, b } => {
            let f = move |p: Point| {
                let r2 = p[1] * p[1] + p[2] * p[2];
                ((p[0] - a).powi(2) + r2) * ((p[0] + a).powi(2) + r2) - b.powi(4)
            };
            sampled_jet(grid, order, normalized(dim, f))
        }
        ShapeSpec::Star { radius, amplitude } => {
            let f = move |p: Point| {
                let rho = norm(p);
                let theta = p[1].atan2(p[0]);
                let lobes = if dim == 2 {
                    amplitude * (5.0 * theta).cos()
                } else {
                    let planar = p[0] * p[0] + p[1] * p[1];
                    let w = if rho > 1e-12 { planar / (rho * rho) } else { 0.0 };
                    amplitude * (5.0 * theta).cos() * w
                };
                rho - radius * (1.0 + lobes)
            };
            sampled_jet(grid, order, normalized(dim, f))
        }
    }
}

/// Signed-distance jet of `shape`. Non-distance seeds are reinitialised.
pub fn init_shape(shape: &ShapeSpec, grid: GridSpec, order: JetOrder, band: BandSpec) -> Result<JetField> {
    let seed = seed_shape(shape, grid, order);
    match shape {
        ShapeSpec::Circle { .. } => Ok(seed),
        _ => Ok(reinitialize(&seed, band)?.jet),
    }
}
