//! Semi-Lagrangian transport of jets.
//!
//! Departure points are traced back along the nodal velocity field. The
//! level-set value is interpolated there, and gradients are recovered by
//! tracing `2^dim` sub-grid points `x + q eps` and differencing their values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point, ScalarField, VectorField};
use crate::interpolation::{build_node_interpolant_raw, JetField, JetSampler, NodeSampler};

/// Default sub-grid offset.
pub const DEFAULT_EPS: f64 = 1e-4;

/// Accuracy of the time discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeOrder {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
}

impl std::str::FromStr for TimeOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(TimeOrder::First),
            "2" => Ok(TimeOrder::Second),
            other => Err(Error::Usage(format!("time order must be 1 or 2, got '{other}'"))),
        }
    }
}

impl std::fmt::Display for TimeOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TimeOrder::First => "1",
            TimeOrder::Second => "2",
        })
    }
}

/// Anything that can report a velocity at an arbitrary point.
pub trait VelocitySampler: Sync {
    fn velocity(&self, p: Point) -> Point;
}

/// Adapter turning a closure into a [`VelocitySampler`].
pub struct FnVelocity<F>(pub F);

impl<F: Fn(Point) -> Point + Sync> VelocitySampler for FnVelocity<F> {
    fn velocity(&self, p: Point) -> Point {
        (self.0)(p)
    }
}

/// Cubic interpolation of a nodal velocity field.
///
/// Cells whose whole `4^dim` stencil carries zero velocity are flagged up
/// front and answered without building an interpolant.
pub struct NodalVelocity<'a> {
    field: &'a VectorField,
    live_cells: Vec<bool>,
}

impl<'a> NodalVelocity<'a> {
    pub fn new(field: &'a VectorField) -> Self {
        let grid = *field.grid();
        let mut live: Vec<bool> = (0..grid.len()).map(|i| !field.is_zero_at(i)).collect();
        // A cell anchored at c reads nodes c-1 ..= c+2 along each axis.
        let n = grid.n();
        for axis in 0..grid.dim() {
            let mut next = vec![false; live.len()];
            for (flat, out) in next.iter_mut().enumerate() {
                let idx = grid.multi_index(flat);
                *out = (-1isize..=2).any(|d| {
                    let mut o = [0isize; 3];
                    o[axis] = d;
                    live[grid.offset_index(idx, o)]
                });
            }
            live = next;
            let _ = n;
        }
        Self { field, live_cells: live }
    }

    pub fn field(&self) -> &VectorField {
        self.field
    }

    #[inline]
    pub fn at_node(&self, flat: usize) -> Point {
        self.field.at(flat)
    }
}

impl VelocitySampler for NodalVelocity<'_> {
    fn velocity(&self, p: Point) -> Point {
        let grid = self.field.grid();
        let loc = grid.locate(p);
        if !self.live_cells[grid.flat(loc.cell)] {
            return [0.0; 3];
        }
        let mut out = [0.0; 3];
        for (a, o) in out.iter_mut().enumerate().take(grid.dim()) {
            *o = build_node_interpolant_raw(grid, self.field.component(a), loc.cell).eval_local(loc.t);
        }
        out
    }
}

#[inline]
fn axpy(x: Point, s: f64, v: Point) -> Point {
    [x[0] + s * v[0], x[1] + s * v[1], x[2] + s * v[2]]
}

/// First-order departure point `x - dt u(x)`.
pub fn departure_first_order(grid: &GridSpec, x: Point, u: &dyn VelocitySampler, dt: f64) -> Point {
    grid.wrap_point(axpy(x, -dt, u.velocity(x)))
}

/// Second-order departure points at the two previous time levels.
///
/// The velocity at `t_{n+1}` is extrapolated from the two stored levels, a
/// trapezoidal predictor gives the departure at `t_n`, and the departure at
/// `t_{n-1}` continues the characteristic with the velocity found there.
pub fn departure_second_order(
    grid: &GridSpec,
    x: Point,
    u_n: &dyn VelocitySampler,
    u_nm1: &dyn VelocitySampler,
    dt: f64,
) -> (Point, Point) {
    let a = u_n.velocity(x);
    let b = u_nm1.velocity(x);
    let u_hat = [2.0 * a[0] - b[0], 2.0 * a[1] - b[1], 2.0 * a[2] - b[2]];
    departure_second_order_with(grid, x, u_hat, u_n, dt)
}

fn departure_second_order_with(
    grid: &GridSpec,
    x: Point,
    u_hat: Point,
    u_n: &dyn VelocitySampler,
    dt: f64,
) -> (Point, Point) {
    if u_hat == [0.0; 3] && u_n.velocity(x) == [0.0; 3] {
        return (x, x);
    }
    let x1 = grid.wrap_point(axpy(x, -dt, u_hat));
    let u1 = u_n.velocity(x1);
    let mid = [u_hat[0] + u1[0], u_hat[1] + u1[1], u_hat[2] + u1[2]];
    let xd_n = grid.wrap_point(axpy(x, -0.5 * dt, mid));
    let xd_nm1 = grid.wrap_point(axpy(x, -2.0 * dt, u_n.velocity(xd_n)));
    (xd_n, xd_nm1)
}

/// Read-only inputs shared by the transport phases of one step.
pub struct TransportInputs<'a> {
    pub jet_n: &'a JetField,
    /// Jet at `t_{n-1}`; required for second order.
    pub jet_nm1: Option<&'a JetField>,
    pub u_n: &'a VectorField,
    /// Velocity at `t_{n-1}`; required for second order.
    pub u_nm1: Option<&'a VectorField>,
    pub dt: f64,
    pub order: TimeOrder,
}

/// Transport inputs with velocity samplers prepared.
pub struct Transport<'a> {
    grid: GridSpec,
    jet_n: &'a JetField,
    jet_nm1: Option<&'a JetField>,
    u_n: NodalVelocity<'a>,
    u_nm1: Option<NodalVelocity<'a>>,
    dt: f64,
    order: TimeOrder,
}

impl<'a> Transport<'a> {
    pub fn new(inputs: TransportInputs<'a>) -> Result<Self> {
        let grid = *inputs.jet_n.grid();
        if !(inputs.dt.is_finite() && inputs.dt > 0.0) {
            return Err(Error::Usage(format!("time step must be positive, got {}", inputs.dt)));
        }
        if inputs.u_n.grid() != &grid {
            return Err(Error::Usage("velocity and jet grids differ".into()));
        }
        if inputs.order == TimeOrder::Second && (inputs.jet_nm1.is_none() || inputs.u_nm1.is_none()) {
            return Err(Error::Usage("second-order transport needs the previous jet and velocity".into()));
        }
        let u_nm1 = match inputs.order {
            TimeOrder::Second => inputs.u_nm1.map(NodalVelocity::new),
            TimeOrder::First => None,
        };
        Ok(Self {
            grid,
            jet_n: inputs.jet_n,
            jet_nm1: inputs.jet_nm1,
            u_n: NodalVelocity::new(inputs.u_n),
            u_nm1,
            dt: inputs.dt,
            order: inputs.order,
        })
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Departure points of an arbitrary point; the second entry is present for second order.
    pub fn departures(&self, x: Point) -> (Point, Option<Point>) {
        match &self.u_nm1 {
            None => (departure_first_order(&self.grid, x, &self.u_n, self.dt), None),
            Some(u_nm1) => {
                let (a, b) = departure_second_order(&self.grid, x, &self.u_n, u_nm1, self.dt);
                (a, Some(b))
            }
        }
    }

    /// Departure points of node `flat`, using nodal velocities directly.
    fn node_departures(&self, flat: usize) -> (Point, Option<Point>) {
        let x = self.grid.position(flat);
        let a = self.u_n.at_node(flat);
        match &self.u_nm1 {
            None => (self.grid.wrap_point(axpy(x, -self.dt, a)), None),
            Some(u_nm1) => {
                let b = u_nm1.at_node(flat);
                let u_hat = [2.0 * a[0] - b[0], 2.0 * a[1] - b[1], 2.0 * a[2] - b[2]];
                let (d, e) = departure_second_order_with(&self.grid, x, u_hat, &self.u_n, self.dt);
                (d, Some(e))
            }
        }
    }

    /// Jet values at the departure points of `x`.
    fn departure_values(&self, deps: (Point, Option<Point>)) -> (f64, Option<f64>) {
        let a = JetSampler::new(self.jet_n).value(deps.0);
        let b = match (deps.1, self.jet_nm1) {
            (Some(p), Some(j)) if self.order == TimeOrder::Second => Some(JetSampler::new(j).value(p)),
            _ => None,
        };
        (a, b)
    }

    /// Semi-Lagrangian update of the value at `x` with an added source value.
    fn updated_value(&self, x: Point, source: f64) -> f64 {
        let vals = self.departure_values(self.departures(x));
        combine(vals, source, self.dt)
    }

    /// Tentative departure values at every node.
    pub fn advect_values(&self) -> (ScalarField, Option<ScalarField>) {
        let phi_n = self.jet_n.phi.values();
        let phi_nm1 = self.jet_nm1.map(|j| j.phi.values());
        let second = self.order == TimeOrder::Second;
        let pairs: Vec<(f64, f64)> = (0..self.grid.len())
            .into_par_iter()
            .map(|flat| {
                let still = self.u_n.field().is_zero_at(flat)
                    && self.u_nm1.as_ref().map_or(true, |u| u.field().is_zero_at(flat));
                if still {
                    let b = if second { phi_nm1.map_or(0.0, |v| v[flat]) } else { 0.0 };
                    return (phi_n[flat], b);
                }
                let (a, b) = self.departure_values(self.node_departures(flat));
                (a, b.unwrap_or(0.0))
            })
            .collect();
        let a = pairs.iter().map(|p| p.0).collect();
        let a = ScalarField::from_values(self.grid, a).expect("sizes match");
        let b = second.then(|| {
            ScalarField::from_values(self.grid, pairs.iter().map(|p| p.1).collect()).expect("sizes match")
        });
        (a, b)
    }

    /// Gradient recovered at node `flat` from sub-grid characteristics.
    pub fn subgrid_gradient(&self, flat: usize, source: &NodeSampler<'_>, eps: f64) -> Point {
        let dim = self.grid.dim();
        let x = self.grid.position(flat);
        let mut g = [0.0; 3];
        for q in 0..(1usize << dim) {
            let mut xq = x;
            let mut sign = [0.0; 3];
            for a in 0..dim {
                sign[a] = if (q >> a) & 1 == 1 { 1.0 } else { -1.0 };
                xq[a] += sign[a] * eps;
            }
            let xq = self.grid.wrap_point(xq);
            let v = self.updated_value(xq, source.value(xq));
            for a in 0..dim {
                g[a] += sign[a] * v;
            }
        }
        let scale = 1.0 / ((1usize << dim) as f64 * eps);
        [g[0] * scale, g[1] * scale, g[2] * scale]
    }
}

#[inline]
fn combine(vals: (f64, Option<f64>), source: f64, dt: f64) -> f64 {
    match vals.1 {
        None => vals.0 + dt * source,
        Some(b) => (4.0 * vals.0 - b + 2.0 * dt * source) / 3.0,
    }
}

/// Tentative departure values `P_phi(x^d)` at every node.
pub fn advect_jet_values(inputs: TransportInputs<'_>) -> Result<(ScalarField, Option<ScalarField>)> {
    Ok(Transport::new(inputs)?.advect_values())
}

/// Gradient update through sub-grid characteristics with the smoothing source.
///
/// Nodes where `mask` is false keep the gradient from `fallback`.
pub fn update_subgrid_jet(
    transport: &Transport<'_>,
    source: &ScalarField,
    eps: f64,
    mask: Option<&[bool]>,
    fallback: &VectorField,
) -> Result<VectorField> {
    let grid = *transport.grid();
    if !(eps > 0.0 && eps < 0.5 * grid.h()) {
        return Err(Error::Usage(format!("sub-grid offset {eps} must lie in (0, h/2)")));
    }
    let s = NodeSampler::new(source);
    let dim = grid.dim();
    let grads: Vec<Point> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            if mask.map_or(true, |m| m[flat]) {
                transport.subgrid_gradient(flat, &s, eps)
            } else {
                fallback.at(flat)
            }
        })
        .collect();
    let mut out = VectorField::zeros(grid);
    for (flat, g) in grads.into_iter().enumerate() {
        let mut v = [0.0; 3];
        v[..dim].copy_from_slice(&g[..dim]);
        out.set(flat, v);
    }
    Ok(out)
}

/// Transport-only jet step: no smoothing and no source.
///
/// Written as a direct loop over nodes and sub-grid points without the fast
/// paths of [`Transport`]; it serves as a reference for the smoothed scheme.
pub fn plain_jet_step(
    jet_n: &JetField,
    jet_nm1: Option<&JetField>,
    u_n: &dyn VelocitySampler,
    u_nm1: Option<&dyn VelocitySampler>,
    dt: f64,
    eps: f64,
) -> JetField {
    let grid = *jet_n.grid();
    let dim = grid.dim();
    let trace = |x: Point| -> f64 {
        match (jet_nm1, u_nm1) {
            (Some(jm), Some(um)) => {
                let (a, b) = departure_second_order(&grid, x, u_n, um, dt);
                (4.0 * JetSampler::new(jet_n).value(a) - JetSampler::new(jm).value(b)) / 3.0
            }
            _ => JetSampler::new(jet_n).value(departure_first_order(&grid, x, u_n, dt)),
        }
    };
    let mut phi = ScalarField::zeros(grid);
    let mut psi = VectorField::zeros(grid);
    for flat in 0..grid.len() {
        let x = grid.position(flat);
        phi.set(flat, trace(x));
        if jet_n.psi.is_some() {
            let mut g = [0.0; 3];
            for q in 0..(1usize << dim) {
                let mut xq = x;
                let mut sign = [0.0; 3];
                for a in 0..dim {
                    sign[a] = if (q >> a) & 1 == 1 { 1.0 } else { -1.0 };
                    xq[a] += sign[a] * eps;
                }
                let v = trace(grid.wrap_point(xq));
                for a in 0..dim {
                    g[a] += sign[a] * v;
                }
            }
            let scale = 1.0 / ((1usize << dim) as f64 * eps);
            let g = [g[0] * scale, g[1] * scale, g[2] * scale];
            psi.set(flat, g);
        }
    }
    JetField { phi, psi: jet_n.psi.as_ref().map(|_| psi) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::norm;
    use crate::interpolation::JetOrder;
    use proptest::prelude::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::cube(2, -2.0, 2.0, n).unwrap()
    }

    fn rotation(p: Point) -> Point {
        [-p[1], p[0], 0.0]
    }

    fn rotate(p: Point, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        [c * p[0] - s * p[1], s * p[0] + c * p[1], 0.0]
    }

    #[test]
    fn first_order_departure_examples() {
        let g = grid(16);
        let zero = FnVelocity(|_| [0.0; 3]);
        let x = [0.3, -0.7, 0.0];
        assert_eq!(departure_first_order(&g, x, &zero, 0.1), x);
        let uni = FnVelocity(|_| [1.0, 0.0, 0.0]);
        let d = departure_first_order(&g, [0.0, 0.0, 0.0], &uni, 0.1);
        assert!((d[0] + 0.1).abs() < 1e-15 && d[1] == 0.0);
    }

    #[test]
    fn first_order_rotation_error_is_second_order_in_dt() {
        let g = grid(16);
        let u = FnVelocity(rotation);
        let x = [0.8, 0.3, 0.0];
        let err = |dt: f64| norm(g.periodic_delta(departure_first_order(&g, x, &u, dt), rotate(x, -dt)));
        let rate = (err(0.02) / err(0.01)).log2();
        assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
    }

    #[test]
    fn second_order_departure_examples() {
        let g = grid(16);
        let uni = FnVelocity(|_| [1.0, 0.0, 0.0]);
        let x = [0.25, 0.5, 0.0];
        let (a, b) = departure_second_order(&g, x, &uni, &uni, 0.05);
        assert!((a[0] - 0.2).abs() < 1e-14 && (b[0] - 0.15).abs() < 1e-14);
        assert!(a[1] == 0.5 && b[1] == 0.5);
        let zero = FnVelocity(|_| [0.0; 3]);
        assert_eq!(departure_second_order(&g, x, &zero, &zero, 0.05), (x, x));
    }

    #[test]
    fn second_order_rotation_local_error_is_third_order() {
        // Oracle: RK4 characteristic tracer with many substeps.
        let g = grid(16);
        let u = FnVelocity(rotation);
        let x = [0.8, 0.3, 0.0];
        let rk4 = |p: Point, t: f64| {
            let steps = 2000;
            let dt = -t / steps as f64;
            let mut y = p;
            for _ in 0..steps {
                let k1 = rotation(y);
                let k2 = rotation(axpy(y, 0.5 * dt, k1));
                let k3 = rotation(axpy(y, 0.5 * dt, k2));
                let k4 = rotation(axpy(y, dt, k3));
                for a in 0..2 {
                    y[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
                }
            }
            y
        };
        let err = |dt: f64| {
            let (a, _) = departure_second_order(&g, x, &u, &u, dt);
            norm(g.periodic_delta(a, rk4(x, dt)))
        };
        let rate = (err(0.04) / err(0.02)).log2();
        assert!((rate - 3.0).abs() < 0.15, "rate {rate}");
    }

    fn circle_jet(g: GridSpec, c: Point, r: f64) -> JetField {
        JetField::from_fn(
            g,
            JetOrder::P1,
            move |p| norm(g.periodic_delta(c, p)) - r,
            move |p| {
                let d = g.periodic_delta(c, p);
                let n = norm(d).max(1e-12);
                [d[0] / n, d[1] / n, 0.0]
            },
        )
    }

    #[test]
    fn zero_velocity_keeps_values_exactly() {
        let g = grid(16);
        let jet = circle_jet(g, [0.1, 0.0, 0.0], 1.0);
        let u = VectorField::zeros(g);
        for order in [TimeOrder::First, TimeOrder::Second] {
            let (a, b) = advect_jet_values(TransportInputs {
                jet_n: &jet,
                jet_nm1: Some(&jet),
                u_n: &u,
                u_nm1: Some(&u),
                dt: 0.1,
                order,
            })
            .unwrap();
            assert_eq!(a.values(), jet.phi.values());
            if let Some(b) = b {
                assert_eq!(b.values(), jet.phi.values());
            }
        }
    }

    #[test]
    fn translation_matches_shifted_distance() {
        let g = grid(64);
        let jet = circle_jet(g, [0.0; 3], 1.0);
        let dt = 0.03;
        let u = VectorField::from_fn(g, |_| [1.0, 0.0, 0.0]);
        let (a, _) = advect_jet_values(TransportInputs {
            jet_n: &jet,
            jet_nm1: None,
            u_n: &u,
            u_nm1: None,
            dt,
            order: TimeOrder::First,
        })
        .unwrap();
        let worst = (0..g.len())
            .filter(|&i| (norm(g.position(i)) - 1.0).abs() < 0.3)
            .map(|i| {
                let p = g.position(i);
                (a.get(i) - (norm([p[0] - dt, p[1], 0.0]) - 1.0)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst:e}");
    }

    #[test]
    fn linear_jet_gradient_recovered_exactly() {
        let g = grid(16);
        let jet = JetField::from_fn(g, JetOrder::P1, |p| p[0], |_| [1.0, 0.0, 0.0]);
        let u = VectorField::zeros(g);
        let t = Transport::new(TransportInputs {
            jet_n: &jet,
            jet_nm1: None,
            u_n: &u,
            u_nm1: None,
            dt: 0.01,
            order: TimeOrder::First,
        })
        .unwrap();
        let src = ScalarField::zeros(g);
        let psi = update_subgrid_jet(&t, &src, DEFAULT_EPS, None, jet.psi.as_ref().unwrap()).unwrap();
        // Away from the periodic seam the linear function is smooth.
        for flat in 0..g.len() {
            let idx = g.multi_index(flat);
            if idx[0] >= 2 && idx[0] + 3 < g.n()[0] {
                let v = psi.at(flat);
                assert!((v[0] - 1.0).abs() < 1e-9 && v[1].abs() < 1e-9, "{v:?}");
            }
        }
    }

    #[test]
    fn translated_quadratic_gradient() {
        let g = grid(32);
        let f = |p: Point| 0.5 * p[0] * p[0] + 0.25 * p[0] * p[1] - 0.1 * p[1] * p[1];
        let df = |p: Point| [p[0] + 0.25 * p[1], 0.25 * p[0] - 0.2 * p[1], 0.0];
        let jet = JetField::from_fn(g, JetOrder::P1, f, df);
        let u = VectorField::from_fn(g, |_| [0.3, -0.2, 0.0]);
        let dt = 0.05;
        let t = Transport::new(TransportInputs {
            jet_n: &jet,
            jet_nm1: None,
            u_n: &u,
            u_nm1: None,
            dt,
            order: TimeOrder::First,
        })
        .unwrap();
        let src = ScalarField::zeros(g);
        let s = NodeSampler::new(&src);
        for flat in [g.flat([16, 16, 0]), g.flat([12, 19, 0])] {
            let x = g.position(flat);
            let got = t.subgrid_gradient(flat, &s, DEFAULT_EPS);
            let want = df([x[0] - 0.3 * dt, x[1] + 0.2 * dt, 0.0]);
            assert!((got[0] - want[0]).abs() < 1e-6 && (got[1] - want[1]).abs() < 1e-6);
        }
    }

    fn rotate_circle_error(n: usize, order: TimeOrder) -> f64 {
        // Off-centre circle advected by rigid rotation for one revolution.
        let g = grid(n);
        let c0 = [0.5, 0.0, 0.0];
        let mut jet = circle_jet(g, c0, 0.5);
        let mut prev = jet.clone();
        let u = VectorField::from_fn(g, rotation);
        let dt = g.h();
        let steps = (2.0 * std::f64::consts::PI / dt).round() as usize;
        let dt = 2.0 * std::f64::consts::PI / steps as f64;
        for step in 0..steps {
            let use2 = order == TimeOrder::Second && step > 0;
            let t = Transport::new(TransportInputs {
                jet_n: &jet,
                jet_nm1: Some(&prev),
                u_n: &u,
                u_nm1: Some(&u),
                dt,
                order: if use2 { TimeOrder::Second } else { TimeOrder::First },
            })
            .unwrap();
            let (a, b) = t.advect_values();
            let phi = match b {
                Some(b) => a.axpby(4.0 / 3.0, &b, -1.0 / 3.0),
                None => a,
            };
            let zero = ScalarField::zeros(g);
            let psi = update_subgrid_jet(&t, &zero, DEFAULT_EPS, None, jet.psi.as_ref().unwrap()).unwrap();
            let next = JetField { phi, psi: Some(psi) };
            prev = std::mem::replace(&mut jet, next);
        }
        // Interface error: at nodes next to the circle compare phi to the exact distance.
        (0..g.len())
            .filter(|&i| (norm(g.periodic_delta(c0, g.position(i))) - 0.5).abs() < g.h())
            .map(|i| (jet.phi.get(i) - (norm(g.periodic_delta(c0, g.position(i))) - 0.5)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rigid_rotation_revolution() {
        let (e1, e2) = (rotate_circle_error(32, TimeOrder::Second), rotate_circle_error(64, TimeOrder::Second));
        // With dt = h the midpoint characteristic error (|x| dt^3 / 6 per step)
        // dominates the cubic interpolation error, so the revolution error
        // converges at second order.
        let rate = (e1 / e2).log2();
        assert!(rate > 1.8, "rate {rate} ({e1:e} -> {e2:e})");
        let (e3, e4) = (rotate_circle_error(32, TimeOrder::First), rotate_circle_error(64, TimeOrder::First));
        assert!(e2 < 0.1 * e4, "second {e2:e} vs first {e4:e}");
        assert!(e3 > e4);
    }

    fn shear_run(jet0: &JetField, u: &VectorField, steps: usize, order: TimeOrder) -> JetField {
        let g = *jet0.grid();
        let dt = 0.4 / steps as f64;
        let mut jet = jet0.clone();
        let mut prev = jet0.clone();
        let zero = ScalarField::zeros(g);
        for s in 0..steps {
            let o = if s == 0 { TimeOrder::First } else { order };
            let t = Transport::new(TransportInputs {
                jet_n: &jet,
                jet_nm1: Some(&prev),
                u_n: u,
                u_nm1: Some(u),
                dt,
                order: o,
            })
            .unwrap();
            let (a, b) = t.advect_values();
            let phi = match b {
                Some(b) => a.axpby(4.0 / 3.0, &b, -1.0 / 3.0),
                None => a,
            };
            let psi = jet
                .psi
                .as_ref()
                .map(|p| update_subgrid_jet(&t, &zero, DEFAULT_EPS, None, p).unwrap());
            prev = std::mem::replace(&mut jet, JetField { phi, psi });
        }
        jet
    }

    #[test]
    fn time_order_consistency_on_shear_flow() {
        // Smooth periodic level set carried by a steady shear flow, compared
        // with the exact solution along characteristics. The value-only jet
        // keeps the spatial error far below the temporal one.
        let g = grid(64);
        let pi = std::f64::consts::PI;
        let u = VectorField::from_fn(g, |p| [1.0 + 0.3 * (pi * p[1] / 2.0).sin(), 0.2, 0.0]);
        let f0 = |p: Point| (pi * p[0] / 2.0).sin() * (pi * p[1] / 2.0).cos();
        let exact = |p: Point, t: f64| {
            let y0 = p[1] - 0.2 * t;
            let x0 = p[0] - t + 0.3 / (0.1 * pi) * ((pi * p[1] / 2.0).cos() - (pi * y0 / 2.0).cos());
            f0([x0, y0, 0.0])
        };
        let jet0 = JetField::from_fn(g, JetOrder::Zero, f0, |_| [0.0; 3]);
        let err = |a: &JetField| {
            (0..g.len()).map(|i| (a.phi.get(i) - exact(g.position(i), 0.4)).abs()).fold(0.0, f64::max)
        };
        for (order, lo, hi) in [(TimeOrder::First, 0.85, 1.2), (TimeOrder::Second, 1.7, 2.4)] {
            let e1 = err(&shear_run(&jet0, &u, 4, order));
            let e2 = err(&shear_run(&jet0, &u, 8, order));
            let rate = (e1 / e2).log2();
            assert!(rate > lo && rate < hi, "{order:?}: rate {rate} ({e1:e} -> {e2:e})");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn departures_stay_within_speed_bound(
            x in -2.0f64..2.0, y in -2.0f64..2.0, ax in -1.0f64..1.0, ay in -1.0f64..1.0, dt in 0.001f64..0.2
        ) {
            let g = grid(16);
            let pi = std::f64::consts::PI;
            let u = VectorField::from_fn(g, |p| [ax * (pi * p[1] / 2.0).cos(), ay * (pi * p[0] / 2.0).sin(), 0.0]);
            // Supremum of the analytic field, which bounds the cubic interpolant up to overshoot.
            let umax = (ax * ax + ay * ay).sqrt();
            let nodal = NodalVelocity::new(&u);
            let p = [x, y, 0.0];
            let (a, b) = departure_second_order(&g, p, &nodal, &nodal, dt);
            prop_assert!(g.periodic_distance(p, a) <= umax * dt * 1.01 + 1e-12);
            prop_assert!(g.periodic_distance(p, b) <= 2.0 * umax * dt * 1.01 + 1e-12);
            let c = departure_first_order(&g, p, &nodal, dt);
            prop_assert!(g.periodic_distance(p, c) <= umax * dt * 1.01 + 1e-12);
        }
    }
}
