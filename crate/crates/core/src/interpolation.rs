//! Cubic cell interpolants for jets and nodal fields.
//!
//! A [`CellInterpolant`] is a tensor product of one-dimensional cubics over a
//! single grid cell. P1 jets use Hermite bases fed with corner values,
//! gradients and cell-based cross-derivatives; 0-jets and nodal fields
//! (velocity, smoothing source) use Lagrange cubics through the `4^dim`
//! surrounding nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point, ScalarField, VectorField};

/// Which derivatives a jet carries alongside the level-set values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JetOrder {
    /// Values only.
    #[serde(rename = "0")]
    Zero,
    /// Values and gradient.
    #[serde(rename = "p1")]
    P1,
}

impl std::str::FromStr for JetOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "0" | "zero" | "0-jet" => Ok(JetOrder::Zero),
            "p1" | "p1-jet" => Ok(JetOrder::P1),
            other => Err(Error::Usage(format!("unknown jet order '{other}' (expected 0 or p1)"))),
        }
    }
}

impl std::fmt::Display for JetOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            JetOrder::Zero => "0",
            JetOrder::P1 => "p1",
        })
    }
}

/// Level-set values plus, for P1 jets, the tracked gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetField {
    pub phi: ScalarField,
    pub psi: Option<VectorField>,
}

impl JetField {
    pub fn zero_jet(phi: ScalarField) -> Self {
        Self { phi, psi: None }
    }

    pub fn p1_jet(phi: ScalarField, psi: VectorField) -> Result<Self> {
        if phi.grid() != psi.grid() {
            return Err(Error::Usage("phi and psi live on different grids".into()));
        }
        Ok(Self { phi, psi: Some(psi) })
    }

    /// Samples a jet of the requested order from a function and its gradient.
    pub fn from_fn(
        grid: GridSpec,
        order: JetOrder,
        f: impl Fn(Point) -> f64,
        grad: impl Fn(Point) -> Point,
    ) -> Self {
        let phi = ScalarField::from_fn(grid, f);
        let psi = match order {
            JetOrder::Zero => None,
            JetOrder::P1 => Some(VectorField::from_fn(grid, grad)),
        };
        Self { phi, psi }
    }

    #[inline]
    pub fn order(&self) -> JetOrder {
        if self.psi.is_some() {
            JetOrder::P1
        } else {
            JetOrder::Zero
        }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        self.phi.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.psi.as_ref().map_or(true, |p| p.is_finite())
    }
}

/// One-dimensional basis family used along every axis of an interpolant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Coefficients `[f(0), f(1), h f'(0), h f'(1)]`.
    Hermite,
    /// Coefficients are values at local nodes `-1, 0, 1, 2`.
    Lagrange,
}

impl Basis {
    #[inline]
    fn weights(self, t: f64) -> [f64; 4] {
        match self {
            Basis::Hermite => {
                let t2 = t * t;
                let t3 = t2 * t;
                [2.0 * t3 - 3.0 * t2 + 1.0, -2.0 * t3 + 3.0 * t2, t3 - 2.0 * t2 + t, t3 - t2]
            }
            Basis::Lagrange => {
                let (a, b, c, d) = (t + 1.0, t, t - 1.0, t - 2.0);
                [-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0]
            }
        }
    }

    /// Derivatives of the basis with respect to the local coordinate.
    #[inline]
    fn dweights(self, t: f64) -> [f64; 4] {
        match self {
            Basis::Hermite => {
                let t2 = t * t;
                [6.0 * t2 - 6.0 * t, -6.0 * t2 + 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0, 3.0 * t2 - 2.0 * t]
            }
            Basis::Lagrange => {
                let t2 = t * t;
                [
                    -(3.0 * t2 - 6.0 * t + 2.0) / 6.0,
                    (3.0 * t2 - 4.0 * t - 1.0) / 2.0,
                    -(3.0 * t2 - 2.0 * t - 2.0) / 2.0,
                    (3.0 * t2 - 1.0) / 6.0,
                ]
            }
        }
    }
}

/// Tensor-product cubic over one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellInterpolant {
    basis: Basis,
    dim: usize,
    cell: [usize; 3],
    corner: Point,
    period: Point,
    h: f64,
    coeffs: [f64; 64],
}

impl CellInterpolant {
    fn new(grid: &GridSpec, cell: [usize; 3], basis: Basis) -> Self {
        Self {
            basis,
            dim: grid.dim(),
            cell,
            corner: grid.position_of(cell),
            period: grid.extent(),
            h: grid.h(),
            coeffs: [0.0; 64],
        }
    }

    #[inline]
    pub fn cell(&self) -> [usize; 3] {
        self.cell
    }

    #[inline]
    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Local coordinates of `p`, taking the periodic image nearest the cell.
    #[inline]
    pub fn local(&self, p: Point) -> [f64; 3] {
        let mut t = [0.0; 3];
        for a in 0..self.dim {
            let mut d = p[a] - self.corner[a];
            let len = self.period[a];
            if d < -0.5 * len || d >= 0.5 * len {
                d -= len * (d / len).round();
            }
            t[a] = d / self.h;
        }
        t
    }

    /// Polynomial value at local coordinates `t`.
    pub fn eval_local(&self, t: [f64; 3]) -> f64 {
        let wx = self.basis.weights(t[0]);
        let wy = self.basis.weights(t[1]);
        if self.dim == 2 {
            let mut acc = 0.0;
            for a in 0..4 {
                let row = &self.coeffs[a * 4..a * 4 + 4];
                acc += wx[a] * (row[0] * wy[0] + row[1] * wy[1] + row[2] * wy[2] + row[3] * wy[3]);
            }
            acc
        } else {
            let wz = self.basis.weights(t[2]);
            let mut acc = 0.0;
            for a in 0..4 {
                let mut sa = 0.0;
                for b in 0..4 {
                    let row = &self.coeffs[(a * 4 + b) * 4..(a * 4 + b) * 4 + 4];
                    sa += wy[b] * (row[0] * wz[0] + row[1] * wz[1] + row[2] * wz[2] + row[3] * wz[3]);
                }
                acc += wx[a] * sa;
            }
            acc
        }
    }

    /// Value and physical gradient at local coordinates `t`.
    pub fn eval_local_with_gradient(&self, t: [f64; 3]) -> (f64, Point) {
        let b = self.basis;
        let (wx, dx) = (b.weights(t[0]), b.dweights(t[0]));
        let (wy, dy) = (b.weights(t[1]), b.dweights(t[1]));
        let inv_h = 1.0 / self.h;
        if self.dim == 2 {
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for a in 0..4 {
                let row = &self.coeffs[a * 4..a * 4 + 4];
                let sy = row[0] * wy[0] + row[1] * wy[1] + row[2] * wy[2] + row[3] * wy[3];
                let sdy = row[0] * dy[0] + row[1] * dy[1] + row[2] * dy[2] + row[3] * dy[3];
                v += wx[a] * sy;
                gx += dx[a] * sy;
                gy += wx[a] * sdy;
            }
            (v, [gx * inv_h, gy * inv_h, 0.0])
        } else {
            let (wz, dz) = (b.weights(t[2]), b.dweights(t[2]));
            let (mut v, mut gx, mut gy, mut gz) = (0.0, 0.0, 0.0, 0.0);
            for a in 0..4 {
                let (mut s, mut sdy, mut sdz) = (0.0, 0.0, 0.0);
                for bb in 0..4 {
                    let row = &self.coeffs[(a * 4 + bb) * 4..(a * 4 + bb) * 4 + 4];
                    let rz = row[0] * wz[0] + row[1] * wz[1] + row[2] * wz[2] + row[3] * wz[3];
                    let rdz = row[0] * dz[0] + row[1] * dz[1] + row[2] * dz[2] + row[3] * dz[3];
                    s += wy[bb] * rz;
                    sdy += dy[bb] * rz;
                    sdz += wy[bb] * rdz;
                }
                v += wx[a] * s;
                gx += dx[a] * s;
                gy += wx[a] * sdy;
                gz += wx[a] * sdz;
            }
            (v, [gx * inv_h, gy * inv_h, gz * inv_h])
        }
    }

    #[inline]
    pub fn eval(&self, p: Point) -> f64 {
        self.eval_local(self.local(p))
    }

    #[inline]
    pub fn eval_gradient(&self, p: Point) -> Point {
        self.eval_local_with_gradient(self.local(p)).1
    }

    #[inline]
    pub fn eval_with_gradient(&self, p: Point) -> (f64, Point) {
        self.eval_local_with_gradient(self.local(p))
    }

    #[inline]
    fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        let i = if self.dim == 2 { a * 4 + b } else { (a * 4 + b) * 4 + c };
        self.coeffs[i] = v;
    }
}

/// Corner data for a Hermite cell: `d[corner][mask]` holds `h^|mask| ∂^mask φ`,
/// where bit `a` of `mask` requests a derivative along axis `a` and bit `a`
/// of `corner` selects the upper node along axis `a`.
pub(crate) fn hermite_from_corner_data(
    grid: &GridSpec,
    cell: [usize; 3],
    d: &[[f64; 8]; 8],
) -> CellInterpolant {
    let mut ip = CellInterpolant::new(grid, cell, Basis::Hermite);
    let dim = grid.dim();
    let corners = 1usize << dim;
    for corner in 0..corners {
        for mask in 0..corners {
            let ty = |ax: usize| ((corner >> ax) & 1) + 2 * ((mask >> ax) & 1);
            let c = if dim == 3 { ty(2) } else { 0 };
            ip.set(ty(0), ty(1), c, d[corner][mask]);
        }
    }
    ip
}

fn corner_flat(grid: &GridSpec, cell: [usize; 3], corner: usize) -> usize {
    let mut o = [0isize; 3];
    for (a, oa) in o.iter_mut().enumerate().take(grid.dim()) {
        *oa = ((corner >> a) & 1) as isize;
    }
    grid.offset_index(cell, o)
}

/// P1 Hermite interpolant from corner values and gradients.
///
/// Cross-derivatives are formed at edge centres from differences of the
/// corner gradients and averaged back to each corner over the two (2D) edges
/// that meet there. The triple derivative in 3D averages the edge
/// differences of the three face cross-derivatives.
fn build_p1(grid: &GridSpec, phi: &[f64], psi: &VectorField, cell: [usize; 3]) -> CellInterpolant {
    let dim = grid.dim();
    let h = grid.h();
    let corners = 1usize << dim;
    let mut d = [[0.0; 8]; 8];
    // g[axis][corner]: gradient component times h
    let mut g = [[0.0; 8]; 3];
    for corner in 0..corners {
        let f = corner_flat(grid, cell, corner);
        d[corner][0] = phi[f];
        for a in 0..dim {
            g[a][corner] = h * psi.component(a)[f];
            d[corner][1 << a] = g[a][corner];
        }
    }
    let flip = |corner: usize, ax: usize, bit: usize| (corner & !(1 << ax)) | (bit << ax);
    // mixed(a, b) at a corner: average of the a-difference of g_b and the b-difference of g_a
    let mut mixed = [[0.0; 8]; 3]; // indexed by pair: (0,1)->0, (0,2)->1, (1,2)->2
    let pairs: &[(usize, usize)] = if dim == 2 { &[(0, 1)] } else { &[(0, 1), (0, 2), (1, 2)] };
    for (pi, &(a, b)) in pairs.iter().enumerate() {
        for corner in 0..corners {
            let da = g[b][flip(corner, a, 1)] - g[b][flip(corner, a, 0)];
            let db = g[a][flip(corner, b, 1)] - g[a][flip(corner, b, 0)];
            mixed[pi][corner] = 0.5 * (da + db);
            d[corner][(1 << a) | (1 << b)] = mixed[pi][corner];
        }
    }
    if dim == 3 {
        for corner in 0..corners {
            let dz = mixed[0][flip(corner, 2, 1)] - mixed[0][flip(corner, 2, 0)];
            let dy = mixed[1][flip(corner, 1, 1)] - mixed[1][flip(corner, 1, 0)];
            let dx = mixed[2][flip(corner, 0, 1)] - mixed[2][flip(corner, 0, 0)];
            d[corner][7] = (dx + dy + dz) / 3.0;
        }
    }
    hermite_from_corner_data(grid, cell, &d)
}

/// Lagrange tensor cubic through the `4^dim` nodes around `cell`.
fn build_lagrange(grid: &GridSpec, values: &[f64], cell: [usize; 3]) -> CellInterpolant {
    let mut ip = CellInterpolant::new(grid, cell, Basis::Lagrange);
    let [nx, ny, nz] = grid.n();
    let wrap = |i: usize, d: usize, n: usize| (i + n + d - 1) % n;
    if grid.dim() == 2 {
        for a in 0..4 {
            let i = wrap(cell[0], a, nx);
            for b in 0..4 {
                let j = wrap(cell[1], b, ny);
                ip.coeffs[a * 4 + b] = values[i * ny + j];
            }
        }
    } else {
        for a in 0..4 {
            let i = wrap(cell[0], a, nx);
            for b in 0..4 {
                let j = wrap(cell[1], b, ny);
                let row = (i * ny + j) * nz;
                for c in 0..4 {
                    let k = wrap(cell[2], c, nz);
                    ip.coeffs[(a * 4 + b) * 4 + c] = values[row + k];
                }
            }
        }
    }
    ip
}

/// Cubic interpolant of the jet over `cell`.
pub fn build_jet_interpolant(jet: &JetField, cell: [usize; 3]) -> CellInterpolant {
    match &jet.psi {
        Some(psi) => build_p1(jet.grid(), jet.phi.values(), psi, cell),
        None => build_lagrange(jet.grid(), jet.phi.values(), cell),
    }
}

/// Cubic interpolant of nodal values over `cell`.
pub fn build_node_interpolant(f: &ScalarField, cell: [usize; 3]) -> CellInterpolant {
    build_lagrange(f.grid(), f.values(), cell)
}

/// Same as [`build_node_interpolant`] on a raw value slice.
pub fn build_node_interpolant_raw(grid: &GridSpec, values: &[f64], cell: [usize; 3]) -> CellInterpolant {
    build_lagrange(grid, values, cell)
}

/// Point-wise evaluation of a jet through its cell interpolants.
#[derive(Clone, Copy)]
pub struct JetSampler<'a> {
    jet: &'a JetField,
}

impl<'a> JetSampler<'a> {
    pub fn new(jet: &'a JetField) -> Self {
        Self { jet }
    }

    /// Interpolant of the cell containing `p`.
    #[inline]
    pub fn interpolant_at(&self, p: Point) -> CellInterpolant {
        let loc = self.jet.grid().locate(p);
        build_jet_interpolant(self.jet, loc.cell)
    }

    #[inline]
    pub fn value(&self, p: Point) -> f64 {
        self.interpolant_at(p).eval(p)
    }

    #[inline]
    pub fn value_gradient(&self, p: Point) -> (f64, Point) {
        self.interpolant_at(p).eval_with_gradient(p)
    }
}

/// Point-wise cubic evaluation of nodal scalar values.
#[derive(Clone, Copy)]
pub struct NodeSampler<'a> {
    grid: &'a GridSpec,
    values: &'a [f64],
}

impl<'a> NodeSampler<'a> {
    pub fn new(f: &'a ScalarField) -> Self {
        Self { grid: f.grid(), values: f.values() }
    }

    pub fn from_raw(grid: &'a GridSpec, values: &'a [f64]) -> Self {
        Self { grid, values }
    }

    #[inline]
    pub fn value(&self, p: Point) -> f64 {
        let loc = self.grid.locate(p);
        build_lagrange(self.grid, self.values, loc.cell).eval_local(loc.t)
    }
}

/// Component-wise cubic evaluation of a nodal vector field.
#[derive(Clone, Copy)]
pub struct VectorSampler<'a> {
    field: &'a VectorField,
}

impl<'a> VectorSampler<'a> {
    pub fn new(field: &'a VectorField) -> Self {
        Self { field }
    }

    pub fn value(&self, p: Point) -> Point {
        let grid = self.field.grid();
        let loc = grid.locate(p);
        let mut out = [0.0; 3];
        for (a, o) in out.iter_mut().enumerate().take(grid.dim()) {
            *o = build_lagrange(grid, self.field.component(a), loc.cell).eval_local(loc.t);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::norm;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(dim: usize, n: usize) -> GridSpec {
        GridSpec::cube(dim, -2.0, 2.0, n).unwrap()
    }

    fn mid_cell(g: &GridSpec) -> [usize; 3] {
        let n = g.n();
        [n[0] / 2, n[1] / 2, if g.dim() == 3 { n[2] / 2 } else { 0 }]
    }

    fn dense_points(ip: &CellInterpolant, dim: usize) -> Vec<[f64; 3]> {
        let mut v = Vec::new();
        let ts = [0.0, 0.13, 0.37, 0.5, 0.81, 1.0];
        for &a in &ts {
            for &b in &ts {
                if dim == 2 {
                    v.push([a, b, 0.0]);
                } else {
                    for &c in &ts {
                        v.push([a, b, c]);
                    }
                }
            }
        }
        let _ = ip;
        v
    }

    #[test]
    fn linear_function_reproduced_by_both_jets() {
        for dim in [2, 3] {
            let g = grid(dim, 16);
            for order in [JetOrder::Zero, JetOrder::P1] {
                let jet = JetField::from_fn(g, order, |p| p[0], |_| [1.0, 0.0, 0.0]);
                let ip = build_jet_interpolant(&jet, mid_cell(&g));
                for t in dense_points(&ip, dim) {
                    let x = g.position_of(mid_cell(&g))[0] + t[0] * g.h();
                    assert!((ip.eval_local(t) - x).abs() < 1e-12, "{order:?} dim {dim}");
                }
            }
        }
    }

    #[test]
    fn zero_jet_reproduces_tensor_cubic() {
        let g = grid(2, 16);
        let f = |p: Point| p[0].powi(3) * p[1].powi(3);
        let jet = JetField::from_fn(g, JetOrder::Zero, f, |_| [0.0; 3]);
        let cell = mid_cell(&g);
        let ip = build_jet_interpolant(&jet, cell);
        let c = g.position_of(cell);
        for t in dense_points(&ip, 2) {
            let p = [c[0] + t[0] * g.h(), c[1] + t[1] * g.h(), 0.0];
            assert!((ip.eval(p) - f(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn p1_exact_for_bicubic_with_constant_cross_derivative() {
        // Cross derivative is constant, so the cell-based approximation is exact.
        let g = grid(2, 16);
        let f = |p: Point| p[0].powi(3) - 2.0 * p[0] * p[0] + p[1].powi(3) + 0.7 * p[0] * p[1];
        let df = |p: Point| [3.0 * p[0] * p[0] - 4.0 * p[0] + 0.7 * p[1], 3.0 * p[1] * p[1] + 0.7 * p[0], 0.0];
        let jet = JetField::from_fn(g, JetOrder::P1, f, df);
        let cell = mid_cell(&g);
        let ip = build_jet_interpolant(&jet, cell);
        let c = g.position_of(cell);
        for t in dense_points(&ip, 2) {
            let p = [c[0] + t[0] * g.h(), c[1] + t[1] * g.h(), 0.0];
            assert!((ip.eval(p) - f(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn p1_error_comes_only_from_cross_derivative() {
        // x^3 y^3: Hermite data with exact cross-derivatives reproduces it;
        // the jet interpolant differs by the cross-derivative basis terms only.
        let g = grid(2, 16);
        let h = g.h();
        let f = |p: Point| p[0].powi(3) * p[1].powi(3);
        let fx = |p: Point| 3.0 * p[0].powi(2) * p[1].powi(3);
        let fy = |p: Point| 3.0 * p[0].powi(3) * p[1].powi(2);
        let fxy = |p: Point| 9.0 * p[0].powi(2) * p[1].powi(2);
        let jet = JetField::from_fn(g, JetOrder::P1, f, |p| [fx(p), fy(p), 0.0]);
        let cell = [10, 11, 0];
        let c = g.position_of(cell);
        let mut exact = [[0.0; 8]; 8];
        for (corner, row) in exact.iter_mut().enumerate().take(4) {
            let p = [c[0] + (corner & 1) as f64 * h, c[1] + (corner >> 1) as f64 * h, 0.0];
            *row = [f(p), h * fx(p), h * fy(p), h * h * fxy(p), 0.0, 0.0, 0.0, 0.0];
        }
        let oracle = hermite_from_corner_data(&g, cell, &exact);
        let ip = build_jet_interpolant(&jet, cell);
        let mut approx = exact;
        for (corner, row) in approx.iter_mut().enumerate().take(4) {
            row[3] = ip.coeffs[(corner & 1 | 2) * 4 + ((corner >> 1) | 2)];
        }
        let rebuilt = hermite_from_corner_data(&g, cell, &approx);
        for t in dense_points(&ip, 2) {
            let p = [c[0] + t[0] * h, c[1] + t[1] * h, 0.0];
            assert!((oracle.eval(p) - f(p)).abs() < 1e-10);
            assert!((rebuilt.eval(p) - ip.eval(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn trilinear_cross_terms_exact_in_3d() {
        let g = grid(3, 16);
        let f = |p: Point| p[0] * p[1] * p[2] + 0.5 * p[0] * p[1] - p[2].powi(3);
        let df = |p: Point| [p[1] * p[2] + 0.5 * p[1], p[0] * p[2] + 0.5 * p[0], p[0] * p[1] - 3.0 * p[2] * p[2]];
        let jet = JetField::from_fn(g, JetOrder::P1, f, df);
        let cell = [5, 9, 12];
        let ip = build_jet_interpolant(&jet, cell);
        let c = g.position_of(cell);
        for t in dense_points(&ip, 3) {
            let p = [c[0] + t[0] * g.h(), c[1] + t[1] * g.h(), c[2] + t[2] * g.h()];
            assert!((ip.eval(p) - f(p)).abs() < 1e-12);
        }
    }

    fn circle_contour_error(n: usize, order: JetOrder) -> f64 {
        let g = grid(2, n);
        let jet = JetField::from_fn(g, order, |p| norm(p) - 1.0, |p| {
            let r = norm(p);
            [p[0] / r, p[1] / r, 0.0]
        });
        let s = JetSampler::new(&jet);
        let mut worst: f64 = 0.0;
        for k in 0..400 {
            let th = 2.0 * PI * (k as f64 + 0.3) / 400.0;
            let dir = [th.cos(), th.sin(), 0.0];
            // Newton along the ray for the interpolant's zero.
            let mut r = 1.0;
            for _ in 0..30 {
                let p = [r * dir[0], r * dir[1], 0.0];
                let (v, gr) = s.value_gradient(p);
                let dv = gr[0] * dir[0] + gr[1] * dir[1];
                r -= v / dv;
            }
            worst = worst.max((r - 1.0).abs());
        }
        worst
    }

    #[test]
    fn circle_zero_contour_converges() {
        // The value-only cubic converges at fourth order. The P1 cross-derivative
        // is only first-order accurate at corners, which caps the zero set at
        // third order.
        let (z1, z2) = (circle_contour_error(32, JetOrder::Zero), circle_contour_error(64, JetOrder::Zero));
        let (p1, p2) = (circle_contour_error(32, JetOrder::P1), circle_contour_error(64, JetOrder::P1));
        let (rz, rp) = ((z1 / z2).log2(), (p1 / p2).log2());
        assert!(rz > 3.5, "0-jet rate {rz} ({z1:e} -> {z2:e})");
        assert!(rp > 2.5, "p1 rate {rp} ({p1:e} -> {p2:e})");
    }

    #[test]
    fn node_interpolant_reproduces_quadratics_and_constants() {
        for dim in [2, 3] {
            let g = grid(dim, 12);
            let cell = mid_cell(&g);
            let c = g.position_of(cell);
            let q = ScalarField::from_fn(g, |p| p[0] * p[0] - 0.5 * p[1] * p[2] + 3.0);
            let k = ScalarField::constant(g, -1.25);
            let iq = build_node_interpolant(&q, cell);
            let ik = build_node_interpolant(&k, cell);
            for t in dense_points(&iq, dim) {
                let mut p = [0.0; 3];
                for a in 0..dim {
                    p[a] = c[a] + t[a] * g.h();
                }
                let exact = p[0] * p[0] - 0.5 * p[1] * p[2] + 3.0;
                assert!((iq.eval(p) - exact).abs() < 1e-12);
                assert!((ik.eval(p) + 1.25).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn node_interpolant_fourth_order_on_sine() {
        let err = |n: usize| {
            let g = grid(2, n);
            let f = |p: Point| (PI * p[0] / 2.0).sin() * (PI * p[1]).cos();
            let field = ScalarField::from_fn(g, f);
            let s = NodeSampler::new(&field);
            let mut worst: f64 = 0.0;
            for i in 0..50 {
                for j in 0..50 {
                    let p = [-2.0 + 4.0 * (i as f64 + 0.37) / 50.0, -2.0 + 4.0 * (j as f64 + 0.71) / 50.0, 0.0];
                    worst = worst.max((s.value(p) - f(p)).abs());
                }
            }
            worst
        };
        let rate = (err(32) / err(64)).log2();
        assert!(rate > 3.7 && rate < 4.3, "rate {rate}");
    }

    #[test]
    fn corner_values_and_gradients_exact() {
        let g = grid(3, 10);
        let f = |p: Point| (p[0] + 0.3).sin() * (1.3 * p[1]).cos() + p[2] * p[2];
        let df = |p: Point| {
            [
                (p[0] + 0.3).cos() * (1.3 * p[1]).cos(),
                -1.3 * (p[0] + 0.3).sin() * (1.3 * p[1]).sin(),
                2.0 * p[2],
            ]
        };
        let jet = JetField::from_fn(g, JetOrder::P1, f, df);
        let cell = [3, 7, 9];
        let ip = build_jet_interpolant(&jet, cell);
        for corner in 0..8 {
            let t = [(corner & 1) as f64, ((corner >> 1) & 1) as f64, (corner >> 2) as f64];
            let node = corner_flat(&g, cell, corner);
            let (v, gr) = ip.eval_local_with_gradient(t);
            assert!((v - jet.phi.get(node)).abs() < 1e-13);
            let psi = jet.psi.as_ref().unwrap().at(node);
            for a in 0..3 {
                assert!((gr[a] - psi[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for order in [JetOrder::Zero, JetOrder::P1] {
            for dim in [2, 3] {
                let g = grid(dim, 12);
                let f = |p: Point| (p[0] * 0.9).sin() + (p[1] * 1.1).cos() * (0.5 * p[2]).cos();
                let df = |p: Point| {
                    [
                        0.9 * (p[0] * 0.9).cos(),
                        -1.1 * (p[1] * 1.1).sin() * (0.5 * p[2]).cos(),
                        -0.5 * (p[1] * 1.1).cos() * (0.5 * p[2]).sin(),
                    ]
                };
                let jet = JetField::from_fn(g, order, f, df);
                let s = JetSampler::new(&jet);
                let p = [0.123, -0.456, if dim == 3 { 0.789 } else { 0.0 }];
                let ip = s.interpolant_at(p);
                let gr = ip.eval_gradient(p);
                let step = 1e-6;
                for a in 0..dim {
                    let (mut pp, mut pm) = (p, p);
                    pp[a] += step;
                    pm[a] -= step;
                    let fd = (ip.eval(pp) - ip.eval(pm)) / (2.0 * step);
                    assert!((fd - gr[a]).abs() <= 1e-6 * gr[a].abs().max(1.0), "{order:?} {dim} {a}");
                }
            }
        }
    }

    #[test]
    fn periodic_images_agree() {
        let g = grid(2, 16);
        let f = ScalarField::from_fn(g, |p| (PI * p[0] / 2.0).sin());
        let s = NodeSampler::new(&f);
        let p = [1.93, 0.2, 0.0];
        assert!((s.value(p) - s.value([p[0] - 4.0, p[1] + 8.0, 0.0])).abs() < 1e-13);
        // Extrapolating half a cell beyond the anchor stays accurate.
        let cell = g.locate(p).cell;
        let ip = build_node_interpolant(&f, cell);
        let q = [p[0] + 0.5 * g.h(), p[1], 0.0];
        assert!((ip.eval(q) - (PI * q[0] / 2.0).sin()).abs() < 1e-3);
    }

    fn random_field(g: GridSpec, seed: [f64; 6]) -> (JetField, JetField) {
        let f = move |p: Point| {
            (seed[0] * p[0] + seed[1]).sin() * (seed[2] * p[1] + seed[3]).cos() + seed[4] * (PI * p[2] / 2.0 + seed[5]).sin()
        };
        let df = move |p: Point| {
            [
                seed[0] * (seed[0] * p[0] + seed[1]).cos() * (seed[2] * p[1] + seed[3]).cos(),
                -seed[2] * (seed[0] * p[0] + seed[1]).sin() * (seed[2] * p[1] + seed[3]).sin(),
                seed[4] * PI / 2.0 * (PI * p[2] / 2.0 + seed[5]).cos(),
            ]
        };
        (JetField::from_fn(g, JetOrder::P1, f, df), JetField::from_fn(g, JetOrder::Zero, f, df))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn corner_property_every_cell(s in proptest::array::uniform6(-2.0f64..2.0), dim in 2usize..=3) {
            let g = grid(dim, 8);
            let (p1, z) = random_field(g, s);
            for jet in [&p1, &z] {
                for flat in 0..g.len() {
                    let cell = g.multi_index(flat);
                    let ip = build_jet_interpolant(jet, cell);
                    for corner in 0..(1usize << dim) {
                        let t = [(corner & 1) as f64, ((corner >> 1) & 1) as f64, (corner >> 2) as f64];
                        let v = ip.eval_local(t);
                        prop_assert!((v - jet.phi.get(corner_flat(&g, cell, corner))).abs() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn p1_continuous_across_faces(s in proptest::array::uniform6(-2.0f64..2.0), u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let g = grid(3, 8);
            let (jet, _) = random_field(g, s);
            let cell = [2, 3, 4];
            let ip = build_jet_interpolant(&jet, cell);
            for ax in 0..3 {
                let mut nb = cell;
                nb[ax] += 1;
                let other = build_jet_interpolant(&jet, nb);
                let mut t = [u, v, u * v];
                t[ax] = 1.0;
                let mut tn = t;
                tn[ax] = 0.0;
                prop_assert!((ip.eval_local(t) - other.eval_local(tn)).abs() < 1e-12);
            }
        }
    }
}
