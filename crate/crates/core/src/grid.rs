//! Periodic Cartesian grids, nodal field storage and isotropic finite-difference stencils.
//!
//! Nodes are stored densely in row-major multi-index order: the flat index of
//! node `(i, j, k)` is `(i * n_y + j) * n_z + k`. Two-dimensional grids use
//! `n_z = 1` and ignore the third coordinate of every point.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in physical space. The `z` component is unused in 2D.
pub type Point = [f64; 3];

/// Smallest admissible number of nodes per axis.
pub const MIN_NODES: usize = 8;

/// Uniform periodic Cartesian grid descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    origin: Point,
    n: [usize; 3],
    h: f64,
}

/// Cell containing a point together with the local coordinates inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellLocation {
    pub cell: [usize; 3],
    /// Local coordinates in `[0, 1)` along each active axis.
    pub t: [f64; 3],
}

impl GridSpec {
    /// Grid with `n[i]` nodes along axis `i`, spacing `h` and lower corner `origin`.
    pub fn new(dim: usize, origin: &[f64], n: &[usize], h: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Usage(format!("grid dimension must be 2 or 3, got {dim}")));
        }
        if origin.len() != dim || n.len() != dim {
            return Err(Error::Usage("origin and node counts must have one entry per axis".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Usage(format!("grid spacing must be positive, got {h}")));
        }
        if let Some(&bad) = n.iter().find(|&&ni| ni < MIN_NODES) {
            return Err(Error::Usage(format!("need at least {MIN_NODES} nodes per axis, got {bad}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Usage("grid origin must be finite".into()));
        }
        let mut o = [0.0; 3];
        let mut nn = [1usize; 3];
        o[..dim].copy_from_slice(origin);
        nn[..dim].copy_from_slice(n);
        Ok(Self { dim, origin: o, n: nn, h })
    }

    /// The periodic cube `[lo, hi)^dim` sampled with `n` nodes per axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Usage(format!("empty domain [{lo}, {hi})")));
        }
        let h = (hi - lo) / n as f64;
        Self::new(dim, &vec![lo; dim], &vec![n; dim], h)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn origin(&self) -> Point {
        self.origin
    }

    /// Nodes per axis; inactive axes report 1.
    #[inline]
    pub fn n(&self) -> [usize; 3] {
        self.n
    }

    /// Domain length per active axis (0 for the unused third axis in 2D).
    pub fn extent(&self) -> Point {
        let mut e = [0.0; 3];
        for (a, ea) in e.iter_mut().enumerate().take(self.dim) {
            *ea = self.n[a] as f64 * self.h;
        }
        e
    }

    /// Total number of nodes.
    #[inline]
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume (area in 2D) attributed to a single node.
    #[inline]
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    #[inline]
    pub fn flat(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.n[1] + idx[1]) * self.n[2] + idx[2]
    }

    #[inline]
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let k = flat % self.n[2];
        let rest = flat / self.n[2];
        [rest / self.n[1], rest % self.n[1], k]
    }

    /// Physical position of a node given by its multi-index.
    pub fn node_position(&self, idx: &[usize]) -> Result<Point> {
        if idx.len() != self.dim {
            return Err(Error::Usage(format!(
                "expected a {}-component index, got {}",
                self.dim,
                idx.len()
            )));
        }
        let mut full = [0usize; 3];
        for (a, &i) in idx.iter().enumerate() {
            if i >= self.n[a] {
                return Err(Error::Usage(format!(
                    "index {i} out of range 0..{} on axis {a}",
                    self.n[a]
                )));
            }
            full[a] = i;
        }
        Ok(self.position_of(full))
    }

    #[inline]
    pub fn position_of(&self, idx: [usize; 3]) -> Point {
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.origin[a] + idx[a] as f64 * self.h;
        }
        p
    }

    /// Position of the node with flat index `flat`.
    #[inline]
    pub fn position(&self, flat: usize) -> Point {
        self.position_of(self.multi_index(flat))
    }

    /// Maps `p` into `[origin, origin + extent)` along every active axis.
    pub fn wrap_point(&self, p: Point) -> Point {
        let mut q = p;
        for a in 0..self.dim {
            let len = self.n[a] as f64 * self.h;
            let off = p[a] - self.origin[a];
            if (0.0..len).contains(&off) {
                continue;
            }
            let mut r = off.rem_euclid(len);
            // rem_euclid can round up to exactly `len` for tiny negative inputs
            if r >= len {
                r -= len;
            }
            q[a] = self.origin[a] + r;
        }
        q
    }

    /// Periodic wrap of a signed node index along `axis`.
    #[inline]
    pub fn wrap_index(&self, i: isize, axis: usize) -> usize {
        i.rem_euclid(self.n[axis] as isize) as usize
    }

    /// Flat index of the node displaced from `flat` by `offset` (periodic).
    #[inline]
    pub fn offset(&self, flat: usize, offset: [isize; 3]) -> usize {
        let idx = self.multi_index(flat);
        self.offset_index(idx, offset)
    }

    #[inline]
    pub fn offset_index(&self, idx: [usize; 3], offset: [isize; 3]) -> usize {
        let mut out = [0usize; 3];
        for a in 0..3 {
            out[a] = if a < self.dim {
                self.wrap_index(idx[a] as isize + offset[a], a)
            } else {
                0
            };
        }
        self.flat(out)
    }

    /// Cell containing `p` after periodic wrapping.
    ///
    /// Cell `c` spans the nodes `c` and `c + 1` along every axis. Points on a
    /// shared face belong to the cell with the lower index.
    pub fn locate(&self, p: Point) -> CellLocation {
        let q = self.wrap_point(p);
        let mut cell = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..self.dim {
            let s = (q[a] - self.origin[a]) / self.h;
            let mut c = s.floor();
            if c < 0.0 {
                c = 0.0;
            }
            let n = self.n[a] as f64;
            if c > n - 1.0 {
                c = n - 1.0;
            }
            cell[a] = c as usize;
            t[a] = s - c;
        }
        CellLocation { cell, t }
    }

    /// Shortest periodic displacement `b - a` along each active axis.
    pub fn periodic_delta(&self, a: Point, b: Point) -> Point {
        let mut d = [0.0; 3];
        for ax in 0..self.dim {
            let len = self.n[ax] as f64 * self.h;
            let mut v = b[ax] - a[ax];
            v -= len * (v / len).round();
            d[ax] = v;
        }
        d
    }

    /// Periodic distance between two points.
    pub fn periodic_distance(&self, a: Point, b: Point) -> f64 {
        norm(self.periodic_delta(a, b))
    }

    /// Offsets of the `3^dim - 1` nodes surrounding a node.
    pub fn neighbor_offsets(&self) -> Vec<[isize; 3]> {
        let zr: &[isize] = if self.dim == 3 { &[-1, 0, 1] } else { &[0] };
        let mut out = Vec::with_capacity(26);
        for &i in &[-1isize, 0, 1] {
            for &j in &[-1isize, 0, 1] {
                for &k in zr {
                    if i != 0 || j != 0 || k != 0 {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }

    /// Offsets of the `2 * dim` face neighbors of a node.
    pub fn face_offsets(&self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(6);
        for a in 0..self.dim {
            for s in [-1isize, 1] {
                let mut o = [0isize; 3];
                o[a] = s;
                out.push(o);
            }
        }
        out
    }
}

#[inline]
pub fn norm(v: Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Scalar value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: GridSpec, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    #[inline]
    pub fn set(&mut self, flat: usize, v: f64) {
        self.values[flat] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Node-wise linear combination `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &ScalarField, b: f64) -> ScalarField {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        ScalarField { grid: self.grid, values }
    }

    /// Writes `i,j[,k],x,y[,z],value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let dim = self.grid.dim;
        let mut header: Vec<&str> = vec!["i", "j"];
        if dim == 3 {
            header.push("k");
        }
        header.extend(["x", "y"]);
        if dim == 3 {
            header.push("z");
        }
        header.push("value");
        wr.write_record(&header)?;
        for (flat, v) in self.values.iter().enumerate() {
            let idx = self.grid.multi_index(flat);
            let p = self.grid.position_of(idx);
            let mut rec: Vec<String> = idx[..dim].iter().map(|i| i.to_string()).collect();
            rec.extend(p[..dim].iter().map(|x| x.to_string()));
            rec.push(v.to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `dim` scalar components per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    grid: GridSpec,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, components: vec![vec![0.0; grid.len()]; grid.dim()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(Point) -> Point) -> Self {
        let mut out = Self::zeros(grid);
        for i in 0..grid.len() {
            out.set(i, f(grid.position(i)));
        }
        out
    }

    pub fn from_components(grid: GridSpec, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::Usage("vector field components do not match the grid".into()));
        }
        Ok(Self { grid, components })
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    #[inline]
    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.components[axis]
    }

    #[inline]
    pub fn at(&self, flat: usize) -> Point {
        let mut p = [0.0; 3];
        for (a, c) in self.components.iter().enumerate() {
            p[a] = c[flat];
        }
        p
    }

    #[inline]
    pub fn set(&mut self, flat: usize, v: Point) {
        for (a, c) in self.components.iter_mut().enumerate() {
            c[flat] = v[a];
        }
    }

    /// Largest Euclidean norm over all nodes.
    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len()).fold(0.0, |m, i| m.max(norm(self.at(i))))
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// True when every component is exactly zero at `flat`.
    #[inline]
    pub fn is_zero_at(&self, flat: usize) -> bool {
        self.components.iter().all(|c| c[flat] == 0.0)
    }
}

/// Values on the `3^dim` block around a node, indexed by `nb_index(offset)`.
pub type Neighborhood = [f64; 27];

#[inline]
pub fn nb_index(o: [isize; 3]) -> usize {
    ((o[0] + 1) * 9 + (o[1] + 1) * 3 + (o[2] + 1)) as usize
}

/// Gathers the 3x3 (3x3x3) block of `values` centred on node `flat`.
pub fn gather_neighborhood(grid: &GridSpec, values: &[f64], flat: usize) -> Neighborhood {
    let mut nb = [0.0; 27];
    let idx = grid.multi_index(flat);
    let zr: &[isize] = if grid.dim() == 3 { &[-1, 0, 1] } else { &[0] };
    for i in -1isize..=1 {
        for j in -1isize..=1 {
            for &k in zr {
                let o = [i, j, k];
                nb[nb_index(o)] = values[grid.offset_index(idx, o)];
            }
        }
    }
    nb
}

/// Isotropic finite-difference operators acting on a gathered neighborhood.
///
/// First derivatives average the central difference over the transverse
/// directions with weights `(1, 4, 1) / 6` per transverse axis. Second
/// derivatives are chosen so that `D_xx + D_yy (+ D_zz)` reproduces the
/// isotropic Laplacian stencil exactly.
#[derive(Debug, Clone, Copy)]
pub struct IsotropicStencil {
    dim: usize,
    h: f64,
}

const W1: [f64; 3] = [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0];

impl IsotropicStencil {
    pub fn new(grid: &GridSpec) -> Self {
        Self { dim: grid.dim(), h: grid.h() }
    }

    fn transverse(&self, axis: usize) -> (usize, Option<usize>) {
        match (self.dim, axis) {
            (2, 0) => (1, None),
            (2, _) => (0, None),
            (_, 0) => (1, Some(2)),
            (_, 1) => (0, Some(2)),
            _ => (0, Some(1)),
        }
    }

    /// Weight of the second-derivative stencil for a transverse offset.
    fn w2(&self, s: isize, r: Option<isize>) -> f64 {
        match r {
            None => {
                if s == 0 {
                    10.0 / 12.0
                } else {
                    1.0 / 12.0
                }
            }
            Some(r) => match (s == 0, r == 0) {
                (true, true) => 32.0 / 45.0,
                (true, false) | (false, true) => 11.0 / 180.0,
                (false, false) => 1.0 / 90.0,
            },
        }
    }

    /// Isotropic first derivative along `axis`.
    pub fn d1(&self, nb: &Neighborhood, axis: usize) -> f64 {
        let (ta, tb) = self.transverse(axis);
        let mut acc = 0.0;
        let rr: &[isize] = if tb.is_some() { &[-1, 0, 1] } else { &[0] };
        for s in -1isize..=1 {
            for &r in rr {
                let w = W1[(s + 1) as usize] * if tb.is_some() { W1[(r + 1) as usize] } else { 1.0 };
                let mut op = [0isize; 3];
                op[axis] = 1;
                op[ta] = s;
                if let Some(tb) = tb {
                    op[tb] = r;
                }
                let mut om = op;
                om[axis] = -1;
                acc += w * (nb[nb_index(op)] - nb[nb_index(om)]);
            }
        }
        acc / (2.0 * self.h)
    }

    /// Isotropic second derivative along `axis`.
    pub fn d2(&self, nb: &Neighborhood, axis: usize) -> f64 {
        let (ta, tb) = self.transverse(axis);
        let mut acc = 0.0;
        let rr: &[isize] = if tb.is_some() { &[-1, 0, 1] } else { &[0] };
        for s in -1isize..=1 {
            for &r in rr {
                let w = self.w2(s, tb.map(|_| r));
                let mut o = [0isize; 3];
                o[ta] = s;
                if let Some(tb) = tb {
                    o[tb] = r;
                }
                let c = nb[nb_index(o)];
                o[axis] = 1;
                let p = nb[nb_index(o)];
                o[axis] = -1;
                let m = nb[nb_index(o)];
                acc += w * (p - 2.0 * c + m);
            }
        }
        acc / (self.h * self.h)
    }

    /// Mixed second derivative along axes `a != b`.
    pub fn dmix(&self, nb: &Neighborhood, a: usize, b: usize) -> f64 {
        debug_assert_ne!(a, b);
        let third = if self.dim == 3 { Some(3 - a - b) } else { None };
        let rr: &[isize] = if third.is_some() { &[-1, 0, 1] } else { &[0] };
        let mut acc = 0.0;
        for &r in rr {
            let w = if third.is_some() { W1[(r + 1) as usize] } else { 1.0 };
            let mut o = [0isize; 3];
            if let Some(c) = third {
                o[c] = r;
            }
            let mut v = 0.0;
            for (sa, sb, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                o[a] = sa;
                o[b] = sb;
                v += sign * nb[nb_index(o)];
            }
            acc += w * v;
        }
        acc / (4.0 * self.h * self.h)
    }

    /// Isotropic gradient.
    pub fn gradient(&self, nb: &Neighborhood) -> Point {
        let mut g = [0.0; 3];
        for (a, ga) in g.iter_mut().enumerate().take(self.dim) {
            *ga = self.d1(nb, a);
        }
        g
    }

    /// Isotropic Laplacian at the centre of the neighborhood.
    pub fn laplacian(&self, nb: &Neighborhood) -> f64 {
        (0..self.dim).map(|a| self.d2(nb, a)).sum()
    }
}

/// Applies the isotropic Laplacian to raw nodal values, writing into `out`.
///
/// 2D uses `[1 4 1; 4 -20 4; 1 4 1] / (6 h^2)`; 3D uses the 27-point stencil
/// with weights `-128` (centre), `14` (faces), `3` (edges), `1` (corners) over `30 h^2`.
pub fn laplacian_into(grid: &GridSpec, f: &[f64], out: &mut [f64]) {
    let [nx, ny, nz] = grid.n();
    let h2 = grid.h() * grid.h();
    if grid.dim() == 2 {
        let s = 1.0 / (6.0 * h2);
        for i in 0..nx {
            let im = if i == 0 { nx - 1 } else { i - 1 };
            let ip = if i + 1 == nx { 0 } else { i + 1 };
            let (r0, rm, rp) = (i * ny, im * ny, ip * ny);
            for j in 0..ny {
                let jm = if j == 0 { ny - 1 } else { j - 1 };
                let jp = if j + 1 == ny { 0 } else { j + 1 };
                let edges = f[rm + j] + f[rp + j] + f[r0 + jm] + f[r0 + jp];
                let corners = f[rm + jm] + f[rm + jp] + f[rp + jm] + f[rp + jp];
                out[r0 + j] = s * (4.0 * edges + corners - 20.0 * f[r0 + j]);
            }
        }
    } else {
        let s = 1.0 / (30.0 * h2);
        let wrap = |i: usize, n: usize| -> [usize; 3] {
            [if i == 0 { n - 1 } else { i - 1 }, i, if i + 1 == n { 0 } else { i + 1 }]
        };
        for i in 0..nx {
            let ii = wrap(i, nx);
            for j in 0..ny {
                let jj = wrap(j, ny);
                for k in 0..nz {
                    let kk = wrap(k, nz);
                    let mut acc = 0.0;
                    for (a, &ia) in ii.iter().enumerate() {
                        for (b, &jb) in jj.iter().enumerate() {
                            let row = (ia * ny + jb) * nz;
                            for (c, &kc) in kk.iter().enumerate() {
                                let taxi = (a != 1) as u8 + (b != 1) as u8 + (c != 1) as u8;
                                let w = match taxi {
                                    0 => -128.0,
                                    1 => 14.0,
                                    2 => 3.0,
                                    _ => 1.0,
                                };
                                acc += w * f[row + kc];
                            }
                        }
                    }
                    out[(i * ny + j) * nz + k] = s * acc;
                }
            }
        }
    }
}

/// Discrete isotropic Laplacian of `f` on its periodic grid.
pub fn isotropic_laplacian(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(*f.grid());
    laplacian_into(f.grid(), f.values(), out.values_mut());
    out
}

/// Writes `x,y[,z],value` rows for a list of points.
pub fn write_points_csv<W: Write>(dim: usize, rows: &[(Point, f64)], value_name: &str, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = vec!["x", "y"];
    if dim == 3 {
        header.push("z");
    }
    header.push(value_name);
    wr.write_record(&header)?;
    for (p, v) in rows {
        let mut rec: Vec<String> = p[..dim].iter().map(|x| x.to_string()).collect();
        rec.push(v.to_string());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
