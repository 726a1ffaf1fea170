//! Interface geometry: closest points, reinitialisation, curvature,
//! closest-point extension and integral measures.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, gather_neighborhood, norm, write_points_csv, GridSpec, IsotropicStencil, Point, ScalarField, VectorField};
use crate::interpolation::{build_jet_interpolant, JetField, JetSampler, NodeSampler};

/// Maximum closest-point iterations before falling back to bisection.
pub const MAX_CLOSEST_POINT_ITERATIONS: usize = 50;

/// Gradients smaller than this are treated as degenerate.
pub const DEGENERATE_GRADIENT: f64 = 1e-6;

/// Half-width of the reinitialisation band in grid spacings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub width: f64,
}

impl Default for BandSpec {
    fn default() -> Self {
        Self { width: 4.0 }
    }
}

impl BandSpec {
    pub fn new(width: f64) -> Result<Self> {
        if !(width >= 2.0) {
            return Err(Error::Usage(format!("band width must be at least 2, got {width}")));
        }
        Ok(Self { width })
    }
}

/// Result of a closest-point search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    /// Foot point on the zero set (not wrapped into the domain).
    pub point: Point,
    /// Unsigned distance from the query point.
    pub distance: f64,
    /// Unit gradient of the interpolant at the foot point.
    pub normal: Point,
    /// True when the iteration failed and the bisection fallback was used.
    pub flagged: bool,
}

#[inline]
fn unit(v: Point) -> Option<Point> {
    let n = norm(v);
    (n > DEGENERATE_GRADIENT).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

/// Closest point on the jet's zero set, starting the search at `x`.
pub fn closest_point(jet: &JetField, x: Point) -> ClosestPoint {
    closest_point_from(jet, x, x)
}

/// Closest point on the jet's zero set to `x`, starting the search at `seed`.
///
/// Each iteration combines a Newton step onto the zero set with a step that
/// removes the tangential part of `x - y`, so the fixed point is a foot
/// point whose normal passes through `x`.
pub fn closest_point_from(jet: &JetField, x: Point, seed: Point) -> ClosestPoint {
    let grid = jet.grid();
    let h = grid.h();
    let sampler = JetSampler::new(jet);
    let mut y = seed;
    let tol = 1e-10 * h;
    // The tangential step is halved whenever it reverses direction. This
    // settles feet that straddle a cell face where the interpolant's normal
    // jumps, and tames the overshoot for points far outside tight curves.
    let mut omega = 1.0;
    let mut last_d2 = [0.0; 3];
    for _ in 0..MAX_CLOSEST_POINT_ITERATIONS {
        let (p, g) = sampler.value_gradient(y);
        let g2 = dot(g, g);
        if !(g2 > DEGENERATE_GRADIENT * DEGENERATE_GRADIENT) || !p.is_finite() {
            break;
        }
        let d1 = [-p * g[0] / g2, -p * g[1] / g2, -p * g[2] / g2];
        let half = [y[0] + d1[0], y[1] + d1[1], y[2] + d1[2]];
        let v = grid.periodic_delta(half, x);
        let vg = dot(v, g) / g2;
        let d2 = [v[0] - vg * g[0], v[1] - vg * g[1], v[2] - vg * g[2]];
        if dot(d2, last_d2) < 0.0 {
            omega *= 0.5;
        }
        last_d2 = d2;
        y = [half[0] + omega * d2[0], half[1] + omega * d2[1], half[2] + omega * d2[2]];
        if norm(d1) + omega * norm(d2) < tol {
            let (p, g) = sampler.value_gradient(y);
            if p.abs() <= tol {
                if let Some(n) = unit(g) {
                    return ClosestPoint { point: y, distance: grid.periodic_distance(x, y), normal: n, flagged: false };
                }
            }
            break;
        }
    }
    // Not converged: typically a foot oscillating across a cell face where the
    // interpolant's normal jumps. Keep the last iterate if it is on the zero set.
    let fallback = bisection_fallback(jet, x);
    let (p, g) = sampler.value_gradient(y);
    match unit(g) {
        Some(n) if p.abs() <= 1e-8 * h && y.iter().all(|v| v.is_finite()) => {
            let d = grid.periodic_distance(x, y);
            if d <= fallback.distance {
                return ClosestPoint { point: y, distance: d, normal: n, flagged: true };
            }
            fallback
        }
        _ => fallback,
    }
}

/// Root of the interpolant along the gradient line through `x`.
///
/// Returns an infinite distance when no sign change is found.
fn bisection_fallback(jet: &JetField, x: Point) -> ClosestPoint {
    let grid = jet.grid();
    let h = grid.h();
    let sampler = JetSampler::new(jet);
    let (p0, g0) = sampler.value_gradient(x);
    let dir = unit(g0).unwrap_or([1.0, 0.0, 0.0]);
    let at = |s: f64| sampler.value([x[0] + s * dir[0], x[1] + s * dir[1], x[2] + s * dir[2]]);
    if p0 == 0.0 {
        return ClosestPoint { point: x, distance: 0.0, normal: dir, flagged: true };
    }
    // Walk towards decreasing |phi| until the sign flips.
    let towards = if p0 > 0.0 { -1.0 } else { 1.0 };
    let step = 0.25 * h;
    let mut bracket = None;
    let mut prev = 0.0;
    for k in 1..=160 {
        let s = towards * step * k as f64;
        let v = at(s);
        if (v > 0.0) != (p0 > 0.0) || v == 0.0 {
            bracket = Some((prev, s));
            break;
        }
        prev = s;
    }
    let Some((mut a, mut b)) = bracket else {
        return ClosestPoint { point: x, distance: f64::INFINITY, normal: dir, flagged: true };
    };
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if (at(m) > 0.0) == (p0 > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    let s = 0.5 * (a + b);
    let y = [x[0] + s * dir[0], x[1] + s * dir[1], x[2] + s * dir[2]];
    let n = unit(sampler.value_gradient(y).1).unwrap_or(dir);
    ClosestPoint { point: y, distance: s.abs(), normal: n, flagged: true }
}

/// A band node together with its closest point and attached scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSample {
    pub node: usize,
    pub point: Point,
    /// Signed distance from the node to `point`.
    pub distance: f64,
    pub normal: Point,
    pub flagged: bool,
    pub kappa: f64,
    pub speed: f64,
}

/// Closest-point samples of all band nodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSampleSet {
    pub samples: Vec<InterfaceSample>,
    pub band_width: f64,
}

impl InterfaceSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn flagged(&self) -> usize {
        self.samples.iter().filter(|s| s.flagged).count()
    }

    /// Writes one `x,y[,z],kappa` row per sample, with points wrapped into the domain.
    pub fn write_csv<W: Write>(&self, grid: &GridSpec, w: W) -> Result<()> {
        let rows: Vec<(Point, f64)> = self.samples.iter().map(|s| (grid.wrap_point(s.point), s.kappa)).collect();
        write_points_csv(grid.dim(), &rows, "kappa", w)
    }
}

/// Output of [`reinitialize`].
#[derive(Debug, Clone)]
pub struct Reinitialized {
    pub jet: JetField,
    pub samples: InterfaceSampleSet,
    /// Nodes whose distance to the interface is within the band.
    pub band: Vec<bool>,
}

#[inline]
fn sgn(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Nodes with a face neighbour of opposite sign.
fn crossing_nodes(grid: &GridSpec, phi: &[f64]) -> Vec<usize> {
    let faces = grid.face_offsets();
    (0..grid.len())
        .filter(|&i| {
            let idx = grid.multi_index(i);
            let s = phi[i] < 0.0;
            faces.iter().any(|&o| (phi[grid.offset_index(idx, o)] < 0.0) != s)
        })
        .collect()
}

/// Rebuilds a signed-distance jet from the zero set of `jet`.
///
/// Nodes within `band.width` grid spacings of the interface receive their
/// exact closest-point distance and unit gradient. Every other node is
/// clamped to `±band.width * h` and takes the gradient of the nearest band node.
pub fn reinitialize(jet: &JetField, band: BandSpec) -> Result<Reinitialized> {
    let grid = *jet.grid();
    let h = grid.h();
    let n = grid.len();
    let phi0 = jet.phi.values();
    if !jet.is_finite() {
        return Err(Error::Numerical("non-finite level-set values before reinitialisation".into()));
    }
    let level0 = crossing_nodes(&grid, phi0);
    if level0.is_empty() {
        return Err(Error::InterfaceVanished("level set has no sign change".into()));
    }
    let limit = band.width * h;
    let depth = band.width.ceil() as usize + 1;
    let neighbors = grid.neighbor_offsets();

    let mut found: Vec<Option<ClosestPoint>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut layer: Vec<(usize, Point)> = level0.iter().map(|&i| (i, grid.position(i))).collect();
    for &(i, _) in &layer {
        visited[i] = true;
    }
    for d in 0..=depth {
        let results: Vec<ClosestPoint> = layer
            .par_iter()
            .map(|&(i, seed)| closest_point_from(jet, grid.position(i), seed))
            .collect();
        let mut next = Vec::new();
        for (&(i, _), cp) in layer.iter().zip(results) {
            found[i] = Some(cp);
            if d < depth {
                let idx = grid.multi_index(i);
                for &o in &neighbors {
                    let j = grid.offset_index(idx, o);
                    if !visited[j] {
                        visited[j] = true;
                        next.push((j, cp.point));
                    }
                }
            }
        }
        layer = next;
    }

    // Retry from neighbouring feet where one lies closer than the current foot.
    let improved: Vec<(usize, ClosestPoint)> = (0..n)
        .into_par_iter()
        .filter_map(|i| {
            let cp = found[i]?;
            let x = grid.position(i);
            let idx = grid.multi_index(i);
            let mut best = cp;
            let mut changed = false;
            for &o in &neighbors {
                let j = grid.offset_index(idx, o);
                if let Some(other) = found[j] {
                    if grid.periodic_distance(x, other.point) < best.distance - 1e-6 * h {
                        let cand = closest_point_from(jet, x, other.point);
                        if cand.distance < best.distance && !cand.flagged {
                            best = cand;
                            changed = true;
                        }
                    }
                }
            }
            changed.then_some((i, best))
        })
        .collect();
    for (i, cp) in improved {
        found[i] = Some(cp);
    }

    let dim = grid.dim();
    let mut phi = ScalarField::zeros(grid);
    let mut psi = VectorField::zeros(grid);
    let mut in_band = vec![false; n];
    let mut samples = Vec::new();
    for i in 0..n {
        let s = sgn(phi0[i]);
        match found[i] {
            Some(cp) if cp.distance <= limit => {
                let x = grid.position(i);
                let dvec = grid.periodic_delta(cp.point, x);
                let g = if cp.distance > 1e-8 * h {
                    [s * dvec[0] / cp.distance, s * dvec[1] / cp.distance, s * dvec[2] / cp.distance]
                } else {
                    cp.normal
                };
                let mut gg = [0.0; 3];
                gg[..dim].copy_from_slice(&g[..dim]);
                phi.set(i, s * cp.distance);
                psi.set(i, gg);
                in_band[i] = true;
                samples.push(InterfaceSample {
                    node: i,
                    point: cp.point,
                    distance: s * cp.distance,
                    normal: cp.normal,
                    flagged: cp.flagged,
                    kappa: 0.0,
                    speed: 0.0,
                });
            }
            _ => phi.set(i, s * limit),
        }
    }
    if samples.is_empty() {
        return Err(Error::InterfaceVanished("no closest points within the band".into()));
    }

    // Gradient outside the band copied from the nearest band node.
    let mut owner: Vec<Option<usize>> = (0..n).map(|i| in_band[i].then_some(i)).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| in_band[i]).collect();
    let faces = grid.face_offsets();
    while let Some(i) = queue.pop_front() {
        let idx = grid.multi_index(i);
        for &o in &faces {
            let j = grid.offset_index(idx, o);
            if owner[j].is_none() {
                owner[j] = owner[i];
                queue.push_back(j);
            }
        }
    }
    for i in 0..n {
        if !in_band[i] {
            if let Some(src) = owner[i] {
                let v = psi.at(src);
                psi.set(i, v);
            }
        }
    }

    let psi = jet.psi.as_ref().map(|_| psi);
    Ok(Reinitialized {
        jet: JetField { phi, psi },
        samples: InterfaceSampleSet { samples, band_width: band.width },
        band: in_band,
    })
}

/// Curvature at the nodes selected by `mask` (all nodes when `None`).
///
/// Value-only jets use isotropic differences of `φ`. P1 jets average the
/// differences of `φ` with those of the tracked gradient. In 3D the result is
/// the sum of the principal curvatures. Returns the field and the number of
/// nodes whose gradient was degenerate (curvature set to zero there).
pub fn curvature_field(jet: &JetField, mask: Option<&[bool]>) -> (ScalarField, usize) {
    let grid = *jet.grid();
    let dim = grid.dim();
    let st = IsotropicStencil::new(&grid);
    let phi = jet.phi.values();
    let vals: Vec<Option<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if !mask.map_or(true, |m| m[i]) {
                return Some(0.0);
            }
            let nb = gather_neighborhood(&grid, phi, i);
            let mut g = [0.0; 3];
            let mut hs = [[0.0; 3]; 3];
            match &jet.psi {
                None => {
                    for a in 0..dim {
                        g[a] = st.d1(&nb, a);
                        hs[a][a] = st.d2(&nb, a);
                        for b in (a + 1)..dim {
                            hs[a][b] = st.dmix(&nb, a, b);
                        }
                    }
                }
                Some(psi) => {
                    let nbs: Vec<_> = (0..dim).map(|a| gather_neighborhood(&grid, psi.component(a), i)).collect();
                    let p = psi.at(i);
                    for a in 0..dim {
                        g[a] = 0.5 * (p[a] + st.d1(&nb, a));
                        hs[a][a] = 0.5 * (st.d1(&nbs[a], a) + st.d2(&nb, a));
                        for b in (a + 1)..dim {
                            hs[a][b] = (st.d1(&nbs[a], b) + st.d1(&nbs[b], a) + st.dmix(&nb, a, b)) / 3.0;
                        }
                    }
                }
            }
            mean_curvature(dim, g, hs)
        })
        .collect();
    let mut flagged = 0;
    let mut out = ScalarField::zeros(grid);
    for (i, v) in vals.into_iter().enumerate() {
        match v {
            Some(k) => out.set(i, k),
            None => flagged += 1,
        }
    }
    (out, flagged)
}

/// `div(∇φ/|∇φ|)` from the gradient and upper-triangular Hessian entries.
fn mean_curvature(dim: usize, g: Point, hs: [[f64; 3]; 3]) -> Option<f64> {
    let n2 = dot(g, g);
    if n2.sqrt() < DEGENERATE_GRADIENT {
        return None;
    }
    let (gx, gy, gz) = (g[0], g[1], g[2]);
    let num = if dim == 2 {
        hs[0][0] * gy * gy + hs[1][1] * gx * gx - 2.0 * hs[0][1] * gx * gy
    } else {
        (hs[1][1] + hs[2][2]) * gx * gx + (hs[0][0] + hs[2][2]) * gy * gy + (hs[0][0] + hs[1][1]) * gz * gz
            - 2.0 * (hs[0][1] * gx * gy + hs[0][2] * gx * gz + hs[1][2] * gy * gz)
    };
    Some(num / (n2 * n2.sqrt()))
}

/// Band field holding `value(sample)` at every sample node, zero elsewhere.
pub fn extend_to_band(
    grid: &GridSpec,
    samples: &InterfaceSampleSet,
    value: impl Fn(&InterfaceSample) -> f64,
) -> ScalarField {
    let mut out = ScalarField::zeros(*grid);
    for s in &samples.samples {
        out.set(s.node, value(s));
    }
    out
}

/// Attaches to every sample the cubic interpolation of `field` at its closest point.
pub fn attach_at_closest_points(samples: &mut InterfaceSampleSet, field: &ScalarField) -> Vec<f64> {
    let s = NodeSampler::new(field);
    samples.samples.par_iter().map(|smp| s.value(smp.point)).collect()
}

/// Cosine-regularised delta of half-width `w`.
#[inline]
pub fn smoothed_delta(phi: f64, w: f64) -> f64 {
    if phi.abs() >= w {
        0.0
    } else {
        (1.0 + (PI * phi / w).cos()) / (2.0 * w)
    }
}

/// Heaviside function matching [`smoothed_delta`].
#[inline]
pub fn smoothed_heaviside(phi: f64, w: f64) -> f64 {
    if phi <= -w {
        0.0
    } else if phi >= w {
        1.0
    } else {
        0.5 * (1.0 + phi / w + (PI * phi / w).sin() / PI)
    }
}

/// Default delta half-width in grid spacings.
pub const DELTA_WIDTH: f64 = 1.5;

/// Enclosed measure, interface measure and average curvature.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Measures {
    /// Area (2D) or volume (3D) of the region `φ < 0`.
    pub volume: f64,
    /// Length (2D) or area (3D) of the interface.
    pub area: f64,
    pub kappa_avg: f64,
}

fn gradient_norms(jet: &JetField) -> Vec<f64> {
    let grid = *jet.grid();
    match &jet.psi {
        Some(psi) => (0..grid.len()).map(|i| norm(psi.at(i))).collect(),
        None => {
            let st = IsotropicStencil::new(&grid);
            (0..grid.len())
                .into_par_iter()
                .map(|i| norm(st.gradient(&gather_neighborhood(&grid, jet.phi.values(), i))))
                .collect()
        }
    }
}

/// Smoothed-delta quadrature of the enclosed measure, interface measure and
/// the interface average of `kappa`.
pub fn interface_measures(jet: &JetField, kappa: &ScalarField) -> Measures {
    let grid = *jet.grid();
    let w = DELTA_WIDTH * grid.h();
    let cell = grid.cell_measure();
    let gn = gradient_norms(jet);
    let (mut vol, mut area, mut kap) = (0.0, 0.0, 0.0);
    for (i, &p) in jet.phi.values().iter().enumerate() {
        vol += 1.0 - smoothed_heaviside(p, w);
        let d = smoothed_delta(p, w);
        if d > 0.0 {
            let wgt = d * gn[i];
            area += wgt;
            kap += wgt * kappa.get(i);
        }
    }
    Measures { volume: vol * cell, area: area * cell, kappa_avg: if area > 0.0 { kap / area } else { 0.0 } }
}

/// Measures with curvature taken directly from [`curvature_field`].
pub fn measure_jet(jet: &JetField) -> Measures {
    let w = DELTA_WIDTH * jet.grid().h();
    let mask: Vec<bool> = jet.phi.values().iter().map(|p| p.abs() < w).collect();
    let (k, _) = curvature_field(jet, Some(&mask));
    interface_measures(jet, &k)
}

/// Number of face-connected components of the region `φ < 0` (periodic).
pub fn count_components(phi: &ScalarField) -> usize {
    let grid = *phi.grid();
    let v = phi.values();
    let faces = grid.face_offsets();
    let mut seen = vec![false; grid.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..grid.len() {
        if seen[start] || v[start] >= 0.0 {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let idx = grid.multi_index(i);
            for &o in &faces {
                let j = grid.offset_index(idx, o);
                if !seen[j] && v[j] < 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// Smallest width of the region `φ < 0` measured along axis 1 through the
/// line `{y = 0, z = 0}`, scanning axis-0 positions in `[x0, x1]`.
///
/// Returns zero if the scan line leaves the negative region (pinched off).
pub fn neck_width(jet: &JetField, x0: f64, x1: f64) -> f64 {
    let h = jet.grid().h();
    let s = JetSampler::new(jet);
    let samples = ((x1 - x0) / (0.125 * h)).ceil().max(1.0) as usize;
    let mut best = f64::INFINITY;
    for k in 0..=samples {
        let x = x0 + (x1 - x0) * k as f64 / samples as f64;
        if s.value([x, 0.0, 0.0]) >= 0.0 {
            return 0.0;
        }
        let half = |dir: f64| {
            let step = 0.125 * h;
            let mut a = 0.0;
            let mut b = step;
            while s.value([x, dir * b, 0.0]) < 0.0 {
                a = b;
                b += step;
                if b > 4.0 {
                    return b;
                }
            }
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if s.value([x, dir * m, 0.0]) < 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        best = best.min(half(1.0) + half(-1.0));
    }
    best
}

/// Sign changes of the jet interpolant along the edge of `cell` in direction `axis`
/// that starts at the cell's lower corner, sampled at `resolution` points.
pub fn edge_crossings(jet: &JetField, cell: [usize; 3], axis: usize, resolution: usize) -> usize {
    let ip = build_jet_interpolant(jet, cell);
    let mut t = [0.0; 3];
    let mut prev = ip.eval_local(t) < 0.0;
    let mut count = 0;
    for k in 1..=resolution {
        t[axis] = k as f64 / resolution as f64;
        let cur = ip.eval_local(t) < 0.0;
        if cur != prev {
            count += 1;
        }
        prev = cur;
    }
    count
}

/// Sign changes of the linear interpolant of nodal values along the same edge.
pub fn linear_edge_crossings(phi: &ScalarField, cell: [usize; 3], axis: usize) -> usize {
    let grid = phi.grid();
    let a = phi.get(grid.flat(cell));
    let mut o = [0isize; 3];
    o[axis] = 1;
    let b = phi.get(grid.offset_index(cell, o));
    usize::from((a < 0.0) != (b < 0.0))
}
