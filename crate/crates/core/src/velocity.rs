//! Curvature-driven normal velocities and volume correction.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{attach_at_closest_points, curvature_field, extend_to_band, interface_measures, Reinitialized};
use crate::grid::{norm, Point, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityModel {
    /// Mean curvature flow, `u = -s κ n`.
    Mcf,
    /// Volume-conserving flow, `u = -(κ - κ_avg) n`.
    Vcmcf,
    Zero,
}

impl FromStr for VelocityModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcf" => Ok(Self::Mcf),
            "vcmcf" => Ok(Self::Vcmcf),
            "zero" => Ok(Self::Zero),
            _ => Err(Error::Usage(format!("unknown velocity model `{s}`"))),
        }
    }
}

/// Velocity field on the grid plus the interface data it was built from.
#[derive(Debug, Clone)]
pub struct VelocityOutput {
    pub field: VectorField,
    pub kappa_avg: f64,
    pub max_speed: f64,
    /// Nodes whose curvature was zeroed because of a degenerate gradient.
    pub degenerate: usize,
    /// True when the velocity vanishes outside the band.
    pub band_supported: bool,
}

/// Anything that can produce the step's advecting velocity.
pub trait VelocityProvider: Sync {
    /// Builds the velocity at time `t` for a freshly reinitialised jet.
    /// Implementations may record curvature and speed on the samples.
    fn velocity(&self, reinit: &mut Reinitialized, t: f64) -> Result<VelocityOutput>;
}

/// Largest curvature the grid can represent, per principal direction, in
/// units of `1/h`. Curvature at merging and pinching points is clipped to it.
pub const CURVATURE_LIMIT: f64 = 1.0;

/// Default mean-curvature scale: 1 in 2D, 1/2 in 3D.
pub fn default_scale(dim: usize) -> f64 {
    if dim == 3 {
        0.5
    } else {
        1.0
    }
}

impl VelocityProvider for VelocityModel {
    fn velocity(&self, reinit: &mut Reinitialized, _t: f64) -> Result<VelocityOutput> {
        curvature_velocity(*self, reinit)
    }
}

/// Normal velocity from the curvature at each band node's closest point.
///
/// The curvature field is interpolated at the foot point, so the speed is
/// constant along normals, and the velocity vector uses the interface normal
/// at the foot. Nodes outside the band get zero velocity.
pub fn curvature_velocity(model: VelocityModel, reinit: &mut Reinitialized) -> Result<VelocityOutput> {
    let grid = *reinit.jet.grid();
    let dim = grid.dim();
    let (kappa, degenerate) = curvature_field(&reinit.jet, Some(&reinit.band));
    let at_foot = attach_at_closest_points(&mut reinit.samples, &kappa);
    let limit = CURVATURE_LIMIT * (dim - 1) as f64 / grid.h();
    for (s, k) in reinit.samples.samples.iter_mut().zip(&at_foot) {
        s.kappa = k.clamp(-limit, limit);
    }
    let extended = extend_to_band(&grid, &reinit.samples, |s| s.kappa);
    let kappa_avg = interface_measures(&reinit.jet, &extended).kappa_avg;
    let scale = default_scale(dim);
    let mut field = VectorField::zeros(grid);
    let mut max_speed: f64 = 0.0;
    for s in reinit.samples.samples.iter_mut() {
        let speed = match model {
            VelocityModel::Mcf => -scale * s.kappa,
            VelocityModel::Vcmcf => -(s.kappa - kappa_avg),
            VelocityModel::Zero => 0.0,
        };
        s.speed = speed;
        let mut u = [0.0; 3];
        for a in 0..dim {
            u[a] = speed * s.normal[a];
        }
        max_speed = max_speed.max(speed.abs());
        field.set(s.node, u);
    }
    if !field.is_finite() {
        return Err(Error::Numerical("non-finite velocity".into()));
    }
    Ok(VelocityOutput { field, kappa_avg, max_speed, degenerate, band_supported: true })
}

/// Prescribed velocity `f(x, t)` sampled at every node.
pub struct PrescribedVelocity<F>(pub F);

impl<F: Fn(Point, f64) -> Point + Sync> VelocityProvider for PrescribedVelocity<F> {
    fn velocity(&self, reinit: &mut Reinitialized, t: f64) -> Result<VelocityOutput> {
        let grid = *reinit.jet.grid();
        let vals: Vec<Point> = (0..grid.len()).into_par_iter().map(|i| (self.0)(grid.position(i), t)).collect();
        let mut field = VectorField::zeros(grid);
        let mut max_speed: f64 = 0.0;
        for (i, u) in vals.into_iter().enumerate() {
            max_speed = max_speed.max(norm(u));
            field.set(i, u);
        }
        Ok(VelocityOutput { field, kappa_avg: 0.0, max_speed, degenerate: 0, band_supported: false })
    }
}

/// Rejects steps whose displacement could leave the band.
pub fn check_band_cfl(max_speed: f64, dt: f64, h: f64, band_width: f64) -> Result<()> {
    if dt * max_speed >= (band_width - 1.0) * h {
        return Err(Error::Numerical(format!(
            "displacement dt*|u| = {:.3e} exceeds (band - 1) h = {:.3e}",
            dt * max_speed,
            (band_width - 1.0) * h
        )));
    }
    Ok(())
}

/// Shifts the level set so the enclosed measure returns to `target`.
///
/// Returns the applied shift `(V - target) / A`. Closest points move with the
/// offset interface, which keeps the samples consistent with the new `φ`.
pub fn volume_correct(reinit: &mut Reinitialized, target: f64) -> Result<f64> {
    let grid = *reinit.jet.grid();
    let zero = crate::grid::ScalarField::zeros(grid);
    let m = interface_measures(&reinit.jet, &zero);
    if m.area < 1e-12 * grid.h() {
        return Err(Error::Numerical(format!("interface measure {:.3e} too small for volume correction", m.area)));
    }
    let c = (m.volume - target) / m.area;
    for v in reinit.jet.phi.values_mut() {
        *v += c;
    }
    for s in reinit.samples.samples.iter_mut() {
        s.distance += c;
        for a in 0..grid.dim() {
            s.point[a] -= c * s.normal[a];
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{reinitialize, BandSpec};
    use crate::grid::GridSpec;
    use crate::interpolation::{JetField, JetOrder};

    fn circle(g: GridSpec, r: f64, order: JetOrder) -> JetField {
        JetField::from_fn(g, order, move |p| norm(p) - r, |p| {
            let n = norm(p).max(1e-12);
            [p[0] / n, p[1] / n, p[2] / n]
        })
    }

    #[test]
    fn mcf_on_circle_points_inward_with_unit_curvature() {
        let g = GridSpec::cube(2, -2.0, 2.0, 64).unwrap();
        for order in [JetOrder::Zero, JetOrder::P1] {
            let mut r = reinitialize(&circle(g, 1.0, order), BandSpec::default()).unwrap();
            let out = curvature_velocity(VelocityModel::Mcf, &mut r).unwrap();
            for s in &r.samples.samples {
                assert!((s.speed + 1.0).abs() < 5e-3, "{order:?} {}", s.speed);
                let u = out.field.at(s.node);
                let p = g.position(s.node);
                assert!(u[0] * p[0] + u[1] * p[1] < 0.0);
            }
            assert!((out.kappa_avg - 1.0).abs() < 5e-3);
        }
    }

    #[test]
    fn vcmcf_vanishes_on_circle_and_outside_band() {
        let g = GridSpec::cube(2, -2.0, 2.0, 64).unwrap();
        let mut r = reinitialize(&circle(g, 1.0, JetOrder::P1), BandSpec::default()).unwrap();
        let out = curvature_velocity(VelocityModel::Vcmcf, &mut r).unwrap();
        assert!(out.max_speed < 5e-3);
        for i in 0..g.len() {
            if !r.band[i] {
                assert!(out.field.is_zero_at(i));
            }
        }
    }

    #[test]
    fn sphere_mcf_uses_half_scale() {
        let g = GridSpec::cube(3, -2.0, 2.0, 32).unwrap();
        let mut r = reinitialize(&circle(g, 1.0, JetOrder::P1), BandSpec::default()).unwrap();
        curvature_velocity(VelocityModel::Mcf, &mut r).unwrap();
        let near: Vec<f64> = r.samples.samples.iter().filter(|s| s.distance.abs() < g.h()).map(|s| s.speed).collect();
        let mean = near.iter().sum::<f64>() / near.len() as f64;
        assert!((mean + 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn curvature_is_clipped_at_grid_scale() {
        let g = GridSpec::cube(2, -2.0, 2.0, 64).unwrap();
        let mut r = reinitialize(&circle(g, 0.05, JetOrder::P1), BandSpec::default()).unwrap();
        let out = curvature_velocity(VelocityModel::Mcf, &mut r).unwrap();
        assert!(out.max_speed <= 1.0 / g.h() + 1e-12);
        assert!(r.samples.samples.iter().all(|s| s.kappa.abs() <= 1.0 / g.h() + 1e-12));
    }

    #[test]
    fn band_cfl_guard() {
        assert!(check_band_cfl(1.0, 0.1, 0.05, 4.0).is_ok());
        assert!(check_band_cfl(1.0, 0.2, 0.05, 4.0).is_err());
    }

    #[test]
    fn volume_correction_restores_area() {
        let g = GridSpec::cube(2, -2.0, 2.0, 64).unwrap();
        let reference = interface_measures(&circle(g, 1.0, JetOrder::P1), &crate::grid::ScalarField::zeros(g)).volume;
        let mut r = reinitialize(&circle(g, 1.01, JetOrder::P1), BandSpec::default()).unwrap();
        let c = volume_correct(&mut r, reference).unwrap();
        assert!((c - 0.01).abs() < 1e-3, "{c}");
        let after = interface_measures(&r.jet, &crate::grid::ScalarField::zeros(g)).volume;
        assert!((after - reference).abs() < 1e-3 * reference);
        let s = r.samples.samples[0];
        assert!((norm(s.point) - 1.0).abs() < 2e-3);
    }

    #[test]
    fn volume_correction_needs_an_interface() {
        let g = GridSpec::cube(2, -2.0, 2.0, 16).unwrap();
        let mut r = reinitialize(&circle(g, 1.0, JetOrder::Zero), BandSpec::default()).unwrap();
        for v in r.jet.phi.values_mut() {
            *v = 1.0;
        }
        assert!(volume_correct(&mut r, 1.0).is_err());
    }
}
