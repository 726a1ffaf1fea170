//! Run configuration, shared by the CLI and the acceptance suite.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::WenoTimeForm;
use crate::error::{Error, Result};
use crate::geometry::BandSpec;
use crate::grid::{GridSpec, MIN_NODES};
use crate::interpolation::JetOrder;
use crate::smoothing::SchemeConfig;
use crate::transport::{TimeOrder, DEFAULT_EPS};
use crate::velocity::VelocityModel;

/// How the level set is evolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Jet scheme with implicit smoothing.
    Semijet,
    /// Explicit jet scheme (`β = 0`).
    Jet,
    /// WENO5 finite differences on the values only.
    Weno,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "semijet" => Ok(Self::Semijet),
            "jet" => Ok(Self::Jet),
            "weno" => Ok(Self::Weno),
            _ => Err(Error::Usage(format!("unknown method `{s}` (expected semijet, jet or weno)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Semijet => "semijet",
            Self::Jet => "jet",
            Self::Weno => "weno",
        })
    }
}

/// Time step, either absolute or as a multiple of `h²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtSpec {
    Absolute(f64),
    HSquared(f64),
}

impl DtSpec {
    pub fn resolve(&self, h: f64) -> f64 {
        match *self {
            Self::Absolute(dt) => dt,
            Self::HSquared(c) => c * h * h,
        }
    }
}

/// Grid parameters as given on the command line.
///
/// `nodes` counts nodes per axis on `[-half_width, half_width]` including both
/// ends, so the periodic grid has `nodes - 1` unique nodes. A bare `h` gives
/// `ceil(2 half_width / h)` nodes centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    pub dim: usize,
    pub nodes: Option<usize>,
    pub h: Option<f64>,
    pub half_width: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { dim: 2, nodes: Some(65), h: None, half_width: 2.0 }
    }
}

impl GridParams {
    pub fn with_nodes(dim: usize, nodes: usize) -> Self {
        Self { dim, nodes: Some(nodes), h: None, half_width: 2.0 }
    }

    pub fn with_spacing(dim: usize, h: f64) -> Self {
        Self { dim, nodes: None, h: Some(h), half_width: 2.0 }
    }

    pub fn build(&self) -> Result<GridSpec> {
        if !(self.half_width > 0.0) {
            return Err(Error::Usage("grid half width must be positive".into()));
        }
        match (self.nodes, self.h) {
            (Some(n), None) => {
                if n < MIN_NODES + 1 {
                    return Err(Error::Usage(format!("grid needs at least {} nodes per axis", MIN_NODES + 1)));
                }
                GridSpec::cube(self.dim, -self.half_width, self.half_width, n - 1)
            }
            (None, Some(h)) => {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::Usage(format!("grid spacing must be positive, got {h}")));
                }
                let n = (2.0 * self.half_width / h - 1e-9).ceil() as usize;
                let o = -0.5 * n as f64 * h;
                GridSpec::new(self.dim, &vec![o; self.dim], &vec![n; self.dim], h)
            }
            (Some(_), Some(_)) => Err(Error::Usage("give either a node count or a spacing, not both".into())),
            (None, None) => Err(Error::Usage("grid needs a node count or a spacing".into())),
        }
    }
}

/// Initial interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ShapeSpec {
    Circle { radius: f64, center: [f64; 3] },
    /// Two perpendicular ellipses and a circle.
    EllipseSet,
    Cassini { a: f64, b: f64 },
    Star { radius: f64, amplitude: f64 },
}

impl ShapeSpec {
    /// Default parameters for a shape name.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "circle" => Ok(Self::Circle { radius: 1.0, center: [0.0; 3] }),
            "ellipse-set" => Ok(Self::EllipseSet),
            "cassini" => Ok(Self::Cassini { a: 1.29, b: 1.3 }),
            "star" => Ok(Self::Star { radius: 1.0, amplitude: 0.3 }),
            _ => Err(Error::Usage(format!("unknown shape `{name}` (expected circle, ellipse-set, cassini or star)"))),
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub shape: ShapeSpec,
    pub grid: GridParams,
    pub method: Method,
    pub jet: JetOrder,
    pub time_order: TimeOrder,
    pub beta: f64,
    pub eps: f64,
    pub band_width: f64,
    pub dt: DtSpec,
    /// Ignored when `steps` is set.
    pub end_time: Option<f64>,
    pub steps: Option<usize>,
    pub velocity: VelocityModel,
    pub volume_correction: bool,
    pub weno_form: WenoTimeForm,
    /// Write `interface_NNN.csv` every this many steps (and at the end).
    pub snapshot_every: Option<usize>,
    pub out_dir: Option<PathBuf>,
    /// Not used by the numerics.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "collapse-circle".into(),
            shape: ShapeSpec::Circle { radius: 1.0, center: [0.0; 3] },
            grid: GridParams::default(),
            method: Method::Semijet,
            jet: JetOrder::P1,
            time_order: TimeOrder::Second,
            beta: 0.5,
            eps: DEFAULT_EPS,
            band_width: BandSpec::default().width,
            dt: DtSpec::HSquared(1.0),
            end_time: Some(0.375),
            steps: None,
            velocity: VelocityModel::Mcf,
            volume_correction: false,
            weno_form: WenoTimeForm::Bdf2,
            snapshot_every: None,
            out_dir: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn grid_spec(&self) -> Result<GridSpec> {
        self.grid.build()
    }

    pub fn band(&self) -> Result<BandSpec> {
        BandSpec::new(self.band_width)
    }

    pub fn dt_for(&self, h: f64) -> f64 {
        self.dt.resolve(h)
    }

    /// Number of steps: `steps` if given, else `end_time / dt` rounded.
    pub fn step_count(&self, h: f64) -> Result<usize> {
        if let Some(n) = self.steps {
            return Ok(n);
        }
        let t = self.end_time.ok_or_else(|| Error::Usage("need an end time or a step count".into()))?;
        Ok(((t / self.dt_for(h)).round() as usize).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid_spec()?;
        let dt = self.dt_for(g.h());
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Usage(format!("time step must be positive, got {dt}")));
        }
        if let Some(t) = self.end_time {
            if !(t > 0.0) {
                return Err(Error::Usage(format!("end time must be positive, got {t}")));
            }
        }
        if self.steps == Some(0) {
            return Err(Error::Usage("step count must be positive".into()));
        }
        if !(self.eps > 0.0 && self.eps < 0.5 * g.h()) {
            return Err(Error::Usage(format!("eps must lie in (0, h/2), got {}", self.eps)));
        }
        self.band()?;
        self.scheme(g.h()).validate()
    }

    /// Scheme parameters for grid spacing `h`.
    pub fn scheme(&self, h: f64) -> SchemeConfig {
        let beta = if self.method == Method::Jet { 0.0 } else { self.beta };
        let mut s = SchemeConfig::new(self.dt_for(h), self.time_order, beta);
        s.eps = self.eps;
        s.band = BandSpec { width: self.band_width };
        s.subgrid_band = Some(self.band_width);
        s.volume_correction = self.volume_correction;
        s
    }
}
