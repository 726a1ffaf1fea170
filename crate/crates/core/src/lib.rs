//! Semi-Lagrangian jet level-set solver with implicit smoothing.

pub mod error;
pub mod grid;
pub mod interpolation;
pub mod transport;
pub mod geometry;
pub mod velocity;
pub mod smoothing;
pub mod baseline;
pub mod experiments;

pub use error::{Error, Result};
