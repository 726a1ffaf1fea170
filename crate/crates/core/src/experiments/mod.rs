//! Experiment configuration, drivers and result analysis.

pub mod config;
pub mod convergence;
pub mod report;
pub mod runs;
pub mod shapes;

pub use config::{DtSpec, ExperimentConfig, GridParams, Method, ShapeSpec};
pub use convergence::{convergence_order, ConvergenceReport, Regime};
pub use report::{BenchEntry, ErrorMetrics, RunReport, StepRecord, SweepEntry, Verdict};
pub use runs::{
    circle_error, classify, exact_radius, find_dt_max, run_benchmark, run_cassini, run_collapse_circle, run_convergence,
    run_evolution, run_multibody, run_stability_sweep, stability_run, Simulation,
};
pub use shapes::init_shape;
