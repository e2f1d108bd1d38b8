//! Two-dimensional convection–diffusion reference solver for the cross
//! junction.

pub mod grid;
pub mod measure;
pub mod run;
pub mod solver;
pub mod velocity;

use thiserror::Error;

pub use grid::{build_grid, Grid, PatchKind, Region};
pub use measure::{
    measure_many, measure_scenario, OracleConfig, OracleMeasurement, ProbeKind, ProbeMeasurement,
    WindowDelays,
};
pub use run::{run, run_params, GatingSchedule, RunOutput, RunRequest};
pub use solver::{stability_dt, BoundaryValues, ConcentrationField, StepFlux, Stepper};
pub use velocity::{ProfileConvention, VelocityField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("{cells_across} cells across the channel is too coarse (need at least 8)")]
    ResolutionTooCoarse { cells_across: usize },
    #[error("time step {dt} s exceeds the stability limit {limit} s")]
    UnstableTimestep { dt: f64, limit: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid gating schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid probe: {0}")]
    InvalidProbe(String),
    #[error("pulse measurement failed at {what}: {source}")]
    Measurement {
        what: String,
        source: crate::metrics::MetricsError,
    },
}
