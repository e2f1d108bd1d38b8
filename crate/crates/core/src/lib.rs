//! Hydrodynamic-gating molecular-communication transmitter.
//!
//! A closed-form pulse model ([`pulse_model`]) driven by a lumped hydraulic
//! circuit ([`hydraulics`]), a 2D finite-volume reference solver
//! ([`transport_oracle`]), FWHM pulse extraction ([`metrics`]) and a
//! genetic-algorithm fit of the model constants against the solver
//! ([`calibration`]).

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod calibration;
pub mod hydraulics;
pub mod metrics;
pub mod params;
pub mod pulse_model;
pub mod transport_oracle;

pub use params::SystemParameters;
pub use pulse_model::{FittingParams, PulseShape};
