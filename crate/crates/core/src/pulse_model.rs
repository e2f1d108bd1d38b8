//! Closed-form transmitter model.
//!
//! The gating window releases a plug of width `W_g = k_g T_g u_m` at the
//! supply concentration. At the sampling point the pulse is Gaussian with
//!
//! ```text
//! A_p = k_a A_g W_g / (x_s - x_g)
//! W_p = k_w (x_s - x_g) W_g          (full width at half maximum)
//! T_d = k_t (x_s - x_g) / u_m
//! ```
//!
//! A train of `N` injections spaced `T_p` apart is the superposition of
//! copies of that pulse shifted by `d = T_p (x_s - x_g) / T_d`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulics::{HydraulicsError, MeanVelocity};
use crate::params::SystemParameters;

/// `2 sqrt(2 ln 2)`, the FWHM of a unit-variance Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Coefficient multiplying `W_p²` in the Gaussian exponent,
/// `2 / FWHM_PER_SIGMA² = 1 / (4 ln 2) ≈ 0.3607`. Often quoted as 0.36.
pub const FWHM_EXPONENT_COEFF: f64 = 2.0 / (FWHM_PER_SIGMA * FWHM_PER_SIGMA);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("sampling point coincides with generation point")]
    DegenerateDistance,
    #[error("invalid pulse train: {0}")]
    InvalidTrain(String),
    #[error("fitting parameter {name} = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error(transparent)]
    Hydraulics(#[from] HydraulicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Published constants; their unit convention is not SI.
    Published,
    /// Produced by this crate's calibration.
    Refit,
    /// Supplied by hand.
    Custom,
}

/// Search box for the four fitting constants, in `[k_g, k_a, k_w, k_t]` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            lo: [0.1, 0.1, 0.01, 0.1],
            hi: [100.0, 100.0, 100.0, 10.0],
        }
    }
}

impl FitBounds {
    pub fn contains(&self, k: &[f64; 4]) -> bool {
        (0..4).all(|i| k[i] >= self.lo[i] && k[i] <= self.hi[i])
    }
}

/// The four calibration constants. `k_w` carries units of 1/m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittingParams {
    pub k_g: f64,
    pub k_a: f64,
    pub k_w: f64,
    pub k_t: f64,
    pub provenance: Provenance,
    pub bounds: FitBounds,
}

impl FittingParams {
    pub const NAMES: [&'static str; 4] = ["k_g", "k_a", "k_w", "k_t"];

    /// Published values (k_g = 14.6, k_a = 20.16, k_w = 0.7, k_t = 0.683).
    pub fn published() -> Self {
        Self {
            k_g: 14.6,
            k_a: 20.16,
            k_w: 0.7,
            k_t: 0.683,
            provenance: Provenance::Published,
            bounds: FitBounds::default(),
        }
    }

    pub fn from_array(
        k: [f64; 4],
        provenance: Provenance,
        bounds: FitBounds,
    ) -> Result<Self, ModelError> {
        for i in 0..4 {
            if !(k[i] >= bounds.lo[i] && k[i] <= bounds.hi[i]) {
                return Err(ModelError::OutOfBounds {
                    name: Self::NAMES[i],
                    value: k[i],
                    lo: bounds.lo[i],
                    hi: bounds.hi[i],
                });
            }
        }
        Ok(Self {
            k_g: k[0],
            k_a: k[1],
            k_w: k[2],
            k_t: k[3],
            provenance,
            bounds,
        })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.k_g, self.k_a, self.k_w, self.k_t]
    }
}

/// Pulse leaving the gating junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratedPulse {
    /// Amplitude, equal to the supply concentration.
    pub amplitude: f64,
    /// Width, m.
    pub width: f64,
}

/// Amplitude/width/delay triple of a pulse at the sampling point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    /// Peak concentration, mol/m³.
    #[serde(rename = "A_p")]
    pub amplitude: f64,
    /// Full width at half maximum, m.
    #[serde(rename = "W_p")]
    pub width: f64,
    /// Travel time from the generation to the sampling point, s.
    #[serde(rename = "T_d")]
    pub delay: f64,
    /// Peak position, m.
    #[serde(rename = "x_s")]
    pub center: f64,
}

impl PulseShape {
    pub fn sigma(&self) -> f64 {
        self.width / FWHM_PER_SIGMA
    }

    pub fn triple(&self) -> [f64; 3] {
        [self.amplitude, self.width, self.delay]
    }

    /// Concentration of the Gaussian at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        eval_pulse(self, x)
    }
}

/// Options for the analytical model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ModelOptions {
    pub velocity: MeanVelocity,
}

/// Generated pulse at the junction.
pub fn generated_pulse(
    p: &SystemParameters,
    k: &FittingParams,
    opts: ModelOptions,
) -> Result<GeneratedPulse, ModelError> {
    let u_m = opts.velocity.evaluate(p)?;
    Ok(GeneratedPulse {
        amplitude: p.supply_concentration,
        width: k.k_g * p.gate_duration * u_m,
    })
}

/// Pulse shape at the sampling point.
pub fn propagated_pulse(
    p: &SystemParameters,
    k: &FittingParams,
    opts: ModelOptions,
) -> Result<PulseShape, ModelError> {
    let distance = p.propagation_distance();
    if distance == 0.0 {
        return Err(ModelError::DegenerateDistance);
    }
    let u_m = opts.velocity.evaluate(p)?;
    let gen = generated_pulse(p, k, opts)?;
    Ok(PulseShape {
        amplitude: k.k_a * gen.amplitude * gen.width / distance,
        width: k.k_w * distance * gen.width,
        delay: k.k_t * distance / u_m,
        center: p.sampling_point,
    })
}

/// Gaussian profile `A_p exp(-(x - x_s)² / (2 sigma²))`, sigma = W_p / 2.3548.
pub fn eval_pulse(shape: &PulseShape, x: f64) -> f64 {
    let s = shape.sigma();
    let dx = x - shape.center;
    shape.amplitude * (-dx * dx / (2.0 * s * s)).exp()
}

/// Width used inside each train member's exponent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainWidth {
    /// `2 sigma²` with sigma = W_p / 2.3548, consistent with the single pulse.
    #[default]
    Sigma,
    /// `2 W_p²`, the literal successive-pulse expression.
    FullWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainMember {
    pub index: usize,
    pub peak: f64,
}

/// `N` identical pulses whose peaks sit `spacing` apart, the first at x_s.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseTrain {
    pub shape: PulseShape,
    pub spacing: f64,
    pub period: f64,
    pub members: Vec<TrainMember>,
    pub width_convention: TrainWidth,
}

impl PulseTrain {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Superposed concentration at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let denom = match self.width_convention {
            TrainWidth::Sigma => 2.0 * self.shape.sigma().powi(2),
            TrainWidth::FullWidth => 2.0 * self.shape.width.powi(2),
        };
        self.members
            .iter()
            .map(|m| {
                let dx = x - m.peak;
                self.shape.amplitude * (-dx * dx / denom).exp()
            })
            .sum()
    }
}

/// Distance travelled during one period: `d = T_p (x_s - x_g) / T_d`.
pub fn train_spacing(p: &SystemParameters, shape: &PulseShape) -> f64 {
    p.gate_period * p.propagation_distance() / shape.delay
}

/// Successive-pulse profile for `count` injections.
pub fn pulse_train(
    p: &SystemParameters,
    k: &FittingParams,
    count: usize,
    opts: ModelOptions,
    width_convention: TrainWidth,
) -> Result<PulseTrain, ModelError> {
    if count == 0 {
        return Err(ModelError::InvalidTrain("pulse count must be >= 1".into()));
    }
    if !p.supports_pulse_train() {
        return Err(ModelError::InvalidTrain(format!(
            "period T_p = {} s must exceed the gating-off duration T_g = {} s",
            p.gate_period, p.gate_duration
        )));
    }
    let shape = propagated_pulse(p, k, opts)?;
    let spacing = train_spacing(p, &shape);
    let members = (0..count)
        .map(|n| TrainMember {
            index: n + 1,
            peak: p.sampling_point - n as f64 * spacing,
        })
        .collect();
    Ok(PulseTrain {
        shape,
        spacing,
        period: p.gate_period,
        members,
        width_convention,
    })
}
