//! Lumped hydraulic circuit of the cross junction.
//!
//! Each channel is a Hagen–Poiseuille resistor `R = 128 mu l / (pi w^4)`
//! and the inlets are flow sources. With gating ON, supply and gating flows
//! merge at the junction and divide between the gating outlet and the
//! propagation channel. With gating OFF the gating inlet becomes a passive
//! branch in parallel with the gating outlet.
//!
//! The model is two-dimensional, so flow rates are per unit depth
//! (`Q = w_ch * u`).

use serde::Serialize;
use thiserror::Error;

use crate::params::SystemParameters;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydraulicsError {
    #[error("argument {name} must be > 0, got {value}")]
    NonPositiveArgument { name: &'static str, value: f64 },
    #[error("averaging duration {t} s is shorter than the gating-off duration {gate} s")]
    DurationTooShort { t: f64, gate: f64 },
}

/// Hydraulic resistance of a channel of length `length` and width `width`.
pub fn channel_resistance(viscosity: f64, length: f64, width: f64) -> Result<f64, HydraulicsError> {
    for (name, value) in [("mu", viscosity), ("l", length), ("w", width)] {
        if !(value > 0.0) {
            return Err(HydraulicsError::NonPositiveArgument { name, value });
        }
    }
    Ok(128.0 * viscosity * length / (std::f64::consts::PI * width.powi(4)))
}

/// Whether the gating inlet is driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum GatingMode {
    On,
    Off,
}

/// Resistances and inlet flows of one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HydraulicNetwork {
    pub r_supply: f64,
    pub r_gate_inlet: f64,
    pub r_gate_outlet: f64,
    pub r_propagation: f64,
    /// Supply inflow, m²/s per unit depth.
    pub q_supply: f64,
    /// Gating inflow when ON, m²/s per unit depth.
    pub q_gate: f64,
    /// Cross-section (`w_ch` times unit depth), m².
    pub area: f64,
}

/// Volumetric flow through every branch for one gating mode. Positive
/// values follow the nominal direction: supply and propagation along +x,
/// gating inlet and outlet along -y (from inlet towards outlet).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchFlows {
    pub supply: f64,
    pub gate_inlet: f64,
    pub gate_outlet: f64,
    pub propagation: f64,
}

impl HydraulicNetwork {
    pub fn new(p: &SystemParameters) -> Self {
        let r = |l: f64| {
            channel_resistance(p.viscosity, l, p.channel_width)
                .expect("validated parameters have positive lengths")
        };
        let area = p.channel_width;
        Self {
            r_supply: r(p.supply_length),
            r_gate_inlet: r(p.gate_inlet_length),
            r_gate_outlet: r(p.gate_outlet_length),
            r_propagation: r(p.propagation_length),
            q_supply: area * p.supply_velocity,
            q_gate: area * p.velocity_ratio * p.supply_velocity,
            area,
        }
    }

    /// Parallel combination of the two gating branches.
    pub fn r_gate_parallel(&self) -> f64 {
        self.r_gate_inlet * self.r_gate_outlet / (self.r_gate_inlet + self.r_gate_outlet)
    }

    pub fn flows(&self, mode: GatingMode) -> BranchFlows {
        match mode {
            GatingMode::On => {
                let total = self.q_supply + self.q_gate;
                let propagation =
                    self.r_gate_outlet * total / (self.r_gate_outlet + self.r_propagation);
                BranchFlows {
                    supply: self.q_supply,
                    gate_inlet: self.q_gate,
                    gate_outlet: total - propagation,
                    propagation,
                }
            }
            GatingMode::Off => {
                let rg = self.r_gate_parallel();
                let propagation = rg * self.q_supply / (rg + self.r_propagation);
                let diverted = self.q_supply - propagation;
                let outlet =
                    diverted * self.r_gate_inlet / (self.r_gate_inlet + self.r_gate_outlet);
                // The undriven gating inlet carries the rest back out, against
                // its nominal direction.
                BranchFlows {
                    supply: self.q_supply,
                    gate_inlet: -(diverted - outlet),
                    gate_outlet: outlet,
                    propagation,
                }
            }
        }
    }

    /// Mean velocity in the propagation channel.
    pub fn propagation_velocity(&self, mode: GatingMode) -> f64 {
        self.flows(mode).propagation / self.area
    }
}

/// Mean propagation-channel velocity with gating ON (circuit form).
pub fn mean_velocity_on(p: &SystemParameters) -> f64 {
    let net = HydraulicNetwork::new(p);
    net.r_gate_outlet * p.supply_velocity * (p.velocity_ratio + 1.0)
        / (net.r_gate_outlet + net.r_propagation)
}

/// `l_go u_s (r_u + 1) / l_ch`: the ON velocity with `l_go + l_p` replaced
/// by `l_ch`, exact when `l_s = l_go`.
pub fn mean_velocity_closed_form(p: &SystemParameters) -> f64 {
    p.gate_outlet_length * p.supply_velocity * (p.velocity_ratio + 1.0) / p.channel_length
}

/// Mean propagation-channel velocity with gating OFF.
pub fn mean_velocity_off(p: &SystemParameters) -> f64 {
    let net = HydraulicNetwork::new(p);
    let rg = net.r_gate_parallel();
    rg * p.supply_velocity / (rg + net.r_propagation)
}

/// How the overall mean propagation velocity is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub enum MeanVelocity {
    /// `l_go u_s (r_u + 1) / l_ch`, the OFF contribution neglected.
    #[default]
    Approximate,
    /// ON velocity from the full circuit.
    CircuitOn,
    /// Exact time average over a window of the given length (s).
    TimeAveraged(f64),
}

/// Overall mean propagation velocity over a period `t` that contains one
/// gating-off interval.
pub fn overall_mean_velocity(p: &SystemParameters, t: f64) -> Result<f64, HydraulicsError> {
    if t < p.gate_duration {
        return Err(HydraulicsError::DurationTooShort {
            t,
            gate: p.gate_duration,
        });
    }
    let on = mean_velocity_on(p);
    if p.gate_duration == 0.0 {
        return Ok(on);
    }
    let off = mean_velocity_off(p);
    Ok(((t - p.gate_duration) * on + p.gate_duration * off) / t)
}

impl MeanVelocity {
    pub fn evaluate(self, p: &SystemParameters) -> Result<f64, HydraulicsError> {
        match self {
            Self::Approximate => Ok(mean_velocity_closed_form(p)),
            Self::CircuitOn => Ok(mean_velocity_on(p)),
            Self::TimeAveraged(t) => overall_mean_velocity(p, t),
        }
    }
}

/// Summary printed by `hydrogate hydraulics`.
#[derive(Debug, Clone, Serialize)]
pub struct HydraulicsReport {
    #[serde(rename = "R_s")]
    pub r_s: f64,
    #[serde(rename = "R_gi")]
    pub r_gi: f64,
    #[serde(rename = "R_go")]
    pub r_go: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    pub u_on: f64,
    pub u_off: f64,
    pub u_m: f64,
}

impl HydraulicsReport {
    pub fn new(p: &SystemParameters) -> Self {
        let net = HydraulicNetwork::new(p);
        Self {
            r_s: net.r_supply,
            r_gi: net.r_gate_inlet,
            r_go: net.r_gate_outlet,
            r_p: net.r_propagation,
            u_on: mean_velocity_on(p),
            u_off: mean_velocity_off(p),
            u_m: mean_velocity_closed_form(p),
        }
    }
}
