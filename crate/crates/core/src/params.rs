//! System parameters of the gating transmitter and the 30-scenario
//! calibration protocol.
//!
//! All values are SI: metres, seconds, mol/m³, Pa·s. The JSON form uses
//! the conventional symbols (`c_s`, `u_s`, `r_u`, ...) as keys.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for the `l_ch = l_s + l_p` identity.
pub const LENGTH_IDENTITY_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("channel length mismatch: l_ch = {l_ch} but l_s + l_p = {sum}")]
    LengthMismatch { l_ch: f64, sum: f64 },
    #[error("unknown parameter name '{0}'")]
    UnknownParameter(String),
    #[error("config I/O error: {0}")]
    Io(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ParamError {
    ParamError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Every physical input of one transmitter configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParameters {
    /// Supply concentration, mol/m³.
    #[serde(rename = "c_s")]
    pub supply_concentration: f64,
    /// Mean supply inlet velocity, m/s.
    #[serde(rename = "u_s")]
    pub supply_velocity: f64,
    /// Gating-to-supply velocity ratio.
    #[serde(rename = "r_u")]
    pub velocity_ratio: f64,
    /// Optional explicit gating velocity; must agree with `r_u * u_s`.
    #[serde(rename = "u_g", default, skip_serializing_if = "Option::is_none")]
    pub gating_velocity: Option<f64>,
    /// Molecular diffusivity, m²/s.
    #[serde(rename = "D")]
    pub diffusivity: f64,
    /// Gating-off (injection) duration, s.
    #[serde(rename = "T_g")]
    pub gate_duration: f64,
    /// Start-to-start interval between consecutive injections, s.
    #[serde(rename = "T_p")]
    pub gate_period: f64,
    #[serde(rename = "l_s")]
    pub supply_length: f64,
    #[serde(rename = "l_gi")]
    pub gate_inlet_length: f64,
    #[serde(rename = "l_go")]
    pub gate_outlet_length: f64,
    #[serde(rename = "l_p")]
    pub propagation_length: f64,
    #[serde(rename = "l_ch")]
    pub channel_length: f64,
    #[serde(rename = "w_ch")]
    pub channel_width: f64,
    /// Pulse generation point along x, m.
    #[serde(rename = "x_g")]
    pub generation_point: f64,
    /// Pulse sampling point along x, m.
    #[serde(rename = "x_s")]
    pub sampling_point: f64,
    #[serde(rename = "t_g")]
    pub generation_time: f64,
    #[serde(rename = "t_s")]
    pub sampling_time: f64,
    /// Dynamic viscosity, Pa·s. Only absolute resistances depend on it.
    #[serde(rename = "mu")]
    pub viscosity: f64,
}

impl Default for SystemParameters {
    /// Reference configuration (10 µM supply, 10 mm/s, r_u = 5, 100 mm channel).
    fn default() -> Self {
        Self {
            supply_concentration: 1e-2,
            supply_velocity: 1e-2,
            velocity_ratio: 5.0,
            gating_velocity: None,
            diffusivity: 1e-10,
            gate_duration: 2.0,
            gate_period: 2.0,
            supply_length: 12.5e-3,
            gate_inlet_length: 12.5e-3,
            gate_outlet_length: 12.5e-3,
            propagation_length: 87.5e-3,
            channel_length: 100e-3,
            channel_width: 5e-3,
            generation_point: 25e-3,
            sampling_point: 80e-3,
            generation_time: 12.18,
            sampling_time: 15.19,
            viscosity: 1.0e-3,
        }
    }
}

impl SystemParameters {
    /// Gating inlet mean velocity, `r_u * u_s`.
    pub fn gating_velocity(&self) -> f64 {
        self.velocity_ratio * self.supply_velocity
    }

    /// Distance travelled between the generation and sampling points.
    pub fn propagation_distance(&self) -> f64 {
        self.sampling_point - self.generation_point
    }

    /// Checks every invariant and returns the parameters unchanged on success.
    pub fn validate(self) -> Result<Self, ParamError> {
        let positive: [(&'static str, f64); 15] = [
            ("c_s", self.supply_concentration),
            ("u_s", self.supply_velocity),
            ("T_g", self.gate_duration),
            ("T_p", self.gate_period),
            ("l_s", self.supply_length),
            ("l_gi", self.gate_inlet_length),
            ("l_go", self.gate_outlet_length),
            ("l_p", self.propagation_length),
            ("l_ch", self.channel_length),
            ("w_ch", self.channel_width),
            ("x_g", self.generation_point),
            ("x_s", self.sampling_point),
            ("t_g", self.generation_time),
            ("t_s", self.sampling_time),
            ("mu", self.viscosity),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(invalid(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if !self.diffusivity.is_finite() || self.diffusivity < 0.0 {
            return Err(invalid(
                "D",
                format!("must be finite and >= 0, got {}", self.diffusivity),
            ));
        }
        if !self.velocity_ratio.is_finite() || self.velocity_ratio < 0.0 {
            return Err(invalid(
                "r_u",
                format!("must be finite and >= 0, got {}", self.velocity_ratio),
            ));
        }
        if let Some(u_g) = self.gating_velocity {
            let derived = self.gating_velocity();
            if !u_g.is_finite() || (u_g - derived).abs() > 1e-12 * derived.abs().max(u_g.abs()) {
                return Err(invalid(
                    "u_g",
                    format!("inconsistent with r_u * u_s = {derived}, got {u_g}"),
                ));
            }
        }
        let sum = self.supply_length + self.propagation_length;
        if (self.channel_length - sum).abs() > LENGTH_IDENTITY_RTOL * self.channel_length {
            return Err(ParamError::LengthMismatch {
                l_ch: self.channel_length,
                sum,
            });
        }
        if self.generation_point < self.supply_length {
            return Err(invalid(
                "x_g",
                "must lie at or downstream of the junction (x_g >= l_s)",
            ));
        }
        if self.generation_point >= self.sampling_point {
            return Err(invalid(
                "x_g",
                "must be upstream of the sampling point (x_g < x_s)",
            ));
        }
        if self.sampling_point > self.channel_length {
            return Err(invalid("x_s", "must lie inside the channel (x_s <= l_ch)"));
        }
        Ok(self)
    }

    /// True when the configuration can run back-to-back injections.
    pub fn supports_pulse_train(&self) -> bool {
        self.gate_duration < self.gate_period
    }

    /// Sets a named parameter. Setting `l_ch` stretches `l_p` so the
    /// junction stays put.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ParamError> {
        let param = ScenarioParameter::from_name(name);
        match (param, name) {
            (Some(p), _) => p.apply(self, value),
            (None, "D") => self.diffusivity = value,
            (None, "T_p") => self.gate_period = value,
            (None, "l_s") => {
                self.supply_length = value;
                self.propagation_length = self.channel_length - value;
            }
            (None, "l_gi") => self.gate_inlet_length = value,
            (None, "l_p") => {
                self.propagation_length = value;
                self.channel_length = self.supply_length + value;
            }
            (None, "w_ch") => self.channel_width = value,
            (None, "x_g") => self.generation_point = value,
            (None, "x_s") => self.sampling_point = value,
            (None, "t_g") => self.generation_time = value,
            (None, "t_s") => self.sampling_time = value,
            (None, "mu") => self.viscosity = value,
            (None, other) => return Err(ParamError::UnknownParameter(other.to_string())),
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, ParamError> {
        let params: Self =
            serde_json::from_str(text).map_err(|e| ParamError::Parse(e.to_string()))?;
        params.validate()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters always serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ParamError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ParamError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

/// The six parameters varied by the calibration protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioParameter {
    #[serde(rename = "c_s")]
    SupplyConcentration,
    #[serde(rename = "u_s")]
    SupplyVelocity,
    #[serde(rename = "r_u")]
    VelocityRatio,
    #[serde(rename = "T_g")]
    GateDuration,
    #[serde(rename = "l_ch")]
    ChannelLength,
    #[serde(rename = "l_go")]
    GateOutletLength,
}

impl ScenarioParameter {
    pub const ALL: [ScenarioParameter; 6] = [
        Self::SupplyConcentration,
        Self::SupplyVelocity,
        Self::VelocityRatio,
        Self::GateDuration,
        Self::ChannelLength,
        Self::GateOutletLength,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Self::SupplyConcentration => "c_s",
            Self::SupplyVelocity => "u_s",
            Self::VelocityRatio => "r_u",
            Self::GateDuration => "T_g",
            Self::ChannelLength => "l_ch",
            Self::GateOutletLength => "l_go",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.symbol() == name)
    }

    /// Protocol values in SI units, ascending.
    pub fn protocol_values(self) -> [f64; 5] {
        match self {
            // 1, 10, 20, 30, 40 mM
            Self::SupplyConcentration => [1.0, 10.0, 20.0, 30.0, 40.0],
            Self::SupplyVelocity => [10e-3, 11e-3, 12e-3, 13e-3, 15e-3],
            Self::VelocityRatio => [1.0, 2.0, 3.0, 4.0, 10.0],
            Self::GateDuration => [1.0, 2.0, 3.0, 4.0, 5.0],
            Self::ChannelLength => [100e-3, 110e-3, 120e-3, 130e-3, 200e-3],
            Self::GateOutletLength => [12.5e-3, 13.5e-3, 14.5e-3, 15.5e-3, 25e-3],
        }
    }

    /// Closed admissible interval for overrides.
    pub fn admissible_range(self) -> (f64, f64) {
        match self {
            Self::SupplyConcentration => (1e-9, 1e3),
            Self::SupplyVelocity => (1e-6, 1.0),
            Self::VelocityRatio => (0.0, 100.0),
            Self::GateDuration => (1e-3, 60.0),
            Self::ChannelLength => (1e-3, 1.0),
            Self::GateOutletLength => (1e-4, 0.5),
        }
    }

    pub fn get(self, p: &SystemParameters) -> f64 {
        match self {
            Self::SupplyConcentration => p.supply_concentration,
            Self::SupplyVelocity => p.supply_velocity,
            Self::VelocityRatio => p.velocity_ratio,
            Self::GateDuration => p.gate_duration,
            Self::ChannelLength => p.channel_length,
            Self::GateOutletLength => p.gate_outlet_length,
        }
    }

    /// Writes `value` into `p`; channel length changes are absorbed by `l_p`.
    pub fn apply(self, p: &mut SystemParameters, value: f64) {
        match self {
            Self::SupplyConcentration => p.supply_concentration = value,
            Self::SupplyVelocity => {
                p.supply_velocity = value;
                p.gating_velocity = None;
            }
            Self::VelocityRatio => {
                p.velocity_ratio = value;
                p.gating_velocity = None;
            }
            Self::GateDuration => p.gate_duration = value,
            Self::ChannelLength => {
                p.channel_length = value;
                p.propagation_length = value - p.supply_length;
            }
            Self::GateOutletLength => p.gate_outlet_length = value,
        }
    }
}

impl fmt::Display for ScenarioParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// One configuration of the protocol: the base with a single override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub parameter: ScenarioParameter,
    pub value: f64,
    pub params: SystemParameters,
}

impl Scenario {
    pub fn new(
        base: &SystemParameters,
        parameter: ScenarioParameter,
        value: f64,
    ) -> Result<Self, ParamError> {
        let (lo, hi) = parameter.admissible_range();
        if !(lo..=hi).contains(&value) {
            return Err(invalid(
                parameter.symbol(),
                format!("override {value} outside admissible range [{lo}, {hi}]"),
            ));
        }
        let mut params = base.clone();
        parameter.apply(&mut params, value);
        let params = params.validate()?;
        Ok(Self {
            name: format!("{}={}", parameter.symbol(), value),
            parameter,
            value,
            params,
        })
    }

    /// The override as a (name, value) map entry.
    pub fn overrides(&self) -> [(&'static str, f64); 1] {
        [(self.parameter.symbol(), self.value)]
    }
}

/// Expands the protocol: six parameters times five values, row-major.
pub fn expand_scenarios(base: &SystemParameters) -> Result<Vec<Scenario>, ParamError> {
    let mut out = Vec::with_capacity(30);
    for parameter in ScenarioParameter::ALL {
        for value in parameter.protocol_values() {
            out.push(Scenario::new(base, parameter, value)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate() {
        let p = SystemParameters::default();
        assert_eq!(p.clone().validate().unwrap(), p);
        assert_eq!(p.gating_velocity(), 5e-2);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let p = SystemParameters {
            channel_length: 90e-3,
            ..Default::default()
        };
        assert!(matches!(
            p.validate(),
            Err(ParamError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn negative_gate_duration_is_rejected() {
        let p = SystemParameters {
            gate_duration: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            p.validate(),
            Err(ParamError::InvalidParameter { name: "T_g", .. })
        ));
    }

    #[test]
    fn ordering_of_points_is_enforced() {
        let p = SystemParameters {
            generation_point: 90e-3,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = SystemParameters {
            sampling_point: 0.2,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = SystemParameters {
            generation_point: 10e-3,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn inconsistent_gating_velocity_is_rejected() {
        let ok = SystemParameters {
            gating_velocity: Some(5e-2),
            ..Default::default()
        };
        assert!(ok.validate().is_ok());
        let bad = SystemParameters {
            gating_velocity: Some(4e-2),
            ..Default::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(ParamError::InvalidParameter { name: "u_g", .. })
        ));
    }

    #[test]
    fn unknown_json_keys_are_an_error() {
        let mut value: serde_json::Value =
            serde_json::from_str(&SystemParameters::default().to_json_string()).unwrap();
        value["bogus"] = serde_json::json!(1.0);
        assert!(matches!(
            SystemParameters::from_json_str(&value.to_string()),
            Err(ParamError::Parse(_))
        ));
    }

    #[test]
    fn json_uses_symbol_keys() {
        let text = SystemParameters::default().to_json_string();
        for key in [
            "\"c_s\"", "\"r_u\"", "\"D\"", "\"T_g\"", "\"l_ch\"", "\"mu\"",
        ] {
            assert!(text.contains(key), "missing {key}");
        }
        assert!(!text.contains("u_g"));
    }

    #[test]
    fn thirty_scenarios_row_major() {
        let scenarios = expand_scenarios(&SystemParameters::default()).unwrap();
        assert_eq!(scenarios.len(), 30);
        for (row, parameter) in ScenarioParameter::ALL.iter().enumerate() {
            for (col, value) in parameter.protocol_values().iter().enumerate() {
                let s = &scenarios[row * 5 + col];
                assert_eq!(s.parameter, *parameter);
                assert_eq!(s.value, *value);
            }
        }
        assert_eq!(
            scenarios,
            expand_scenarios(&SystemParameters::default()).unwrap()
        );
    }

    #[test]
    fn velocity_ratio_scenario_changes_only_r_u() {
        let base = SystemParameters::default();
        let scenarios = expand_scenarios(&base).unwrap();
        let s = scenarios.iter().find(|s| s.name == "r_u=10").unwrap();
        assert_eq!(s.overrides(), [("r_u", 10.0)]);
        let expected = SystemParameters {
            velocity_ratio: 10.0,
            ..base
        };
        assert_eq!(s.params, expected);
    }

    #[test]
    fn channel_length_scenario_stretches_propagation_channel() {
        let scenarios = expand_scenarios(&SystemParameters::default()).unwrap();
        let s = scenarios.iter().find(|s| s.name == "l_ch=0.2").unwrap();
        assert!((s.params.propagation_length - 187.5e-3).abs() < 1e-15);
        assert_eq!(s.params.supply_length, 12.5e-3);
    }

    #[test]
    fn override_outside_range_is_rejected() {
        let base = SystemParameters::default();
        assert!(Scenario::new(&base, ScenarioParameter::VelocityRatio, 1e3).is_err());
    }

    #[test]
    fn set_by_name() {
        let mut p = SystemParameters::default();
        p.set("l_ch", 0.12).unwrap();
        assert!((p.propagation_length - 0.1075).abs() < 1e-15);
        p.set("T_p", 4.0).unwrap();
        assert_eq!(p.gate_period, 4.0);
        assert!(matches!(
            p.set("nope", 1.0),
            Err(ParamError::UnknownParameter(_))
        ));
    }

    proptest! {
        #[test]
        fn json_round_trip_is_exact(
            c_s in 1e-6f64..1e3,
            u_s in 1e-4f64..1.0,
            r_u in 0.0f64..20.0,
            t_g in 0.01f64..10.0,
            l_p in 0.07f64..0.5,
            mu in 1e-4f64..1e-1,
        ) {
            let mut p = SystemParameters {
                supply_concentration: c_s,
                supply_velocity: u_s,
                velocity_ratio: r_u,
                gate_duration: t_g,
                viscosity: mu,
                ..Default::default()
            };
            p.set("l_p", l_p).unwrap();
            let p = p.validate().unwrap();
            let back = SystemParameters::from_json_str(&p.to_json_string()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
