//! Oracle measurement of the pulse triple for one parameter set.
//!
//! A single gating-off window opens at `window_start`. Time series are
//! recorded at the generation point `x_g` and the sampling point `x_s`.
//! Amplitude and width come from the axial profile captured when the `x_s`
//! series peaks; the delay is the difference of the peak-arrival times at
//! the two probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{run_params, AxialProfile, GatingSchedule, RunRequest, RunStats};
use super::velocity::ProfileConvention;
use super::TransportError;
use crate::metrics::{extract_pulse, DelayOrigin, ExtractOptions, MeasuredPulse, Trace, TraceKind};
use crate::params::SystemParameters;
use crate::pulse_model::PulseShape;

/// Noise floor relative to the supply concentration.
pub const NOISE_FLOOR: f64 = 1e-9;

/// Which lateral sampling of the channel defines a measurement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    #[default]
    Centerline,
    Section,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub cells_across: usize,
    pub window_start: f64,
    pub horizon: f64,
    pub convention: ProfileConvention,
    pub max_dt: Option<f64>,
    pub smooth: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            cells_across: 20,
            window_start: 5.0,
            horizon: 25.0,
            convention: ProfileConvention::MeanPreserving,
            max_dt: None,
            smooth: false,
        }
    }
}

/// Delay of the `x_s` peak from each reference instant of the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowDelays {
    pub from_start: f64,
    pub from_midpoint: f64,
    pub from_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeMeasurement {
    pub shape: PulseShape,
    /// Axial profile captured at the `x_s` peak.
    pub spatial: MeasuredPulse,
    pub at_generation: MeasuredPulse,
    pub at_sampling: MeasuredPulse,
    pub capture_time: f64,
    pub window_delays: WindowDelays,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMeasurement {
    pub config: OracleConfig,
    pub centerline: ProbeMeasurement,
    /// Cross-section-average measurement, when its pulses are bracketed
    /// inside the horizon.
    pub section: Option<ProbeMeasurement>,
    pub steps: u64,
    pub dt: f64,
    pub min_concentration: f64,
}

impl OracleMeasurement {
    pub fn shape(&self, kind: ProbeKind) -> Option<PulseShape> {
        match kind {
            ProbeKind::Centerline => Some(self.centerline.shape),
            ProbeKind::Section => self.section.map(|m| m.shape),
        }
    }
}

fn measured(
    trace: &Trace,
    kind: TraceKind,
    floor: f64,
    opts: ExtractOptions,
    what: &str,
) -> Result<MeasuredPulse, TransportError> {
    extract_pulse(trace, kind, floor, opts).map_err(|source| TransportError::Measurement {
        what: what.to_string(),
        source,
    })
}

fn probe_measurement(
    p: &SystemParameters,
    cfg: &OracleConfig,
    generation: &Trace,
    sampling: &Trace,
    captured: Option<&AxialProfile>,
    label: &str,
) -> Result<ProbeMeasurement, TransportError> {
    let floor = NOISE_FLOOR * p.supply_concentration;
    let opts = ExtractOptions { smooth: cfg.smooth };
    let temporal = |origin| TraceKind::Temporal {
        window_start: cfg.window_start,
        gate_duration: p.gate_duration,
        origin,
    };
    let at_generation = measured(
        generation,
        temporal(DelayOrigin::WindowMidpoint),
        floor,
        opts,
        &format!("{label} x_g series"),
    )?;
    let at_sampling = measured(
        sampling,
        temporal(DelayOrigin::WindowMidpoint),
        floor,
        opts,
        &format!("{label} x_s series"),
    )?;
    let profile = captured.ok_or_else(|| TransportError::Measurement {
        what: format!("{label} profile"),
        source: crate::metrics::MetricsError::NoPulse { max: 0.0, floor },
    })?;
    let trace = if label == "centerline" {
        &profile.centerline
    } else {
        &profile.section
    };
    // The supply channel holds c_s throughout; only the propagation channel
    // carries the pulse.
    let trace = trace.tail_from(p.supply_length + p.channel_width);
    let spatial = measured(
        &trace,
        TraceKind::Spatial,
        floor,
        opts,
        &format!("{label} profile"),
    )?;
    let t_peak = at_sampling.peak_pos;
    let window_delays = WindowDelays {
        from_start: t_peak - DelayOrigin::WindowStart.instant(cfg.window_start, p.gate_duration),
        from_midpoint: t_peak
            - DelayOrigin::WindowMidpoint.instant(cfg.window_start, p.gate_duration),
        from_end: t_peak - DelayOrigin::WindowEnd.instant(cfg.window_start, p.gate_duration),
    };
    Ok(ProbeMeasurement {
        shape: PulseShape {
            amplitude: spatial.amplitude,
            width: spatial.fwhm,
            delay: at_sampling.peak_pos - at_generation.peak_pos,
            center: spatial.peak_pos,
        },
        spatial,
        at_generation,
        at_sampling,
        capture_time: profile.t,
        window_delays,
    })
}

/// Runs the oracle for `p` and measures the pulse triple with both probes.
pub fn measure_scenario(
    p: &SystemParameters,
    cfg: &OracleConfig,
) -> Result<OracleMeasurement, TransportError> {
    let schedule = GatingSchedule::single(cfg.window_start, p.gate_duration, cfg.horizon)?;
    let request = RunRequest {
        probe_x: vec![p.generation_point, p.sampling_point],
        capture_at_peak_of: Some(1),
        max_dt: cfg.max_dt,
        ..RunRequest::default()
    };
    let (_, out) = run_params(p, &schedule, cfg.cells_across, cfg.convention, &request)?;
    let RunStats {
        steps,
        dt,
        min_concentration,
        ..
    } = out.stats;
    let capture = out.peak_capture.as_ref().expect("capture requested");
    let (g, s) = (&out.probes[0], &out.probes[1]);
    let centerline = probe_measurement(
        p,
        cfg,
        &g.centerline,
        &s.centerline,
        capture.centerline.as_ref(),
        "centerline",
    )?;
    let section = probe_measurement(
        p,
        cfg,
        &g.section,
        &s.section,
        capture.section.as_ref(),
        "section",
    )
    .ok();
    Ok(OracleMeasurement {
        config: *cfg,
        centerline,
        section,
        steps,
        dt,
        min_concentration,
    })
}

/// Measures every parameter set on the current rayon pool; results keep the
/// input order.
pub fn measure_many(
    params: &[SystemParameters],
    cfg: &OracleConfig,
) -> Vec<Result<OracleMeasurement, TransportError>> {
    params
        .par_iter()
        .map(|p| measure_scenario(p, cfg))
        .collect()
}
