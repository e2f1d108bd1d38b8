//! Pulse extraction from sampled traces and the calibration error function.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pulse_model::{PulseShape, FWHM_PER_SIGMA};

/// Minimum number of samples accepted by [`extract_pulse`].
pub const MIN_SAMPLES: usize = 16;
/// Fraction of the maximum above which a second excursion counts as a peak.
pub const MULTI_PEAK_FRACTION: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trace has {0} samples, need at least {MIN_SAMPLES}")]
    TooFewSamples(usize),
    #[error("trace axis must be strictly increasing and the same length as the values")]
    MalformedTrace,
    #[error("no pulse: maximum {max} is below the noise floor {floor}")]
    NoPulse { max: f64, floor: f64 },
    #[error("pulse is not bracketed by half-maximum crossings inside the trace")]
    Unbracketed,
    #[error("no pulse pairs given")]
    EmptyInput,
    #[error("simulated {component} is zero in pair {index}")]
    DivisionByZero {
        component: &'static str,
        index: usize,
    },
    #[error("trace CSV error: {0}")]
    Csv(String),
}

/// Concentration sampled along one axis (position or time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trace {
    pub fn new(axis: Vec<f64>, values: Vec<f64>) -> Result<Self, MetricsError> {
        if axis.len() != values.len() || axis.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MetricsError::MalformedTrace);
        }
        Ok(Self { axis, values })
    }

    pub fn from_fn(axis: Vec<f64>, f: impl Fn(f64) -> f64) -> Self {
        let values = axis.iter().map(|&x| f(x)).collect();
        Self { axis, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the first global maximum.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|b| v > self.values[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// Samples with `axis >= from`.
    pub fn tail_from(&self, from: f64) -> Self {
        let k = self.axis.partition_point(|&a| a < from);
        Self {
            axis: self.axis[k..].to_vec(),
            values: self.values[k..].to_vec(),
        }
    }

    /// Centred moving average of width 3; endpoints keep their value.
    pub fn smoothed(&self) -> Self {
        let n = self.values.len();
        let mut values = self.values.clone();
        for i in 1..n.saturating_sub(1) {
            values[i] = (self.values[i - 1] + self.values[i] + self.values[i + 1]) / 3.0;
        }
        Self {
            axis: self.axis.clone(),
            values,
        }
    }

    /// Writes `header_axis,c_mol_m3` rows.
    pub fn write_csv<W: Write>(&self, writer: W, axis_name: &str) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| MetricsError::Csv(e.to_string());
        w.write_record([axis_name, "c_mol_m3"]).map_err(err)?;
        for (a, v) in self.axis.iter().zip(&self.values) {
            w.serialize((a, v)).map_err(err)?;
        }
        w.flush().map_err(|e| MetricsError::Csv(e.to_string()))
    }

    /// Reads a two-column CSV with a header row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, MetricsError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut axis = Vec::new();
        let mut values = Vec::new();
        for row in r.deserialize::<(f64, f64)>() {
            let (a, v) = row.map_err(|e| MetricsError::Csv(e.to_string()))?;
            axis.push(a);
            values.push(v);
        }
        Self::new(axis, values)
    }
}

/// Reference instant from which a temporal pulse's delay is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayOrigin {
    WindowStart,
    #[default]
    WindowMidpoint,
    WindowEnd,
}

impl DelayOrigin {
    pub fn instant(self, window_start: f64, gate_duration: f64) -> f64 {
        match self {
            Self::WindowStart => window_start,
            Self::WindowMidpoint => window_start + 0.5 * gate_duration,
            Self::WindowEnd => window_start + gate_duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TraceKind {
    /// Concentration against position at a fixed time.
    Spatial,
    /// Concentration against time at a fixed probe, with the injection
    /// window used as the delay reference.
    Temporal {
        window_start: f64,
        gate_duration: f64,
        origin: DelayOrigin,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Apply a width-3 moving average before measuring.
    pub smooth: bool,
}

/// FWHM-based description of the dominant pulse in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredPulse {
    /// Maximum sample.
    pub amplitude: f64,
    /// Distance (or duration) between the half-maximum crossings.
    pub fwhm: f64,
    /// Axis value of the maximum, refined by a parabola through its neighbours.
    pub peak_pos: f64,
    /// Midpoint of the two half-maximum crossings.
    pub half_max_center: f64,
    /// Peak time minus the window reference; temporal traces only.
    pub delay: Option<f64>,
    /// RMS misfit of the equivalent Gaussian relative to the trace RMS.
    pub quality: f64,
    /// More than one excursion above 60 % of the maximum.
    pub multi_peak: bool,
}

/// Linear interpolation of the axis value where `values` crosses `level`
/// between samples `i` and `j`.
fn crossing(trace: &Trace, i: usize, j: usize, level: f64) -> f64 {
    let (a0, a1) = (trace.axis[i], trace.axis[j]);
    let (v0, v1) = (trace.values[i], trace.values[j]);
    if v1 == v0 {
        return a0;
    }
    a0 + (level - v0) * (a1 - a0) / (v1 - v0)
}

/// Maximal runs of consecutive samples strictly above `level`.
pub fn excursions_above(values: &[f64], level: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in values.iter().enumerate() {
        match (v > level, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, values.len() - 1));
    }
    runs
}

/// Local maxima whose topographic prominence is at least `min_prominence`.
/// Plateaus report their first sample.
pub fn prominent_peaks(values: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
        .into_iter()
        .filter(|&p| {
            let h = values[p];
            let left_min = values[..p]
                .iter()
                .rev()
                .take_while(|&&v| v <= h)
                .fold(h, |m, &v| m.min(v));
            let left_higher = values[..p].iter().any(|&v| v > h);
            let right_min = values[p + 1..]
                .iter()
                .take_while(|&&v| v <= h)
                .fold(h, |m, &v| m.min(v));
            let right_higher = values[p + 1..].iter().any(|&v| v > h);
            let base = match (left_higher, right_higher) {
                (true, true) => left_min.max(right_min),
                (true, false) => left_min,
                (false, true) => right_min,
                (false, false) => left_min.min(right_min),
            };
            h - base >= min_prominence
        })
        .collect()
}

/// Measures amplitude, FWHM and peak position of the dominant pulse.
///
/// `floor` is the absolute noise floor below which the trace counts as
/// empty; callers typically pass `1e-9 * c_s`.
pub fn extract_pulse(
    trace: &Trace,
    kind: TraceKind,
    floor: f64,
    opts: ExtractOptions,
) -> Result<MeasuredPulse, MetricsError> {
    if trace.axis.len() != trace.values.len() {
        return Err(MetricsError::MalformedTrace);
    }
    if trace.len() < MIN_SAMPLES {
        return Err(MetricsError::TooFewSamples(trace.len()));
    }
    let smoothed;
    let trace = if opts.smooth {
        smoothed = trace.smoothed();
        &smoothed
    } else {
        trace
    };
    let imax = trace.argmax().expect("non-empty");
    let amplitude = trace.values[imax];
    if !(amplitude > floor) {
        return Err(MetricsError::NoPulse {
            max: amplitude,
            floor,
        });
    }
    let half = 0.5 * amplitude;
    let v = &trace.values;

    let left = (0..imax)
        .rev()
        .find(|&i| v[i] <= half)
        .ok_or(MetricsError::Unbracketed)?;
    let right = (imax + 1..v.len())
        .find(|&i| v[i] <= half)
        .ok_or(MetricsError::Unbracketed)?;
    let x_left = crossing(trace, left, left + 1, half);
    let x_right = crossing(trace, right - 1, right, half);
    let fwhm = x_right - x_left;

    let mut peak_pos = trace.axis[imax];
    if imax > 0 && imax + 1 < v.len() {
        let (y0, y1, y2) = (v[imax - 1], v[imax], v[imax + 1]);
        let curvature = y0 - 2.0 * y1 + y2;
        if curvature < 0.0 {
            let offset = 0.5 * (y0 - y2) / curvature;
            let h = if offset >= 0.0 {
                trace.axis[imax + 1] - trace.axis[imax]
            } else {
                trace.axis[imax] - trace.axis[imax - 1]
            };
            peak_pos += offset.clamp(-0.5, 0.5) * h;
        }
    }

    let sigma = fwhm / FWHM_PER_SIGMA;
    let (mut misfit, mut norm) = (0.0, 0.0);
    for (a, c) in trace.axis.iter().zip(v) {
        let g = amplitude * (-(a - peak_pos).powi(2) / (2.0 * sigma * sigma)).exp();
        misfit += (c - g).powi(2);
        norm += c * c;
    }
    let quality = (misfit / norm).sqrt();

    let multi_peak = excursions_above(v, MULTI_PEAK_FRACTION * amplitude).len() > 1;

    let delay = match kind {
        TraceKind::Spatial => None,
        TraceKind::Temporal {
            window_start,
            gate_duration,
            origin,
        } => Some(peak_pos - origin.instant(window_start, gate_duration)),
    };

    Ok(MeasuredPulse {
        amplitude,
        fwhm,
        peak_pos,
        half_max_center: 0.5 * (x_left + x_right),
        delay,
        quality,
        multi_peak,
    })
}

/// How residuals are combined across components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// Sum of absolute differences in native units.
    Raw,
    /// Each absolute difference divided by the simulated value.
    #[default]
    Normalized,
}

/// Per-component error of one pair in `[A_p, W_p, T_d]` order.
pub fn pair_residuals(sim: &PulseShape, ana: &PulseShape, mode: ErrorMode) -> [f64; 3] {
    let s = sim.triple();
    let a = ana.triple();
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = (s[i] - a[i]).abs();
        if mode == ErrorMode::Normalized {
            out[i] /= s[i];
        }
    }
    out
}

/// Mean over pairs of the summed component errors.
pub fn model_error(
    pairs: &[(PulseShape, PulseShape)],
    mode: ErrorMode,
) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if mode == ErrorMode::Normalized {
        check_nonzero(pairs.iter().map(|(s, _)| s))?;
    }
    let total: f64 = pairs
        .iter()
        .map(|(s, a)| pair_residuals(s, a, mode).iter().sum::<f64>())
        .sum();
    Ok(total / pairs.len() as f64)
}

/// Mean of each component's error over pairs.
pub fn component_errors(
    pairs: &[(PulseShape, PulseShape)],
    mode: ErrorMode,
) -> Result<[f64; 3], MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if mode == ErrorMode::Normalized {
        check_nonzero(pairs.iter().map(|(s, _)| s))?;
    }
    let mut acc = [0.0; 3];
    for (s, a) in pairs {
        let r = pair_residuals(s, a, mode);
        for i in 0..3 {
            acc[i] += r[i];
        }
    }
    Ok(acc.map(|x| x / pairs.len() as f64))
}

pub(crate) fn check_nonzero<'a>(
    sims: impl Iterator<Item = &'a PulseShape>,
) -> Result<(), MetricsError> {
    const NAMES: [&str; 3] = ["A_p", "W_p", "T_d"];
    for (index, s) in sims.enumerate() {
        for (c, v) in s.triple().iter().enumerate() {
            if *v == 0.0 {
                return Err(MetricsError::DivisionByZero {
                    component: NAMES[c],
                    index,
                });
            }
        }
    }
    Ok(())
}
