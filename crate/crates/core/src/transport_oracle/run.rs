//! Time integration of the cross junction under a gating schedule, with
//! probes along the main channel.

use serde::{Deserialize, Serialize};

use super::grid::{build_grid, Grid, GATE_INLET, SUPPLY_INLET};
use super::solver::{stability_dt, BoundaryValues, ConcentrationField, Stepper};
use super::velocity::{ProfileConvention, VelocityField};
use super::TransportError;
use crate::hydraulics::GatingMode;
use crate::metrics::Trace;
use crate::params::SystemParameters;

/// Gating-off windows `(start, duration)` over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingSchedule {
    pub off_windows: Vec<(f64, f64)>,
    pub horizon: f64,
}

impl GatingSchedule {
    pub fn new(off_windows: Vec<(f64, f64)>, horizon: f64) -> Result<Self, TransportError> {
        if !(horizon > 0.0) {
            return Err(TransportError::InvalidSchedule(format!(
                "horizon {horizon} must be > 0"
            )));
        }
        let mut prev_end = 0.0;
        for (k, &(start, duration)) in off_windows.iter().enumerate() {
            if !(duration > 0.0) || !(start >= 0.0) {
                return Err(TransportError::InvalidSchedule(format!(
                    "window {k} ({start}, {duration}) needs start >= 0 and duration > 0"
                )));
            }
            if k > 0 && start < prev_end {
                return Err(TransportError::InvalidSchedule(format!(
                    "window {k} starts at {start} before the previous one ends at {prev_end}"
                )));
            }
            if start + duration > horizon {
                return Err(TransportError::InvalidSchedule(format!(
                    "window {k} ends at {} after the horizon {horizon}",
                    start + duration
                )));
            }
            prev_end = start + duration;
        }
        Ok(Self {
            off_windows,
            horizon,
        })
    }

    pub fn always_on(horizon: f64) -> Result<Self, TransportError> {
        Self::new(Vec::new(), horizon)
    }

    pub fn single(start: f64, duration: f64, horizon: f64) -> Result<Self, TransportError> {
        Self::new(vec![(start, duration)], horizon)
    }

    /// `count` windows of `duration` starting every `period` from `first`.
    pub fn uniform_train(
        first: f64,
        duration: f64,
        period: f64,
        count: usize,
        horizon: f64,
    ) -> Result<Self, TransportError> {
        let windows = (0..count)
            .map(|n| (first + n as f64 * period, duration))
            .collect();
        Self::new(windows, horizon)
    }

    pub fn mode_at(&self, t: f64) -> GatingMode {
        if self.off_windows.iter().any(|&(s, d)| t >= s && t < s + d) {
            GatingMode::Off
        } else {
            GatingMode::On
        }
    }

    /// Window edges, sorted.
    pub fn switch_times(&self) -> Vec<f64> {
        self.off_windows
            .iter()
            .flat_map(|&(s, d)| [s, s + d])
            .collect()
    }
}

/// What to record during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    /// Axial positions of time-series probes, m.
    pub probe_x: Vec<f64>,
    /// Times at which axial profiles are recorded, s.
    pub profile_times: Vec<f64>,
    /// Times at which the full field is copied, s.
    pub snapshot_times: Vec<f64>,
    /// Probe index whose maximum triggers an axial-profile capture.
    pub capture_at_peak_of: Option<usize>,
    /// Upper bound on the step, s.
    pub max_dt: Option<f64>,
    /// Check the global mass balance after every step.
    pub check_balance: bool,
}

/// Concentration along the main channel at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxialProfile {
    pub t: f64,
    /// At mid-width, interpolated between the two central rows.
    pub centerline: Trace,
    /// Cross-sectional mean.
    pub section: Trace,
}

/// Time series at one axial position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSeries {
    pub x: f64,
    pub centerline: Trace,
    pub section: Trace,
}

/// Profiles taken when a probe series reached its maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakCapture {
    pub centerline: Option<AxialProfile>,
    pub section: Option<AxialProfile>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub steps: u64,
    pub dt: f64,
    pub min_concentration: f64,
    /// Largest `|dm - dt (in - out)|` relative to the current mass.
    pub worst_balance_residual: f64,
    pub final_mass: f64,
    pub total_influx: f64,
    pub total_outflux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub probes: Vec<ProbeSeries>,
    pub profiles: Vec<AxialProfile>,
    pub snapshots: Vec<ConcentrationField>,
    pub peak_capture: Option<PeakCapture>,
    pub stats: RunStats,
}

/// Samples the main channel of a junction grid.
#[derive(Debug, Clone)]
struct ChannelSampler {
    axis: Vec<f64>,
    row_lo: usize,
    row_hi: usize,
    row_weight: f64,
    main_row: usize,
    across: usize,
}

impl ChannelSampler {
    fn new(grid: &Grid) -> Self {
        let l = grid.layout.expect("junction grid");
        // Centre of the channel in fractional row units from the first main row.
        let mid = 0.5 * l.across as f64 - 0.5;
        let lo = mid.floor();
        Self {
            axis: (0..grid.nx).map(|i| grid.cell_center(i, 0).0).collect(),
            row_lo: l.main_row + lo as usize,
            row_hi: l.main_row + (lo as usize + 1).min(l.across - 1),
            row_weight: mid - lo,
            main_row: l.main_row,
            across: l.across,
        }
    }

    fn centerline(&self, f: &ConcentrationField, i: usize) -> f64 {
        (1.0 - self.row_weight) * f.at(i, self.row_lo) + self.row_weight * f.at(i, self.row_hi)
    }

    fn section(&self, f: &ConcentrationField, i: usize) -> f64 {
        (self.main_row..self.main_row + self.across)
            .map(|j| f.at(i, j))
            .sum::<f64>()
            / self.across as f64
    }

    /// Linear interpolation weights between column centres for position `x`.
    fn columns(&self, x: f64) -> (usize, usize, f64) {
        let n = self.axis.len();
        let dx = self.axis[1] - self.axis[0];
        let s = ((x - self.axis[0]) / dx).clamp(0.0, (n - 1) as f64);
        let i0 = (s.floor() as usize).min(n - 2);
        (i0, i0 + 1, s - i0 as f64)
    }

    fn profile(&self, f: &ConcentrationField) -> AxialProfile {
        let n = self.axis.len();
        AxialProfile {
            t: f.t,
            centerline: Trace {
                axis: self.axis.clone(),
                values: (0..n).map(|i| self.centerline(f, i)).collect(),
            },
            section: Trace {
                axis: self.axis.clone(),
                values: (0..n).map(|i| self.section(f, i)).collect(),
            },
        }
    }
}

/// Integrates `p` under `schedule` on `grid` from an empty channel.
pub fn run(
    p: &SystemParameters,
    schedule: &GatingSchedule,
    grid: &Grid,
    convention: ProfileConvention,
    request: &RunRequest,
) -> Result<RunOutput, TransportError> {
    if grid.layout.is_none() {
        return Err(TransportError::Geometry("run needs a junction grid".into()));
    }
    let l_ch = grid.nx as f64 * grid.dx;
    for &x in &request.probe_x {
        if !(0.0..=l_ch).contains(&x) {
            return Err(TransportError::InvalidProbe(format!(
                "probe at {x} m lies outside [0, {l_ch}]"
            )));
        }
    }
    if let Some(k) = request.capture_at_peak_of {
        if k >= request.probe_x.len() {
            return Err(TransportError::InvalidProbe(format!(
                "no probe with index {k}"
            )));
        }
    }
    let on = VelocityField::for_mode(p, grid, GatingMode::On, convention);
    let off = VelocityField::for_mode(p, grid, GatingMode::Off, convention);
    let mut dt =
        stability_dt(&on, p.diffusivity, grid).min(stability_dt(&off, p.diffusivity, grid));
    if let Some(cap) = request.max_dt {
        dt = dt.min(cap);
    }
    let mut bc = BoundaryValues::zeros(grid);
    bc.0[SUPPLY_INLET] = p.supply_concentration;
    bc.0[GATE_INLET] = 0.0;

    let sampler = ChannelSampler::new(grid);
    let probe_cols: Vec<_> = request
        .probe_x
        .iter()
        .map(|&x| sampler.columns(x))
        .collect();
    let mut field = ConcentrationField::zeros(grid);
    let mut stepper = Stepper::new(grid);

    let mut times = vec![0.0];
    let mut series: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![0.0], vec![0.0]); probe_cols.len()];
    let mut events: Vec<f64> = schedule
        .switch_times()
        .into_iter()
        .chain(request.profile_times.iter().copied())
        .chain(request.snapshot_times.iter().copied())
        .chain([schedule.horizon])
        .filter(|&t| t > 0.0 && t <= schedule.horizon)
        .collect();
    events.sort_by(f64::total_cmp);
    events.dedup();

    let mut profiles = Vec::new();
    let mut snapshots = Vec::new();
    let mut captured = PeakCapture {
        centerline: None,
        section: None,
    };
    let mut best = (0.0f64, 0.0f64);
    let mut stats = RunStats {
        dt,
        min_concentration: 0.0,
        ..RunStats::default()
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    let record_at = |field: &ConcentrationField,
                     profiles: &mut Vec<AxialProfile>,
                     snapshots: &mut Vec<ConcentrationField>| {
        for &t in &request.profile_times {
            if close(field.t, t) {
                profiles.push(sampler.profile(field));
            }
        }
        for &t in &request.snapshot_times {
            if close(field.t, t) {
                snapshots.push(field.clone());
            }
        }
    };
    record_at(&field, &mut profiles, &mut snapshots);

    let mut next_event = 0;
    while next_event < events.len() {
        let target = events[next_event];
        let remaining = target - field.t;
        let h = if remaining <= dt * (1.0 + 1e-9) {
            remaining
        } else {
            dt
        };
        let vf = match schedule.mode_at(field.t + 1e-12 * schedule.horizon) {
            GatingMode::On => &on,
            GatingMode::Off => &off,
        };
        let before = if request.check_balance {
            field.total_mass(grid)
        } else {
            0.0
        };
        let flux = stepper.step(grid, &mut field, vf, &bc, p.diffusivity, h)?;
        if h == remaining {
            field.t = target;
            next_event += 1;
            while next_event < events.len() && close(events[next_event], target) {
                next_event += 1;
            }
        }
        stats.steps += 1;
        stats.total_influx += flux.influx;
        stats.total_outflux += flux.outflux;
        if request.check_balance {
            let after = field.total_mass(grid);
            let residual = ((after - before) - (flux.influx - flux.outflux)).abs()
                / after.max(f64::MIN_POSITIVE);
            stats.worst_balance_residual = stats.worst_balance_residual.max(residual);
            stats.min_concentration = stats.min_concentration.min(field.min());
        }
        times.push(field.t);
        for (k, &(i0, i1, w)) in probe_cols.iter().enumerate() {
            let cl =
                (1.0 - w) * sampler.centerline(&field, i0) + w * sampler.centerline(&field, i1);
            let sec = (1.0 - w) * sampler.section(&field, i0) + w * sampler.section(&field, i1);
            series[k].0.push(cl);
            series[k].1.push(sec);
            if request.capture_at_peak_of == Some(k) {
                if cl > best.0 {
                    best.0 = cl;
                    captured.centerline = Some(sampler.profile(&field));
                }
                if sec > best.1 {
                    best.1 = sec;
                    captured.section = Some(sampler.profile(&field));
                }
            }
        }
        record_at(&field, &mut profiles, &mut snapshots);
    }
    stats.final_mass = field.total_mass(grid);
    if !request.check_balance {
        stats.min_concentration = field.min();
    }

    let probes = request
        .probe_x
        .iter()
        .zip(series)
        .map(|(&x, (cl, sec))| ProbeSeries {
            x,
            centerline: Trace {
                axis: times.clone(),
                values: cl,
            },
            section: Trace {
                axis: times.clone(),
                values: sec,
            },
        })
        .collect();
    Ok(RunOutput {
        probes,
        profiles,
        snapshots,
        peak_capture: request.capture_at_peak_of.map(|_| captured),
        stats,
    })
}

/// Convenience: builds the grid and runs.
pub fn run_params(
    p: &SystemParameters,
    schedule: &GatingSchedule,
    cells_across: usize,
    convention: ProfileConvention,
    request: &RunRequest,
) -> Result<(Grid, RunOutput), TransportError> {
    let grid = build_grid(p, cells_across)?;
    let out = run(p, schedule, &grid, convention, request)?;
    Ok((grid, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_validation() {
        assert!(GatingSchedule::new(vec![(1.0, 2.0), (2.5, 1.0)], 10.0).is_err());
        assert!(GatingSchedule::new(vec![(1.0, 2.0)], 2.5).is_err());
        assert!(GatingSchedule::new(vec![(1.0, 0.0)], 5.0).is_err());
        let s = GatingSchedule::uniform_train(5.0, 1.0, 2.0, 5, 25.0).unwrap();
        assert_eq!(s.off_windows.len(), 5);
        assert_eq!(s.off_windows[4], (13.0, 1.0));
        assert_eq!(s.mode_at(5.5), GatingMode::Off);
        assert_eq!(s.mode_at(6.0), GatingMode::On);
        assert_eq!(s.mode_at(4.99), GatingMode::On);
        assert_eq!(s.switch_times()[..4], [5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn always_on_keeps_propagation_channel_clean() {
        let p = SystemParameters::default();
        let schedule = GatingSchedule::always_on(20.0).unwrap();
        let req = RunRequest {
            probe_x: vec![p.generation_point, p.sampling_point],
            profile_times: vec![10.0, 20.0],
            ..RunRequest::default()
        };
        let (grid, out) =
            run_params(&p, &schedule, 8, ProfileConvention::MeanPreserving, &req).unwrap();
        let l = grid.layout.unwrap();
        let first_prop_col = l.junction_col + l.across;
        for prof in &out.profiles {
            for (x, c) in prof.section.axis.iter().zip(&prof.section.values) {
                if *x > grid.dx * first_prop_col as f64 {
                    assert!(*c < 1e-6 * p.supply_concentration, "x={x} c={c}");
                }
            }
        }
        for s in &out.probes {
            assert!(s
                .centerline
                .values
                .iter()
                .all(|&c| c < 1e-6 * p.supply_concentration));
        }
        assert_eq!(out.profiles.len(), 2);
        assert!((out.profiles[1].t - 20.0).abs() < 1e-12);
    }

    #[test]
    fn single_window_makes_one_downstream_pulse() {
        let p = SystemParameters::default();
        let schedule = GatingSchedule::single(5.0, p.gate_duration, 16.0).unwrap();
        let req = RunRequest {
            probe_x: vec![p.sampling_point],
            profile_times: vec![12.0],
            snapshot_times: vec![6.0],
            check_balance: true,
            ..RunRequest::default()
        };
        let (_, out) =
            run_params(&p, &schedule, 8, ProfileConvention::MeanPreserving, &req).unwrap();
        assert!(out.stats.worst_balance_residual < 1e-9);
        assert!(out.stats.min_concentration >= -1e-15 * p.supply_concentration);
        assert_eq!(out.snapshots.len(), 1);
        let prof = &out.profiles[0].centerline;
        let peaks = crate::metrics::prominent_peaks(&prof.values, 0.05 * p.supply_concentration);
        let downstream: Vec<_> = peaks.iter().filter(|&&i| prof.axis[i] > 0.03).collect();
        assert_eq!(downstream.len(), 1, "{peaks:?}");
    }
}
