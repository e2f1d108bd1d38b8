//! Prescribed velocity fields on cell faces.
//!
//! The cross-junction field is derived from a stream function `psi`
//! (`u = dpsi/dy`, `v = -dpsi/dx`). Each straight channel carries
//! `psi = psi_wall + Q F(s)` with `F(s) = 3s² - 2s³`, whose derivative is the
//! mean-preserving parabola `6 s (1 - s)`. Inside the junction square the
//! four edge profiles are blended transfinitely. Face velocities are exact
//! differences of nodal `psi`, so every cell is discretely divergence-free
//! and every channel cross-section carries exactly its circuit flow.

use serde::{Deserialize, Serialize};

use super::grid::{Grid, Region};
use crate::hydraulics::{BranchFlows, GatingMode, HydraulicNetwork};
use crate::params::SystemParameters;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileConvention {
    /// `6 u s (1 - s)`: cross-sectional mean equals the circuit velocity.
    #[default]
    MeanPreserving,
    /// `4 u s (1 - s)`: peak equals the circuit velocity (mean is 2/3 of it).
    PeakEqualsMean,
}

impl ProfileConvention {
    fn flux_scale(self) -> f64 {
        match self {
            Self::MeanPreserving => 1.0,
            Self::PeakEqualsMean => 2.0 / 3.0,
        }
    }
}

fn ramp(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

fn ramp_slope(s: f64) -> f64 {
    6.0 * s * (1.0 - s)
}

/// Continuous stream function of the cross junction in one gating mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamFunction {
    width: f64,
    junction_x: f64,
    q_supply: f64,
    q_gate_in: f64,
    q_gate_out: f64,
    q_prop: f64,
}

impl StreamFunction {
    pub fn new(p: &SystemParameters, mode: GatingMode, convention: ProfileConvention) -> Self {
        let BranchFlows {
            supply,
            gate_inlet,
            gate_outlet,
            propagation,
        } = HydraulicNetwork::new(p).flows(mode);
        let k = convention.flux_scale();
        Self {
            width: p.channel_width,
            junction_x: p.supply_length,
            q_supply: k * supply,
            q_gate_in: k * gate_inlet,
            q_gate_out: k * gate_outlet,
            q_prop: k * propagation,
        }
    }

    /// `(psi, dpsi/dsx, dpsi/dsy)` in junction-local coordinates where the
    /// junction square is `[0, 1]²`; arms extend outside it.
    fn local(&self, sx: f64, sy: f64) -> (f64, f64, f64) {
        let (qs, qgi, qgo, qp) = (self.q_supply, self.q_gate_in, self.q_gate_out, self.q_prop);
        if (0.0..=1.0).contains(&sy) {
            if sx <= 0.0 {
                return (qs * ramp(sy), 0.0, qs * ramp_slope(sy));
            }
            if sx >= 1.0 {
                return (qgo + qp * ramp(sy), 0.0, qp * ramp_slope(sy));
            }
            let (b, db) = (qgo * ramp(sx), qgo * ramp_slope(sx));
            let (t, dt) = (qs + qgi * ramp(sx), qgi * ramp_slope(sx));
            let (l, dl) = (qs * ramp(sy), qs * ramp_slope(sy));
            let (r, dr) = (qgo + qp * ramp(sy), qp * ramp_slope(sy));
            let (c00, c10, c01, c11) = (0.0, qgo, qs, qs + qgi);
            let corners = (1.0 - sx) * (1.0 - sy) * c00
                + sx * (1.0 - sy) * c10
                + (1.0 - sx) * sy * c01
                + sx * sy * c11;
            let psi = (1.0 - sy) * b + sy * t + (1.0 - sx) * l + sx * r - corners;
            let dsx = (1.0 - sy) * db + sy * dt - l + r
                - (-(1.0 - sy) * c00 + (1.0 - sy) * c10 - sy * c01 + sy * c11);
            let dsy = -b + t + (1.0 - sx) * dl + sx * dr
                - (-(1.0 - sx) * c00 - sx * c10 + (1.0 - sx) * c01 + sx * c11);
            return (psi, dsx, dsy);
        }
        let sx = sx.clamp(0.0, 1.0);
        if sy < 0.0 {
            (qgo * ramp(sx), qgo * ramp_slope(sx), 0.0)
        } else {
            (qs + qgi * ramp(sx), qgi * ramp_slope(sx), 0.0)
        }
    }

    pub fn psi(&self, x: f64, y: f64) -> f64 {
        self.local((x - self.junction_x) / self.width, y / self.width)
            .0
    }

    /// Pointwise velocity `(u, v)` at a fluid point.
    pub fn velocity(&self, x: f64, y: f64) -> (f64, f64) {
        let (_, dsx, dsy) = self.local((x - self.junction_x) / self.width, y / self.width);
        (dsy / self.width, -dsx / self.width)
    }
}

/// Face-centred velocities on a [`Grid`].
///
/// `u[j * (nx + 1) + i]` is the x-velocity on the west face of cell
/// `(i, j)`; `v[i * (ny + 1) + j]` is the y-velocity on the south face of
/// cell `(i, j)` (column-major so column sweeps read contiguously). Faces
/// touching a solid cell are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub mode: Option<GatingMode>,
    stream: Option<StreamFunction>,
}

impl VelocityField {
    pub fn zero(grid: &Grid) -> Self {
        Self::uniform(grid, 0.0, 0.0)
    }

    /// Constant velocity on every face between fluid cells and on open
    /// boundary faces.
    pub fn uniform(grid: &Grid, ux: f64, uy: f64) -> Self {
        Self::from_faces(grid, |_, _| ux, |_, _| uy, None, None)
    }

    /// Cross-junction field for one gating mode.
    pub fn for_mode(
        p: &SystemParameters,
        grid: &Grid,
        mode: GatingMode,
        convention: ProfileConvention,
    ) -> Self {
        let sf = StreamFunction::new(p, mode, convention);
        let node_psi = |i: usize, j: usize| {
            sf.psi(
                grid.origin.0 + i as f64 * grid.dx,
                grid.origin.1 + j as f64 * grid.dy,
            )
        };
        Self::from_faces(
            grid,
            |i, j| (node_psi(i, j + 1) - node_psi(i, j)) / grid.dy,
            |i, j| -(node_psi(i + 1, j) - node_psi(i, j)) / grid.dx,
            Some(mode),
            Some(sf),
        )
    }

    fn from_faces(
        grid: &Grid,
        fu: impl Fn(usize, usize) -> f64,
        fv: impl Fn(usize, usize) -> f64,
        mode: Option<GatingMode>,
        stream: Option<StreamFunction>,
    ) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut u = vec![0.0; (nx + 1) * ny];
        let mut v = vec![0.0; nx * (ny + 1)];
        for s in &grid.rows {
            let open_lo = !matches!(s.lo, super::grid::Side::Wall);
            let open_hi = !matches!(s.hi, super::grid::Side::Wall);
            for f in s.start..=s.start + s.len {
                let interior = f > s.start && f < s.start + s.len;
                if interior || (f == s.start && open_lo) || (f == s.start + s.len && open_hi) {
                    u[s.line * (nx + 1) + f] = fu(f, s.line);
                }
            }
        }
        for s in &grid.cols {
            let open_lo = !matches!(s.lo, super::grid::Side::Wall);
            let open_hi = !matches!(s.hi, super::grid::Side::Wall);
            for f in s.start..=s.start + s.len {
                let interior = f > s.start && f < s.start + s.len;
                if interior || (f == s.start && open_lo) || (f == s.start + s.len && open_hi) {
                    v[s.line * (ny + 1) + f] = fv(s.line, f);
                }
            }
        }
        Self { u, v, mode, stream }
    }

    pub fn u_face(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        self.u[j * (grid.nx + 1) + i]
    }

    pub fn v_face(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        self.v[i * (grid.ny + 1) + j]
    }

    pub fn max_abs_u(&self) -> f64 {
        self.u.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_v(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Cell-centred velocity from the average of opposite faces.
    pub fn cell_velocity(&self, grid: &Grid, i: usize, j: usize) -> (f64, f64) {
        (
            0.5 * (self.u_face(grid, i, j) + self.u_face(grid, i + 1, j)),
            0.5 * (self.v_face(grid, i, j) + self.v_face(grid, i, j + 1)),
        )
    }

    /// Exact pointwise velocity where a stream function is available,
    /// otherwise the face-averaged value of the enclosing cell.
    pub fn velocity_at(&self, grid: &Grid, x: f64, y: f64) -> (f64, f64) {
        if let Some(sf) = &self.stream {
            return sf.velocity(x, y);
        }
        let i = (((x - grid.origin.0) / grid.dx).floor().max(0.0) as usize).min(grid.nx - 1);
        let j = (((y - grid.origin.1) / grid.dy).floor().max(0.0) as usize).min(grid.ny - 1);
        self.cell_velocity(grid, i, j)
    }

    /// Speed `|u|` at a point.
    pub fn speed_at(&self, grid: &Grid, x: f64, y: f64) -> f64 {
        let (u, v) = self.velocity_at(grid, x, y);
        u.hypot(v)
    }

    /// Flow direction in degrees from +x, counter-clockwise positive.
    pub fn direction_at(&self, grid: &Grid, x: f64, y: f64) -> f64 {
        let (u, v) = self.velocity_at(grid, x, y);
        v.atan2(u).to_degrees()
    }

    /// Volumetric flux (per unit depth) through the west faces of column
    /// `i` restricted to `region` cells.
    pub fn column_flux(&self, grid: &Grid, i: usize, region: Region) -> f64 {
        (0..grid.ny)
            .filter(|&j| grid.regions[grid.index(i, j)] == Some(region))
            .map(|j| self.u_face(grid, i, j) * grid.dy)
            .sum()
    }

    /// Downward volumetric flux (per unit depth) through the south faces of
    /// row `j`.
    pub fn row_downflux(&self, grid: &Grid, j: usize) -> f64 {
        (0..grid.nx)
            .filter(|&i| grid.is_fluid(i, j))
            .map(|i| -self.v_face(grid, i, j) * grid.dx)
            .sum()
    }

    /// Largest net outflow of any cell divided by its total face flux.
    pub fn max_divergence_ratio(&self, grid: &Grid) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if !grid.is_fluid(i, j) {
                    continue;
                }
                let fluxes = [
                    self.u_face(grid, i + 1, j) * grid.dy,
                    -self.u_face(grid, i, j) * grid.dy,
                    self.v_face(grid, i, j + 1) * grid.dx,
                    -self.v_face(grid, i, j) * grid.dx,
                ];
                let total: f64 = fluxes.iter().map(|f| f.abs()).sum();
                if total > 0.0 {
                    worst = worst.max(fluxes.iter().sum::<f64>().abs() / total);
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydraulics::{mean_velocity_off, mean_velocity_on};
    use crate::transport_oracle::grid::{build_grid, Grid};

    fn setup(mode: GatingMode) -> (SystemParameters, Grid, VelocityField) {
        let p = SystemParameters::default();
        let g = build_grid(&p, 20).unwrap();
        let vf = VelocityField::for_mode(&p, &g, mode, ProfileConvention::MeanPreserving);
        (p, g, vf)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn centerline_peak_is_one_and_a_half_mean() {
        let (p, g, vf) = setup(GatingMode::On);
        let u = vf.velocity_at(&g, 0.06, 0.5 * p.channel_width).0;
        assert!(rel(u, 1.125e-2) < 1e-12, "{u}");
        let compat =
            VelocityField::for_mode(&p, &g, GatingMode::On, ProfileConvention::PeakEqualsMean);
        let u4 = compat.velocity_at(&g, 0.06, 0.5 * p.channel_width).0;
        assert!(rel(u4, 7.5e-3) < 1e-12);
    }

    #[test]
    fn segment_means_match_circuit() {
        for (mode, u_mean) in [
            (
                GatingMode::On,
                mean_velocity_on(&SystemParameters::default()),
            ),
            (
                GatingMode::Off,
                mean_velocity_off(&SystemParameters::default()),
            ),
        ] {
            let (p, g, vf) = setup(mode);
            let flows = HydraulicNetwork::new(&p).flows(mode);
            for i in [0, 10, 49] {
                let q = vf.column_flux(&g, i, Region::Supply);
                assert!(rel(q, flows.supply) < 1e-9);
            }
            for i in [71, 200, 399] {
                let q = vf.column_flux(&g, i, Region::Propagation);
                assert!(rel(q / p.channel_width, u_mean) < 1e-9, "{mode:?} {i}");
            }
            let l = g.layout.unwrap();
            assert!(rel(vf.row_downflux(&g, 0), flows.gate_outlet) < 1e-9);
            assert!(rel(vf.row_downflux(&g, l.main_row - 3), flows.gate_outlet) < 1e-9);
            let top = g.ny;
            let q_in = vf.row_downflux(&g, top - 1);
            assert!(rel(q_in, flows.gate_inlet) < 1e-9, "{mode:?} {q_in}");
            assert!(vf.max_divergence_ratio(&g) < 1e-10);
        }
    }

    #[test]
    fn wall_faces_are_zero() {
        let (_, g, vf) = setup(GatingMode::On);
        let l = g.layout.unwrap();
        let arm = l.junction_col..l.junction_col + 20;
        for i in (0..g.nx).filter(|i| !arm.contains(i)) {
            assert_eq!(vf.v_face(&g, i, l.main_row), 0.0);
            assert_eq!(vf.v_face(&g, i, l.main_row + 20), 0.0);
        }
        for j in 0..l.main_row {
            assert_eq!(vf.u_face(&g, l.junction_col, j), 0.0);
            assert_eq!(vf.u_face(&g, l.junction_col + 20, j), 0.0);
        }
        let j = l.main_row;
        let near_wall = vf.velocity_at(&g, 0.05, 0.0).0;
        assert_eq!(near_wall, 0.0);
        assert!(vf.u_face(&g, 100, j) > 0.0);
    }

    #[test]
    fn junction_direction() {
        let (p, g, vf) = setup(GatingMode::On);
        let (u, v) = vf.velocity_at(
            &g,
            p.supply_length + 0.5 * p.channel_width,
            0.5 * p.channel_width,
        );
        assert!(v < 0.0 && u > 0.0);
        let theta = vf.direction_at(
            &g,
            p.supply_length + 0.5 * p.channel_width,
            0.5 * p.channel_width,
        );
        assert!((theta - v.atan2(u).to_degrees()).abs() < 1e-12);
        assert!((-1.0f64).atan2(1.0).to_degrees() + 45.0 < 1e-12);
    }

    #[test]
    fn off_mode_gate_inlet_reverses() {
        let (_, g, vf) = setup(GatingMode::Off);
        assert!(vf.row_downflux(&g, g.ny - 1) < 0.0);
    }

    #[test]
    fn uniform_field_respects_walls() {
        let g = Grid::rectangle(4, 3, 1.0, None, None);
        let vf = VelocityField::uniform(&g, 2.0, 1.0);
        assert_eq!(vf.u_face(&g, 0, 1), 0.0);
        assert_eq!(vf.u_face(&g, 2, 1), 2.0);
        assert_eq!(vf.u_face(&g, 4, 1), 0.0);
        assert_eq!(vf.v_face(&g, 1, 0), 0.0);
        assert_eq!(vf.v_face(&g, 1, 3), 0.0);
        assert_eq!(vf.v_face(&g, 1, 1), 1.0);
    }
}
