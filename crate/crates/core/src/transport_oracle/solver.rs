//! Explicit finite-volume update for `dc/dt + u . grad c = D lap c`.
//!
//! Each step applies an x sweep and a y sweep (order alternates between
//! steps). A sweep updates every row (or column) span independently with
//! van Leer-limited upwind advection and central diffusion. Outgoing face
//! fluxes of a cell are scaled down whenever they would remove more than the
//! cell holds, which keeps the scheme positive without breaking
//! conservation.
//!
//! A single sweep sees a velocity that is not divergence-free on its own,
//! so a unit pseudo-density is advected alongside the tracer and the first
//! sweep hands the mixing ratio (content over density) to the second. After
//! both sweeps the density is one again and uniform fields stay uniform.

use serde::Serialize;

use super::grid::{Grid, PatchKind, Side, Span};
use super::velocity::VelocityField;
use super::TransportError;

/// Safety factor applied to the stability limit.
pub const CFL_SAFETY: f64 = 0.9;

/// Tracer concentration on every cell of a grid (zero in solids).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationField {
    pub t: f64,
    pub nx: usize,
    pub ny: usize,
    pub c: Vec<f64>,
}

impl ConcentrationField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            t: 0.0,
            nx: grid.nx,
            ny: grid.ny,
            c: vec![0.0; grid.nx * grid.ny],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.c[j * self.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.c[j * self.nx + i] = value;
    }

    /// Amount of tracer per unit depth, mol/m.
    pub fn total_mass(&self, grid: &Grid) -> f64 {
        self.c.iter().sum::<f64>() * grid.cell_area()
    }

    pub fn min(&self) -> f64 {
        self.c.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.c.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `x_m, y_m, c_mol_m3` rows for every fluid cell.
    pub fn write_csv<W: std::io::Write>(&self, grid: &Grid, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x_m", "y_m", "c_mol_m3"])?;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if grid.is_fluid(i, j) {
                    let (x, y) = grid.cell_center(i, j);
                    w.serialize((x, y, self.at(i, j)))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Inflow concentration for each inlet patch (ignored for outlets).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues(pub Vec<f64>);

impl BoundaryValues {
    pub fn zeros(grid: &Grid) -> Self {
        Self(vec![0.0; grid.patches.len()])
    }
}

/// Tracer crossing open boundaries during one step, mol per unit depth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepFlux {
    pub influx: f64,
    pub outflux: f64,
}

/// Largest stable time step before the safety factor.
pub fn stability_limit(vf: &VelocityField, diffusivity: f64, grid: &Grid) -> f64 {
    let (dx, dy) = (grid.dx, grid.dy);
    let mut limit = f64::INFINITY;
    let (umax, vmax) = (vf.max_abs_u(), vf.max_abs_v());
    if umax > 0.0 {
        limit = limit.min(dx / umax);
    }
    if vmax > 0.0 {
        limit = limit.min(dy / vmax);
    }
    if diffusivity > 0.0 {
        limit = limit.min(dx * dx * dy * dy / (2.0 * diffusivity * (dx * dx + dy * dy)));
    }
    limit
}

/// `0.9 * min(dx/max|u|, dy/max|v|, dx²dy²/(2D(dx²+dy²)))`.
pub fn stability_dt(vf: &VelocityField, diffusivity: f64, grid: &Grid) -> f64 {
    CFL_SAFETY * stability_limit(vf, diffusivity, grid)
}

#[derive(Debug, Clone, Copy)]
enum Edge {
    Wall,
    Inlet(f64),
    Outlet,
}

fn van_leer(r: f64) -> f64 {
    (r + r.abs()) / (1.0 + r.abs())
}

/// Scratch space and bookkeeping for repeated steps on one grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    line: Vec<f64>,
    rho_line: Vec<f64>,
    rho: Vec<f64>,
    amount: Vec<f64>,
    outgoing: Vec<f64>,
    steps: u64,
}

impl Stepper {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.nx.max(grid.ny);
        Self {
            line: vec![0.0; n],
            rho_line: vec![1.0; n],
            rho: vec![1.0; grid.nx * grid.ny],
            amount: vec![0.0; n + 1],
            outgoing: vec![0.0; n],
            steps: 0,
        }
    }

    /// Advances `field` by `dt`.
    pub fn step(
        &mut self,
        grid: &Grid,
        field: &mut ConcentrationField,
        vf: &VelocityField,
        bc: &BoundaryValues,
        diffusivity: f64,
        dt: f64,
    ) -> Result<StepFlux, TransportError> {
        let limit = stability_limit(vf, diffusivity, grid);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(TransportError::UnstableTimestep { dt, limit });
        }
        let mut flux = StepFlux::default();
        if self.steps.is_multiple_of(2) {
            self.sweep_rows(grid, field, vf, bc, diffusivity, dt, true, &mut flux);
            self.sweep_cols(grid, field, vf, bc, diffusivity, dt, false, &mut flux);
        } else {
            self.sweep_cols(grid, field, vf, bc, diffusivity, dt, true, &mut flux);
            self.sweep_rows(grid, field, vf, bc, diffusivity, dt, false, &mut flux);
        }
        self.steps += 1;
        field.t += dt;
        Ok(flux)
    }

    fn edge(grid: &Grid, bc: &BoundaryValues, side: Side) -> Edge {
        match side {
            Side::Wall => Edge::Wall,
            Side::Patch(id) => match grid.patches[id].kind {
                PatchKind::Inlet => Edge::Inlet(bc.0[id]),
                PatchKind::Outlet => Edge::Outlet,
            },
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn sweep_rows(
        &mut self,
        grid: &Grid,
        field: &mut ConcentrationField,
        vf: &VelocityField,
        bc: &BoundaryValues,
        diffusivity: f64,
        dt: f64,
        first: bool,
        flux: &mut StepFlux,
    ) {
        let lam = dt / grid.dx;
        let lamd = diffusivity * dt / (grid.dx * grid.dx);
        let area = grid.cell_area();
        for s in &grid.rows {
            let Span {
                line: j,
                start,
                len,
                lo,
                hi,
            } = *s;
            let base = j * grid.nx + start;
            let faces = &vf.u[j * (grid.nx + 1) + start..=j * (grid.nx + 1) + start + len];
            let c = &mut field.c[base..base + len];
            let rho = &mut self.rho[base..base + len];
            if first {
                rho.fill(1.0);
            }
            let (fin, fout) = sweep_line(
                c,
                rho,
                first,
                faces,
                Self::edge(grid, bc, lo),
                Self::edge(grid, bc, hi),
                lam,
                lamd,
                &mut self.amount,
                &mut self.outgoing,
            );
            flux.influx += fin * area;
            flux.outflux += fout * area;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn sweep_cols(
        &mut self,
        grid: &Grid,
        field: &mut ConcentrationField,
        vf: &VelocityField,
        bc: &BoundaryValues,
        diffusivity: f64,
        dt: f64,
        first: bool,
        flux: &mut StepFlux,
    ) {
        let lam = dt / grid.dy;
        let lamd = diffusivity * dt / (grid.dy * grid.dy);
        let area = grid.cell_area();
        let nx = grid.nx;
        for s in &grid.cols {
            let Span {
                line: i,
                start,
                len,
                lo,
                hi,
            } = *s;
            let faces = &vf.v[i * (grid.ny + 1) + start..=i * (grid.ny + 1) + start + len];
            for k in 0..len {
                self.line[k] = field.c[(start + k) * nx + i];
                self.rho_line[k] = if first {
                    1.0
                } else {
                    self.rho[(start + k) * nx + i]
                };
            }
            let (fin, fout) = sweep_line(
                &mut self.line[..len],
                &mut self.rho_line[..len],
                first,
                faces,
                Self::edge(grid, bc, lo),
                Self::edge(grid, bc, hi),
                lam,
                lamd,
                &mut self.amount,
                &mut self.outgoing,
            );
            for k in 0..len {
                field.c[(start + k) * nx + i] = self.line[k];
                if first {
                    self.rho[(start + k) * nx + i] = self.rho_line[k];
                }
            }
            flux.influx += fin * area;
            flux.outflux += fout * area;
        }
    }
}

/// One-dimensional conservative update of `n` cells with face velocities
/// `u` (n + 1 faces). `c` is the mixing ratio and `rho` the pseudo-density,
/// so a cell holds `c * rho`. The first sweep of a step advances `rho` and
/// returns the new mixing ratio; the second returns the content (its
/// density is one). Returns tracer entering and leaving through the two
/// ends, in concentration units (multiply by the cell area).
#[allow(clippy::too_many_arguments)]
fn sweep_line(
    c: &mut [f64],
    rho: &mut [f64],
    first: bool,
    u: &[f64],
    lo: Edge,
    hi: Edge,
    lam: f64,
    lamd: f64,
    amount: &mut [f64],
    outgoing: &mut [f64],
) -> (f64, f64) {
    let n = c.len();
    let ghost = |edge: Edge, cell: f64| match edge {
        Edge::Inlet(v) => v,
        _ => cell,
    };
    // amount[f] > 0 moves tracer from cell f-1 to cell f.
    amount[0] = match lo {
        Edge::Wall => 0.0,
        Edge::Inlet(cb) if u[0] > 0.0 => lam * u[0] * cb + 2.0 * lamd * (cb - c[0]),
        _ => lam * u[0] * c[0],
    };
    amount[n] = match hi {
        Edge::Wall => 0.0,
        Edge::Inlet(cb) if u[n] < 0.0 => lam * u[n] * cb - 2.0 * lamd * (cb - c[n - 1]),
        _ => lam * u[n] * c[n - 1],
    };
    for f in 1..n {
        let vel = u[f];
        let adv = if vel == 0.0 {
            0.0
        } else {
            let (up, down, upup) = if vel > 0.0 {
                let upup = if f >= 2 {
                    c[f - 2]
                } else {
                    ghost(lo, c[f - 1])
                };
                (c[f - 1], c[f], upup)
            } else {
                let upup = if f + 1 < n { c[f + 1] } else { ghost(hi, c[f]) };
                (c[f], c[f - 1], upup)
            };
            let jump = down - up;
            let face = if jump == 0.0 {
                up
            } else {
                let courant = (vel * lam).abs();
                up + 0.5 * (1.0 - courant) * van_leer((up - upup) / jump) * jump
            };
            lam * vel * face
        };
        amount[f] = adv - lamd * (c[f] - c[f - 1]);
    }
    for i in 0..n {
        outgoing[i] = amount[i + 1].max(0.0) + (-amount[i]).max(0.0);
        // From here on c holds the cell content.
        c[i] *= rho[i];
    }
    for f in 0..=n {
        let a = amount[f];
        let donor = if a > 0.0 {
            f.checked_sub(1)
        } else if f < n {
            Some(f)
        } else {
            None
        };
        if let Some(d) = donor {
            if outgoing[d] > c[d] {
                amount[f] = if c[d] > 0.0 {
                    a * (c[d] / outgoing[d])
                } else {
                    0.0
                };
            }
        }
    }
    for i in 0..n {
        c[i] += amount[i] - amount[i + 1];
        if first {
            rho[i] -= lam * (u[i + 1] - u[i]);
            if rho[i] > 0.0 {
                c[i] /= rho[i];
            }
        }
    }
    let (a0, an) = (amount[0], amount[n]);
    (a0.max(0.0) + (-an).max(0.0), (-a0).max(0.0) + an.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydraulics::GatingMode;
    use crate::params::SystemParameters;
    use crate::transport_oracle::grid::build_grid;
    use crate::transport_oracle::velocity::ProfileConvention;

    #[test]
    fn advective_limit_example() {
        let g = Grid::rectangle(40, 20, 2.5e-4, None, None);
        let vf = VelocityField::uniform(&g, 1.125e-2, 0.0);
        let dt = stability_dt(&vf, 1e-10, &g);
        assert!((dt - 0.9 * 2.5e-4 / 1.125e-2).abs() < 1e-15);
        assert!((dt - 0.02).abs() < 1e-12);
    }

    #[test]
    fn diffusive_limit_scaling() {
        let g = Grid::rectangle(10, 10, 1e-3, None, None);
        let vf = VelocityField::zero(&g);
        let dt = stability_dt(&vf, 1e-9, &g);
        assert!((dt - 0.9 * 1e-6 / 4e-9).abs() / dt < 1e-12);
        let dt2 = stability_dt(&vf, 2e-9, &g);
        assert!((dt / dt2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unstable_step() {
        let g = Grid::rectangle(10, 4, 1e-3, None, None);
        let vf = VelocityField::uniform(&g, 1.0, 0.0);
        let mut f = ConcentrationField::zeros(&g);
        let bc = BoundaryValues::zeros(&g);
        let err = Stepper::new(&g)
            .step(&g, &mut f, &vf, &bc, 0.0, 2e-3)
            .unwrap_err();
        assert!(matches!(err, TransportError::UnstableTimestep { .. }));
    }

    #[test]
    fn closed_box_conserves_point_mass() {
        let g = Grid::rectangle(30, 30, 1e-4, None, None);
        let vf = VelocityField::zero(&g);
        let mut f = ConcentrationField::zeros(&g);
        f.set(15, 15, 1.0);
        let bc = BoundaryValues::zeros(&g);
        let d = 1e-9;
        let dt = stability_dt(&vf, d, &g);
        let mut st = Stepper::new(&g);
        let m0 = f.total_mass(&g);
        for _ in 0..50 {
            let before = f.total_mass(&g);
            st.step(&g, &mut f, &vf, &bc, d, dt).unwrap();
            assert!((f.total_mass(&g) - before).abs() <= 1e-12 * m0);
        }
        assert!(f.min() >= 0.0);
    }

    #[test]
    fn inlet_fills_channel_with_supply_value() {
        let g = Grid::rectangle(40, 4, 1e-3, Some(PatchKind::Inlet), Some(PatchKind::Outlet));
        let vf = VelocityField::uniform(&g, 1e-3, 0.0);
        let mut f = ConcentrationField::zeros(&g);
        let bc = BoundaryValues(vec![2.0, 0.0]);
        let dt = stability_dt(&vf, 0.0, &g);
        let mut st = Stepper::new(&g);
        for _ in 0..200 {
            st.step(&g, &mut f, &vf, &bc, 0.0, dt).unwrap();
        }
        for j in 0..4 {
            assert!((f.at(0, j) - 2.0).abs() < 1e-12);
            assert!((f.at(39, j) - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn junction_run_balances_mass_and_stays_positive() {
        let p = SystemParameters::default();
        let g = build_grid(&p, 8).unwrap();
        let vf =
            VelocityField::for_mode(&p, &g, GatingMode::Off, ProfileConvention::MeanPreserving);
        let mut f = ConcentrationField::zeros(&g);
        let mut bc = BoundaryValues::zeros(&g);
        bc.0[crate::transport_oracle::grid::SUPPLY_INLET] = p.supply_concentration;
        let dt = stability_dt(&vf, p.diffusivity, &g);
        let mut st = Stepper::new(&g);
        for _ in 0..400 {
            let before = f.total_mass(&g);
            let fl = st.step(&g, &mut f, &vf, &bc, p.diffusivity, dt).unwrap();
            let after = f.total_mass(&g);
            let scale = after.max(1e-300);
            assert!(((after - before) - (fl.influx - fl.outflux)).abs() <= 1e-9 * scale);
            assert!(f.min() >= -1e-15 * p.supply_concentration);
        }
        assert!(f.max() <= p.supply_concentration * (1.0 + 1e-9));
    }
}
