//! Uniform Cartesian mesh of the cross junction (or a plain rectangle).
//!
//! Cells live in a dense `nx * ny` bounding box; cell `(i, j)` has index
//! `j * nx + i` and lower-left corner `origin + (i dx, j dy)`. Solid cells
//! carry no region. Each maximal run of fluid cells along a row or column
//! is a [`Span`] whose two ends are either walls or open boundary patches.

use serde::Serialize;

use super::TransportError;
use crate::params::SystemParameters;

/// Minimum number of cells across the channel width.
pub const MIN_CELLS_ACROSS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Supply,
    Junction,
    Propagation,
    GateInlet,
    GateOutlet,
    /// Any cell of a rectangular test domain.
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchKind {
    /// Prescribed concentration on inflow, upwinded on outflow.
    Inlet,
    /// Zero-gradient.
    Outlet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Patch {
    pub name: &'static str,
    pub kind: PatchKind,
}

/// What terminates a span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Wall,
    Patch(usize),
}

/// Contiguous fluid cells on one row (`line` = j) or column (`line` = i).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub start: usize,
    pub len: usize,
    pub lo: Side,
    pub hi: Side,
}

/// Cell-index placement of the cross junction inside the bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JunctionLayout {
    /// Cells across every channel.
    pub across: usize,
    /// First row of the main channel.
    pub main_row: usize,
    /// First column of the junction square.
    pub junction_col: usize,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: (f64, f64),
    pub regions: Vec<Option<Region>>,
    pub patches: Vec<Patch>,
    pub rows: Vec<Span>,
    pub cols: Vec<Span>,
    pub layout: Option<JunctionLayout>,
}

pub const SUPPLY_INLET: usize = 0;
pub const GATE_INLET: usize = 1;
pub const PROPAGATION_OUTLET: usize = 2;
pub const GATE_OUTLET: usize = 3;

/// Patch ids attached to the four faces of the bounding box.
struct EdgePatches<'a> {
    west: &'a dyn Fn(usize) -> Option<usize>,
    east: &'a dyn Fn(usize) -> Option<usize>,
    south: &'a dyn Fn(usize) -> Option<usize>,
    north: &'a dyn Fn(usize) -> Option<usize>,
}

impl Grid {
    fn assemble(
        nx: usize,
        ny: usize,
        dx: f64,
        origin: (f64, f64),
        regions: Vec<Option<Region>>,
        patches: Vec<Patch>,
        edges: EdgePatches<'_>,
        layout: Option<JunctionLayout>,
    ) -> Self {
        let side = |p: Option<usize>| p.map_or(Side::Wall, Side::Patch);
        let mut rows = Vec::new();
        for j in 0..ny {
            for (start, len) in runs((0..nx).map(|i| regions[j * nx + i].is_some())) {
                let lo = if start == 0 {
                    side((edges.west)(j))
                } else {
                    Side::Wall
                };
                let hi = if start + len == nx {
                    side((edges.east)(j))
                } else {
                    Side::Wall
                };
                rows.push(Span {
                    line: j,
                    start,
                    len,
                    lo,
                    hi,
                });
            }
        }
        let mut cols = Vec::new();
        for i in 0..nx {
            for (start, len) in runs((0..ny).map(|j| regions[j * nx + i].is_some())) {
                let lo = if start == 0 {
                    side((edges.south)(i))
                } else {
                    Side::Wall
                };
                let hi = if start + len == ny {
                    side((edges.north)(i))
                } else {
                    Side::Wall
                };
                cols.push(Span {
                    line: i,
                    start,
                    len,
                    lo,
                    hi,
                });
            }
        }
        Self {
            nx,
            ny,
            dx,
            dy: dx,
            origin,
            regions,
            patches,
            rows,
            cols,
            layout,
        }
    }

    /// Closed or open rectangle of `nx * ny` fluid cells with the lower-left
    /// corner at the origin. `west`/`east` optionally open the short sides.
    pub fn rectangle(
        nx: usize,
        ny: usize,
        dx: f64,
        west: Option<PatchKind>,
        east: Option<PatchKind>,
    ) -> Self {
        let mut patches = Vec::new();
        let mut west_id = None;
        let mut east_id = None;
        if let Some(kind) = west {
            west_id = Some(patches.len());
            patches.push(Patch { name: "west", kind });
        }
        if let Some(kind) = east {
            east_id = Some(patches.len());
            patches.push(Patch { name: "east", kind });
        }
        let regions = vec![Some(Region::Interior); nx * ny];
        Self::assemble(
            nx,
            ny,
            dx,
            (0.0, 0.0),
            regions,
            patches,
            EdgePatches {
                west: &|_| west_id,
                east: &|_| east_id,
                south: &|_| None,
                north: &|_| None,
            },
            None,
        )
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (i as f64 + 0.5) * self.dx,
            self.origin.1 + (j as f64 + 0.5) * self.dy,
        )
    }

    pub fn is_fluid(&self, i: usize, j: usize) -> bool {
        self.regions[self.index(i, j)].is_some()
    }

    pub fn fluid_cell_count(&self) -> usize {
        self.regions.iter().filter(|r| r.is_some()).count()
    }

    pub fn region_cell_count(&self, region: Region) -> usize {
        self.regions.iter().filter(|r| **r == Some(region)).count()
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Number of cells along the main channel (the junction grid spans it).
    pub fn main_channel_cells(&self) -> usize {
        self.nx
    }
}

/// Maximal runs of `true` as `(start, len)`.
fn runs(flags: impl Iterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (k, f) in flags.enumerate() {
        n = k + 1;
        match (f, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((s, k - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, n - s));
    }
    out
}

fn cells(length: f64, dx: f64) -> usize {
    (length / dx).round() as usize
}

/// Meshes the cross junction with `cells_across` cells over `w_ch`.
///
/// The main channel occupies `y in [0, w_ch]` and `x in [0, l_ch]`; the
/// junction square starts at `x = l_s`. The gating inlet arm rises above
/// the junction and the gating outlet arm hangs below it.
pub fn build_grid(p: &SystemParameters, cells_across: usize) -> Result<Grid, TransportError> {
    if cells_across < MIN_CELLS_ACROSS {
        return Err(TransportError::ResolutionTooCoarse { cells_across });
    }
    let n = cells_across;
    let dx = p.channel_width / n as f64;
    let n_supply = cells(p.supply_length, dx).max(1);
    let n_main = cells(p.channel_length, dx);
    let n_in = cells(p.gate_inlet_length, dx).max(1);
    let n_out = cells(p.gate_outlet_length, dx).max(1);
    if n_supply + n >= n_main {
        return Err(TransportError::Geometry(format!(
            "junction ends at cell {} but the main channel has only {n_main} cells",
            n_supply + n
        )));
    }
    let nx = n_main;
    let ny = n_out + n + n_in;
    let (j0, is) = (n_out, n_supply);
    let mut regions = vec![None; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let in_main = (j0..j0 + n).contains(&j);
            let in_arm_cols = (is..is + n).contains(&i);
            regions[j * nx + i] = if in_main {
                Some(if i < is {
                    Region::Supply
                } else if in_arm_cols {
                    Region::Junction
                } else {
                    Region::Propagation
                })
            } else if in_arm_cols {
                Some(if j < j0 {
                    Region::GateOutlet
                } else {
                    Region::GateInlet
                })
            } else {
                None
            };
        }
    }
    let patches = vec![
        Patch {
            name: "supply_inlet",
            kind: PatchKind::Inlet,
        },
        Patch {
            name: "gate_inlet",
            kind: PatchKind::Inlet,
        },
        Patch {
            name: "propagation_outlet",
            kind: PatchKind::Outlet,
        },
        Patch {
            name: "gate_outlet",
            kind: PatchKind::Outlet,
        },
    ];
    let main = move |j: usize| (j0..j0 + n).contains(&j);
    let arm = move |i: usize| (is..is + n).contains(&i);
    Ok(Grid::assemble(
        nx,
        ny,
        dx,
        (0.0, -(n_out as f64) * dx),
        regions,
        patches,
        EdgePatches {
            west: &|j| main(j).then_some(SUPPLY_INLET),
            east: &|j| main(j).then_some(PROPAGATION_OUTLET),
            south: &|i| arm(i).then_some(GATE_OUTLET),
            north: &|i| arm(i).then_some(GATE_INLET),
        },
        Some(JunctionLayout {
            across: n,
            main_row: j0,
            junction_col: is,
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_dimensions() {
        let g = build_grid(&SystemParameters::default(), 20).unwrap();
        assert!((g.dx - 2.5e-4).abs() < 1e-18);
        assert_eq!(g.main_channel_cells(), 400);
        assert_eq!(g.ny, 50 + 20 + 50);
        assert_eq!(g.fluid_cell_count(), 400 * 20 + 2 * 20 * 50);
        assert_eq!(g.region_cell_count(Region::Junction), 400);
        assert_eq!(g.region_cell_count(Region::Supply), 50 * 20);
        let l = g.layout.unwrap();
        let (x, y) = g.cell_center(l.junction_col, l.main_row);
        assert!((x - (12.5e-3 + 1.25e-4)).abs() < 1e-15);
        assert!((y - 1.25e-4).abs() < 1e-15);
    }

    #[test]
    fn too_coarse() {
        assert!(matches!(
            build_grid(&SystemParameters::default(), 4),
            Err(TransportError::ResolutionTooCoarse { cells_across: 4 })
        ));
    }

    #[test]
    fn refinement_quadruples_cells() {
        let p = SystemParameters::default();
        let a = build_grid(&p, 10).unwrap().fluid_cell_count();
        let b = build_grid(&p, 20).unwrap().fluid_cell_count();
        let c = build_grid(&p, 40).unwrap().fluid_cell_count();
        assert_eq!(b, 4 * a);
        assert_eq!(c, 4 * b);
    }

    #[test]
    fn spans_cover_fluid_and_carry_patches() {
        let g = build_grid(&SystemParameters::default(), 8).unwrap();
        let row_cells: usize = g.rows.iter().map(|s| s.len).sum();
        let col_cells: usize = g.cols.iter().map(|s| s.len).sum();
        assert_eq!(row_cells, g.fluid_cell_count());
        assert_eq!(col_cells, g.fluid_cell_count());
        let l = g.layout.unwrap();
        let main = g.rows.iter().find(|s| s.line == l.main_row).unwrap();
        assert_eq!((main.start, main.len), (0, g.nx));
        assert_eq!(main.lo, Side::Patch(SUPPLY_INLET));
        assert_eq!(main.hi, Side::Patch(PROPAGATION_OUTLET));
        let arm = g.cols.iter().find(|s| s.line == l.junction_col).unwrap();
        assert_eq!((arm.start, arm.len), (0, g.ny));
        assert_eq!(arm.lo, Side::Patch(GATE_OUTLET));
        assert_eq!(arm.hi, Side::Patch(GATE_INLET));
        let supply_col = g.cols.iter().find(|s| s.line == 0).unwrap();
        assert_eq!((supply_col.lo, supply_col.hi), (Side::Wall, Side::Wall));
    }

    #[test]
    fn rectangle_is_closed_by_default() {
        let g = Grid::rectangle(5, 3, 1.0, None, Some(PatchKind::Outlet));
        assert_eq!(g.rows.len(), 3);
        assert!(g
            .rows
            .iter()
            .all(|s| s.lo == Side::Wall && s.hi == Side::Patch(0)));
        assert!(g
            .cols
            .iter()
            .all(|s| s.lo == Side::Wall && s.hi == Side::Wall));
    }
}
