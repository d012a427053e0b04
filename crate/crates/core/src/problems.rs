//! Benchmark problems and their configuration schema.
//!
//! Built-in geometries (all cells square, unit thickness, `F = 1`):
//!
//! - `lbeam`: an `nx x ny` square with the lower-right `0.6 nx x 0.6 ny`
//!   block removed. The vertical arm is clamped along the bottom edge, which
//!   also carries the base plate, so the part grows upward (`theta0 = 90`
//!   degrees). A downward load acts at mid-height of the free end of the
//!   upper arm. Default 100 x 100 cells of size 0.01 (6,400 design cells).
//! - `cantilever_cutout`: a `175 x 100` beam clamped along the left edge,
//!   which carries the base plate (`theta0 = 0`), with a rectangular passive
//!   hole and a downward load at mid-height of the right edge.
//! - `custom`: any grid with a run-length-encoded cell mask, supports on
//!   edges and point loads.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintParams;
use crate::error::{Error, Result};
use crate::fea::SolveOptions;
use crate::fields::{ContinuationSchedule, DesignVector};
use crate::grid::{CellKind, Domain, Edge, Grid};
use crate::material::{MaterialMode, MaterialModel};
use crate::model::Evaluation;
use crate::optimizer::OptimizerSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Lbeam,
    CantileverCutout,
    Custom,
}

/// Rectangle of cells `[x, x + width) x [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportDofs {
    Xy,
    X,
    Y,
}

/// Supports every node on `edge` that touches a non-void cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub edge: Edge,
    #[serde(default = "default_support_dofs")]
    pub dofs: SupportDofs,
}

fn default_support_dofs() -> SupportDofs {
    SupportDofs::Xy
}

/// Point force at grid node `(ix, iy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub node: [usize; 2],
    pub force: [f64; 2],
}

/// Run configuration for one optimization problem. Every field has a
/// default reproducing the reference setup of the chosen `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub kind: ProblemKind,
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default)]
    pub element_size: Option<f64>,
    #[serde(default = "default_v0")]
    pub v0: f64,
    #[serde(default = "default_stages")]
    pub stages: usize,
    /// Initial and reference build orientation, degrees.
    #[serde(default)]
    pub theta0_deg: Option<f64>,
    #[serde(default = "default_material")]
    pub material: MaterialMode,
    /// Overrides the tabulated moduli for `material`.
    #[serde(default)]
    pub moduli: Option<MaterialModel>,
    #[serde(default = "default_penal")]
    pub penal: f64,
    /// Filter radius in element lengths, shared by density and time.
    #[serde(default = "default_radius")]
    pub filter_radius: f64,
    /// Must equal `v0` when given.
    #[serde(default)]
    pub initial_density: Option<f64>,
    /// Passive void block; defaults depend on `kind`.
    #[serde(default)]
    pub cutout: Option<CellRect>,
    #[serde(default)]
    pub base_edge: Option<Edge>,
    #[serde(default)]
    pub supports: Option<Vec<SupportSpec>>,
    #[serde(default)]
    pub loads: Option<Vec<LoadSpec>>,
    /// Cell mask rows for `custom`, bottom row first. Each row is a run-length
    /// string such as `"10d5v"` (`d` design, `v` void, `s` solid).
    #[serde(default)]
    pub rows: Option<Vec<String>>,
    #[serde(default)]
    pub constraints: ConstraintParams,
    #[serde(default)]
    pub continuation: ContinuationSchedule,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub solver: SolveOptions,
}

fn default_v0() -> f64 {
    0.5
}
fn default_stages() -> usize {
    5
}
fn default_material() -> MaterialMode {
    MaterialMode::Isotropic
}
fn default_penal() -> f64 {
    3.0
}
fn default_radius() -> f64 {
    5.0
}

impl BenchmarkConfig {
    pub fn new(kind: ProblemKind) -> Self {
        Self {
            kind,
            nx: None,
            ny: None,
            element_size: None,
            v0: default_v0(),
            stages: default_stages(),
            theta0_deg: None,
            material: default_material(),
            moduli: None,
            penal: default_penal(),
            filter_radius: default_radius(),
            initial_density: None,
            cutout: None,
            base_edge: None,
            supports: None,
            loads: None,
            rows: None,
            constraints: ConstraintParams::default(),
            continuation: ContinuationSchedule::default(),
            optimizer: OptimizerSettings::default(),
            solver: SolveOptions::default(),
        }
    }

    /// L-beam on a `n x n` grid spanning a unit square.
    pub fn lbeam(n: usize) -> Self {
        Self {
            nx: Some(n),
            ny: Some(n),
            element_size: Some(1.0 / n as f64),
            ..Self::new(ProblemKind::Lbeam)
        }
    }

    pub fn build(&self) -> Result<(Problem, DesignVector)> {
        match self.kind {
            ProblemKind::Lbeam => build_lbeam(self),
            ProblemKind::CantileverCutout => build_cantilever_cutout(self),
            ProblemKind::Custom => build_custom(self),
        }
    }
}

/// Immutable description of one optimization problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub kind: ProblemKind,
    pub domain: Domain,
    pub material: MaterialModel,
    pub penal: f64,
    pub filter_radius: f64,
    pub v0: f64,
    pub n_stages: usize,
    /// Radians.
    pub theta0: f64,
    pub constraints: ConstraintParams,
    /// Resolved overhang bound.
    pub p_bar: f64,
    pub fixed_dofs: Vec<usize>,
    pub loads: Vec<f64>,
    pub continuation: ContinuationSchedule,
    pub optimizer: OptimizerSettings,
    pub solver: SolveOptions,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0 && self.v0 <= 1.0) {
            return Err(Error::config("v0 must lie in (0, 1]"));
        }
        if self.n_stages == 0 {
            return Err(Error::config("at least one stage is required"));
        }
        if !(self.penal >= 1.0) {
            return Err(Error::config("penal must be at least 1"));
        }
        if !(self.filter_radius >= 1.0) {
            return Err(Error::config("filter_radius must be at least one element length"));
        }
        if self.fixed_dofs.is_empty() {
            return Err(Error::config("no supports"));
        }
        if self.loads.iter().all(|&f| f == 0.0) {
            return Err(Error::config("load vector is zero"));
        }
        self.constraints.validate()?;
        self.material.validate()?;
        Ok(())
    }

    /// Orientation bounds `theta0 -/+ pi/2`.
    pub fn theta_bounds(&self) -> (f64, f64) {
        (self.theta0 - FRAC_PI_2, self.theta0 + FRAC_PI_2)
    }

    /// Uniform density `v0`, time growing linearly with distance from the
    /// base plate along the initial build direction, all stages at `theta0`.
    pub fn initial_design(&self) -> DesignVector {
        let d = &self.domain;
        let b = [self.theta0.cos(), self.theta0.sin()];
        let s: Vec<f64> = d
            .design_cells()
            .iter()
            .map(|&c| {
                let p = d.grid.centroid(c);
                b[0] * p[0] + b[1] * p[1]
            })
            .collect();
        let lo = s
            .iter()
            .zip(&d.base_plate)
            .filter(|(_, &bp)| bp)
            .map(|(v, _)| *v)
            .fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        let tau = s
            .iter()
            .zip(&d.base_plate)
            .map(|(v, &bp)| if bp { 0.0 } else { ((v - lo) / span).clamp(0.0, 1.0) })
            .collect();
        DesignVector {
            psi: vec![self.v0; d.n_design()],
            tau,
            theta: vec![self.theta0; self.n_stages],
        }
    }
}

fn grid_of(cfg: &BenchmarkConfig, nx: usize, ny: usize, h: f64) -> Result<Grid> {
    Grid::new(cfg.nx.unwrap_or(nx), cfg.ny.unwrap_or(ny), cfg.element_size.unwrap_or(h))
}

fn check_rect(grid: &Grid, r: &CellRect) -> Result<()> {
    if r.width == 0 || r.height == 0 || r.x + r.width > grid.nx || r.y + r.height > grid.ny {
        return Err(Error::config(format!(
            "cutout {}x{} at ({}, {}) does not fit the {}x{} grid",
            r.width, r.height, r.x, r.y, grid.nx, grid.ny
        )));
    }
    Ok(())
}

fn carve(grid: &Grid, kinds: &mut [CellKind], r: &CellRect) {
    for iy in r.y..r.y + r.height {
        for ix in r.x..r.x + r.width {
            kinds[grid.cell(ix, iy)] = CellKind::Void;
        }
    }
}

/// Nodes on `edge` that belong to at least one non-void cell.
fn edge_support_nodes(grid: &Grid, kinds: &[CellKind], edge: Edge) -> Vec<usize> {
    let mut nodes: Vec<usize> = grid
        .edge_cells(edge)
        .into_iter()
        .filter(|&c| kinds[c] != CellKind::Void)
        .flat_map(|c| {
            let n = grid.cell_nodes(c);
            let pick = match edge {
                Edge::Bottom => [n[0], n[1]],
                Edge::Right => [n[1], n[2]],
                Edge::Top => [n[2], n[3]],
                Edge::Left => [n[3], n[0]],
            };
            pick.into_iter()
        })
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

fn supports_to_dofs(grid: &Grid, kinds: &[CellKind], specs: &[SupportSpec]) -> Vec<usize> {
    let mut dofs: Vec<usize> = specs
        .iter()
        .flat_map(|s| {
            edge_support_nodes(grid, kinds, s.edge)
                .into_iter()
                .flat_map(move |n| match s.dofs {
                    SupportDofs::Xy => vec![2 * n, 2 * n + 1],
                    SupportDofs::X => vec![2 * n],
                    SupportDofs::Y => vec![2 * n + 1],
                })
        })
        .collect();
    dofs.sort_unstable();
    dofs.dedup();
    dofs
}

fn loads_to_vector(grid: &Grid, specs: &[LoadSpec]) -> Result<Vec<f64>> {
    let mut f = vec![0.0; 2 * grid.n_nodes()];
    for l in specs {
        let [ix, iy] = l.node;
        if ix > grid.nx || iy > grid.ny {
            return Err(Error::config(format!(
                "load node ({ix}, {iy}) outside the {}x{} grid",
                grid.nx, grid.ny
            )));
        }
        let n = grid.node(ix, iy);
        f[2 * n] += l.force[0];
        f[2 * n + 1] += l.force[1];
    }
    Ok(f)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    cfg: &BenchmarkConfig,
    grid: Grid,
    kinds: Vec<CellKind>,
    base_edge: Edge,
    supports: &[SupportSpec],
    loads: &[LoadSpec],
    theta0_deg: f64,
) -> Result<(Problem, DesignVector)> {
    if let Some(d) = cfg.initial_density {
        if (d - cfg.v0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "initial_density {d} must equal v0 {} so the start satisfies the volume budget",
                cfg.v0
            )));
        }
    }
    let base_cells: Vec<usize> = grid
        .edge_cells(base_edge)
        .into_iter()
        .filter(|&c| kinds[c] == CellKind::Design)
        .collect();
    let fixed_dofs = supports_to_dofs(&grid, &kinds, supports);
    let loads = loads_to_vector(&grid, loads)?;
    let domain = Domain::new(grid, kinds, base_edge, &base_cells)?;
    let material = match cfg.moduli {
        Some(m) => m,
        None => MaterialModel::for_mode(cfg.material),
    };
    let p_bar = cfg.constraints.resolved_p_bar(domain.n_design());
    let problem = Problem {
        kind: cfg.kind,
        material,
        penal: cfg.penal,
        filter_radius: cfg.filter_radius,
        v0: cfg.v0,
        n_stages: cfg.stages,
        theta0: theta0_deg.to_radians(),
        constraints: cfg.constraints.clone(),
        p_bar,
        fixed_dofs,
        loads,
        continuation: cfg.continuation.clone(),
        optimizer: cfg.optimizer.clone(),
        solver: cfg.solver,
        domain,
    };
    problem.validate()?;
    let x0 = problem.initial_design();
    Ok((problem, x0))
}

pub fn build_lbeam(cfg: &BenchmarkConfig) -> Result<(Problem, DesignVector)> {
    let grid = grid_of(cfg, 100, 100, 0.01)?;
    let (nx, ny) = (grid.nx, grid.ny);
    let cut = cfg.cutout.unwrap_or_else(|| {
        let w = (0.6 * nx as f64).round() as usize;
        let h = (0.6 * ny as f64).round() as usize;
        CellRect {
            x: nx - w,
            y: 0,
            width: w,
            height: h,
        }
    });
    check_rect(&grid, &cut)?;
    if cut.x == 0 || cut.y + cut.height >= ny {
        return Err(Error::config("L-beam cutout must leave both arms in place"));
    }
    let mut kinds = vec![CellKind::Design; grid.n_cells()];
    carve(&grid, &mut kinds, &cut);
    let base_edge = cfg.base_edge.unwrap_or(Edge::Bottom);
    let supports = cfg.supports.clone().unwrap_or(vec![SupportSpec {
        edge: Edge::Bottom,
        dofs: SupportDofs::Xy,
    }]);
    let arm_mid = (cut.y + cut.height + ny) / 2;
    let loads = cfg.loads.clone().unwrap_or(vec![LoadSpec {
        node: [nx, arm_mid],
        force: [0.0, -1.0],
    }]);
    assemble(cfg, grid, kinds, base_edge, &supports, &loads, cfg.theta0_deg.unwrap_or(90.0))
}

pub fn build_cantilever_cutout(cfg: &BenchmarkConfig) -> Result<(Problem, DesignVector)> {
    let grid = grid_of(cfg, 175, 100, 0.01)?;
    let (nx, ny) = (grid.nx, grid.ny);
    let cut = cfg.cutout.unwrap_or_else(|| {
        let fx = |v: f64| (v * nx as f64 / 175.0).round() as usize;
        let fy = |v: f64| (v * ny as f64 / 100.0).round() as usize;
        CellRect {
            x: fx(60.0),
            y: fy(35.0),
            width: fx(100.0) - fx(60.0),
            height: fy(65.0) - fy(35.0),
        }
    });
    check_rect(&grid, &cut)?;
    let mut kinds = vec![CellKind::Design; grid.n_cells()];
    carve(&grid, &mut kinds, &cut);
    let base_edge = cfg.base_edge.unwrap_or(Edge::Left);
    let supports = cfg.supports.clone().unwrap_or(vec![SupportSpec {
        edge: Edge::Left,
        dofs: SupportDofs::Xy,
    }]);
    let loads = cfg.loads.clone().unwrap_or(vec![LoadSpec {
        node: [nx, ny / 2],
        force: [0.0, -1.0],
    }]);
    assemble(cfg, grid, kinds, base_edge, &supports, &loads, cfg.theta0_deg.unwrap_or(0.0))
}

/// Parses one run-length row such as `"3d2v"`; a bare letter counts once.
pub fn parse_mask_row(row: &str) -> Result<Vec<CellKind>> {
    let mut out = Vec::new();
    let mut count = String::new();
    for ch in row.chars().filter(|c| !c.is_whitespace()) {
        if ch.is_ascii_digit() {
            count.push(ch);
            continue;
        }
        let kind = match ch {
            'd' | 'D' => CellKind::Design,
            'v' | 'V' => CellKind::Void,
            's' | 'S' => CellKind::Solid,
            other => {
                return Err(Error::config(format!(
                    "unknown cell code '{other}' in mask row \"{row}\""
                )))
            }
        };
        let n = if count.is_empty() {
            1
        } else {
            count
                .parse::<usize>()
                .map_err(|_| Error::config(format!("bad run length in mask row \"{row}\"")))?
        };
        out.extend(std::iter::repeat(kind).take(n));
        count.clear();
    }
    if !count.is_empty() {
        return Err(Error::config(format!("mask row \"{row}\" ends with a dangling count")));
    }
    Ok(out)
}

pub fn build_custom(cfg: &BenchmarkConfig) -> Result<(Problem, DesignVector)> {
    let (nx, ny, h) = match (cfg.nx, cfg.ny, cfg.element_size) {
        (Some(a), Some(b), Some(h)) => (a, b, h),
        _ => return Err(Error::config("custom problems need nx, ny and element_size")),
    };
    let grid = Grid::new(nx, ny, h)?;
    let mut kinds = vec![CellKind::Design; grid.n_cells()];
    if let Some(rows) = &cfg.rows {
        if rows.len() != ny {
            return Err(Error::config(format!("mask has {} rows for ny = {ny}", rows.len())));
        }
        for (iy, row) in rows.iter().enumerate() {
            let r = parse_mask_row(row)?;
            if r.len() != nx {
                return Err(Error::config(format!(
                    "mask row {iy} has {} cells for nx = {nx}",
                    r.len()
                )));
            }
            for (ix, k) in r.into_iter().enumerate() {
                kinds[grid.cell(ix, iy)] = k;
            }
        }
    }
    if let Some(c) = &cfg.cutout {
        check_rect(&grid, c)?;
        carve(&grid, &mut kinds, c);
    }
    let base_edge = cfg
        .base_edge
        .ok_or_else(|| Error::config("custom problems need base_edge"))?;
    let supports = cfg
        .supports
        .clone()
        .ok_or_else(|| Error::config("custom problems need supports"))?;
    let loads = cfg
        .loads
        .clone()
        .ok_or_else(|| Error::config("custom problems need loads"))?;
    let theta0 = cfg.theta0_deg.unwrap_or_else(|| {
        let n = base_edge.inward_normal();
        n[1].atan2(n[0]).to_degrees()
    });
    assemble(cfg, grid, kinds, base_edge, &supports, &loads, theta0)
}

/// One row of the stage table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: usize,
    pub theta_deg: f64,
    pub volume: f64,
    pub ratio_percent: f64,
}

/// Build orientation and share of deposited material per stage. Shares are
/// taken relative to all material deposited over stages `1..=N`, so they
/// sum to 100%.
pub fn stage_report(theta: &[f64], eval: &Evaluation) -> Vec<StageRow> {
    let total: f64 = eval.stage_volumes.iter().sum();
    theta
        .iter()
        .zip(&eval.stage_volumes)
        .enumerate()
        .map(|(j, (&t, &v))| StageRow {
            stage: j + 1,
            theta_deg: t.to_degrees(),
            volume: v,
            ratio_percent: if total != 0.0 { 100.0 * v / total } else { 0.0 },
        })
        .collect()
}

/// Wraps an angle to `(-180, 180]` degrees.
pub fn wrap_degrees(deg: f64) -> f64 {
    let mut d = deg % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}
