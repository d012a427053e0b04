//! Sobel density gradients on the structured grid.
//!
//! For a cell the 3x3 neighbourhood is read top row first, left to right:
//!
//! ```text
//!   A = | r1 r2 r3 |     h1 = | -1 0 1 |     h2 = |  1  2  1 |
//!       | r4 r  r5 |          | -2 0 2 |          |  0  0  0 |
//!       | r6 r7 r8 |          | -1 0 1 |          | -1 -2 -1 |
//! ```
//!
//! `G_i = sum(h_i . A)`. With `y` pointing up, `G1` is a central difference
//! along `+x` and `G2` along `+y`, both scaled by 8.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Edge, Grid};

/// Regularization inside the square root of the gradient norm.
pub const GRADIENT_EPS: f64 = 1e-9;

/// Rule for neighbours that fall outside the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadRule {
    /// Copy the nearest in-domain cell.
    Replicate,
    /// Use a fixed value.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Padding {
    pub bottom: PadRule,
    pub top: PadRule,
    pub left: PadRule,
    pub right: PadRule,
}

impl Padding {
    pub fn replicate() -> Self {
        Self {
            bottom: PadRule::Replicate,
            top: PadRule::Replicate,
            left: PadRule::Replicate,
            right: PadRule::Replicate,
        }
    }

    /// Replicate everywhere except the base-plate edge, which reads as solid.
    pub fn with_base_plate(edge: Edge) -> Self {
        let mut p = Self::replicate();
        *p.rule_mut(edge) = PadRule::Constant(1.0);
        p
    }

    pub fn rule_mut(&mut self, edge: Edge) -> &mut PadRule {
        match edge {
            Edge::Bottom => &mut self.bottom,
            Edge::Top => &mut self.top,
            Edge::Left => &mut self.left,
            Edge::Right => &mut self.right,
        }
    }
}

/// What a stencil position reads from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    Cell(usize),
    Constant(f64),
}

/// Resolves the neighbour at offset `(dx, dy)` of `cell`. Out-of-range
/// rows are resolved before columns, so a corner takes the top/bottom rule
/// when that rule is a constant.
#[inline]
pub fn resolve(grid: &Grid, padding: &Padding, cell: usize, dx: isize, dy: isize) -> Source {
    let (ix, iy) = grid.cell_coords(cell);
    let mut jx = ix as isize + dx;
    let mut jy = iy as isize + dy;
    if jy < 0 {
        match padding.bottom {
            PadRule::Constant(v) => return Source::Constant(v),
            PadRule::Replicate => jy = 0,
        }
    } else if jy >= grid.ny as isize {
        match padding.top {
            PadRule::Constant(v) => return Source::Constant(v),
            PadRule::Replicate => jy = grid.ny as isize - 1,
        }
    }
    if jx < 0 {
        match padding.left {
            PadRule::Constant(v) => return Source::Constant(v),
            PadRule::Replicate => jx = 0,
        }
    } else if jx >= grid.nx as isize {
        match padding.right {
            PadRule::Constant(v) => return Source::Constant(v),
            PadRule::Replicate => jx = grid.nx as isize - 1,
        }
    }
    Source::Cell(grid.cell(jx as usize, jy as usize))
}

/// Stencil offsets `(dx, dy)` in reading order (top row first).
pub const STENCIL: [(isize, isize); 9] = [
    (-1, 1),
    (0, 1),
    (1, 1),
    (-1, 0),
    (0, 0),
    (1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Kernel weights `(h1, h2)` at a stencil offset; zero outside the 3x3 support.
#[inline]
pub fn stencil_weights(dx: isize, dy: isize) -> [f64; 2] {
    if dx.abs() > 1 || dy.abs() > 1 {
        return [0.0, 0.0];
    }
    [
        (dx * (2 - dy.abs())) as f64,
        (dy * (2 - dx.abs())) as f64,
    ]
}

#[derive(Debug, Clone)]
pub struct GradientField {
    pub g: Vec<[f64; 2]>,
    pub norm: Vec<f64>,
}

pub fn sobel_gradient(grid: &Grid, field: &[f64], padding: &Padding) -> Result<GradientField> {
    if field.len() != grid.n_cells() {
        return Err(Error::config(format!(
            "field has {} values for a {}x{} grid",
            field.len(),
            grid.nx,
            grid.ny
        )));
    }
    let mut g = Vec::with_capacity(field.len());
    let mut norm = Vec::with_capacity(field.len());
    for cell in 0..field.len() {
        let v = cell_gradient(grid, field, padding, cell);
        norm.push((v[0] * v[0] + v[1] * v[1] + GRADIENT_EPS).sqrt());
        g.push(v);
    }
    Ok(GradientField { g, norm })
}

/// Gradient at one cell. Opposite stencil entries are differenced before
/// weighting, so a uniform neighbourhood gives exactly zero.
#[inline]
pub fn cell_gradient(grid: &Grid, field: &[f64], padding: &Padding, cell: usize) -> [f64; 2] {
    let at = |dx: isize, dy: isize| match resolve(grid, padding, cell, dx, dy) {
        Source::Cell(c) => field[c],
        Source::Constant(v) => v,
    };
    let mut g1 = 0.0;
    let mut g2 = 0.0;
    for k in [1isize, 0, -1] {
        let w = (2 - k.abs()) as f64;
        g1 += w * (at(1, k) - at(-1, k));
        g2 += w * (at(-k, 1) - at(-k, -1));
    }
    [g1, g2]
}
