//! Structured grid of square elements.
//!
//! Cells are numbered row by row from the bottom-left corner, `x` fastest:
//! cell `(ix, iy)` has index `ix + iy * nx` and centroid
//! `((ix + 0.5) h, (iy + 0.5) h)`. The `y` axis points up, so a build
//! orientation of 90 degrees grows the part away from the bottom edge.
//! Nodes follow the same convention with `nx + 1` nodes per row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Bottom,
    Top,
    Left,
    Right,
}

impl Edge {
    /// Inward unit normal.
    pub fn inward_normal(self) -> [f64; 2] {
        match self {
            Edge::Bottom => [0.0, 1.0],
            Edge::Top => [0.0, -1.0],
            Edge::Left => [1.0, 0.0],
            Edge::Right => [-1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Design,
    Void,
    Solid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub element_size: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, element_size: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::config(format!(
                "degenerate grid {nx}x{ny}: need at least one element per direction"
            )));
        }
        if !(element_size > 0.0) {
            return Err(Error::config("element size must be positive"));
        }
        Ok(Self {
            nx,
            ny,
            element_size,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn cell(&self, ix: usize, iy: usize) -> usize {
        ix + iy * self.nx
    }

    #[inline]
    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    /// Cell at a signed offset from `cell`, or `None` outside the grid.
    #[inline]
    pub fn offset(&self, cell: usize, dx: isize, dy: isize) -> Option<usize> {
        let (ix, iy) = self.cell_coords(cell);
        let jx = ix as isize + dx;
        let jy = iy as isize + dy;
        if jx < 0 || jy < 0 || jx >= self.nx as isize || jy >= self.ny as isize {
            None
        } else {
            Some(self.cell(jx as usize, jy as usize))
        }
    }

    pub fn centroid(&self, cell: usize) -> [f64; 2] {
        let (ix, iy) = self.cell_coords(cell);
        let h = self.element_size;
        [(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h]
    }

    #[inline]
    pub fn node(&self, ix: usize, iy: usize) -> usize {
        ix + iy * (self.nx + 1)
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let ix = node % (self.nx + 1);
        let iy = node / (self.nx + 1);
        [ix as f64 * self.element_size, iy as f64 * self.element_size]
    }

    /// Corner nodes of a cell, counter-clockwise from the bottom-left.
    pub fn cell_nodes(&self, cell: usize) -> [usize; 4] {
        let (ix, iy) = self.cell_coords(cell);
        [
            self.node(ix, iy),
            self.node(ix + 1, iy),
            self.node(ix + 1, iy + 1),
            self.node(ix, iy + 1),
        ]
    }

    pub fn cell_dofs(&self, cell: usize) -> [usize; 8] {
        let n = self.cell_nodes(cell);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    /// Nodes lying on a domain edge, in increasing coordinate order.
    pub fn edge_nodes(&self, edge: Edge) -> Vec<usize> {
        match edge {
            Edge::Bottom => (0..=self.nx).map(|i| self.node(i, 0)).collect(),
            Edge::Top => (0..=self.nx).map(|i| self.node(i, self.ny)).collect(),
            Edge::Left => (0..=self.ny).map(|j| self.node(0, j)).collect(),
            Edge::Right => (0..=self.ny).map(|j| self.node(self.nx, j)).collect(),
        }
    }

    /// Cells touching a domain edge.
    pub fn edge_cells(&self, edge: Edge) -> Vec<usize> {
        match edge {
            Edge::Bottom => (0..self.nx).map(|i| self.cell(i, 0)).collect(),
            Edge::Top => (0..self.nx).map(|i| self.cell(i, self.ny - 1)).collect(),
            Edge::Left => (0..self.ny).map(|j| self.cell(0, j)).collect(),
            Edge::Right => (0..self.ny).map(|j| self.cell(self.nx - 1, j)).collect(),
        }
    }

    /// Node nearest to a physical point.
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        let h = self.element_size;
        let ix = (x / h).round().clamp(0.0, self.nx as f64) as usize;
        let iy = (y / h).round().clamp(0.0, self.ny as f64) as usize;
        self.node(ix, iy)
    }
}

/// Grid plus cell classification. Design elements are numbered in cell
/// order; per-element arrays throughout the crate use this numbering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub grid: Grid,
    pub kinds: Vec<CellKind>,
    /// Domain edge the base plate sits on; also selects the solid padding
    /// rule for Sobel stencils.
    pub base_edge: Edge,
    /// Per design element: time pinned to 0.
    pub base_plate: Vec<bool>,
    design_cells: Vec<usize>,
    design_index: Vec<Option<usize>>,
}

impl Domain {
    /// `base_cells` lists cells on the base plate; they must be design cells.
    pub fn new(grid: Grid, kinds: Vec<CellKind>, base_edge: Edge, base_cells: &[usize]) -> Result<Self> {
        if kinds.len() != grid.n_cells() {
            return Err(Error::config(format!(
                "cell mask has {} entries for {} cells",
                kinds.len(),
                grid.n_cells()
            )));
        }
        let design_cells: Vec<usize> = (0..grid.n_cells())
            .filter(|&c| kinds[c] == CellKind::Design)
            .collect();
        if design_cells.is_empty() {
            return Err(Error::config("no design elements"));
        }
        let mut design_index = vec![None; grid.n_cells()];
        for (e, &c) in design_cells.iter().enumerate() {
            design_index[c] = Some(e);
        }
        let mut base_plate = vec![false; design_cells.len()];
        for &c in base_cells {
            match design_index.get(c).copied().flatten() {
                Some(e) => base_plate[e] = true,
                None => {
                    return Err(Error::config(format!(
                        "base-plate cell {c} is not a design element"
                    )))
                }
            }
        }
        if !base_plate.iter().any(|&b| b) {
            return Err(Error::config("base plate is empty"));
        }
        if base_plate.iter().all(|&b| b) {
            return Err(Error::config("every design element is on the base plate"));
        }
        Ok(Self {
            grid,
            kinds,
            base_edge,
            base_plate,
            design_cells,
            design_index,
        })
    }

    pub fn n_design(&self) -> usize {
        self.design_cells.len()
    }

    pub fn design_cells(&self) -> &[usize] {
        &self.design_cells
    }

    #[inline]
    pub fn design_index(&self, cell: usize) -> Option<usize> {
        self.design_index[cell]
    }

    /// Design elements that are not on the base plate.
    pub fn free_elements(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_design()).filter(move |&e| !self.base_plate[e])
    }

    /// Spreads a design-element field over all cells, filling void cells
    /// with `void` and solid cells with `solid`.
    pub fn to_cells(&self, values: &[f64], void: f64, solid: f64) -> Vec<f64> {
        (0..self.grid.n_cells())
            .map(|c| match self.design_index[c] {
                Some(e) => values[e],
                None if self.kinds[c] == CellKind::Solid => solid,
                None => void,
            })
            .collect()
    }
}
