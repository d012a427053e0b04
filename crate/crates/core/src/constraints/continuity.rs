//! Time continuity: every element's filtered time should stay close to the
//! mean time of its neighbours, so each deposit touches earlier material.
//!
//! `C = 1/|M| sum_{e in M} (t_e - mean_{k in N_e} t_k)^2` over the design
//! elements `M` that are not on the base plate.

use crate::error::{Error, Result};
use crate::grid::Domain;

use super::Neighborhood;

const FOUR: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const EIGHT: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

#[derive(Debug, Clone)]
pub struct ContinuityOperator {
    members: Vec<usize>,
    /// CSR neighbour lists, one row per member.
    row_ptr: Vec<usize>,
    neighbours: Vec<usize>,
    n_design: usize,
}

impl ContinuityOperator {
    pub fn new(domain: &Domain, rule: Neighborhood) -> Result<Self> {
        let offsets: &[(isize, isize)] = match rule {
            Neighborhood::Four => &FOUR,
            Neighborhood::Eight => &EIGHT,
        };
        let grid = &domain.grid;
        let members: Vec<usize> = domain.free_elements().collect();
        let mut row_ptr = vec![0];
        let mut neighbours = Vec::new();
        for &e in &members {
            let cell = domain.design_cells()[e];
            let before = neighbours.len();
            for &(dx, dy) in offsets {
                if let Some(k) = grid.offset(cell, dx, dy).and_then(|c| domain.design_index(c)) {
                    neighbours.push(k);
                }
            }
            if neighbours.len() == before {
                let (ix, iy) = grid.cell_coords(cell);
                return Err(Error::config(format!(
                    "design element at ({ix}, {iy}) has no design neighbours"
                )));
            }
            row_ptr.push(neighbours.len());
        }
        Ok(Self {
            members,
            row_ptr,
            neighbours,
            n_design: domain.n_design(),
        })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Residual `t_e - mean_{N_e} t` per member.
    pub fn residuals(&self, t: &[f64]) -> Vec<f64> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let nb = self.neighbours(i);
                nb.iter().map(|&k| t[e] - t[k]).sum::<f64>() / nb.len() as f64
            })
            .collect()
    }

    pub fn value(&self, t: &[f64]) -> f64 {
        let r = self.residuals(t);
        r.iter().map(|v| v * v).sum::<f64>() / self.members.len() as f64
    }

    /// Value and gradient with respect to every design element's time.
    pub fn value_and_gradient(&self, t: &[f64]) -> (f64, Vec<f64>) {
        let r = self.residuals(t);
        let m = self.members.len() as f64;
        let mut g = vec![0.0; self.n_design];
        for (i, &e) in self.members.iter().enumerate() {
            let w = 2.0 * r[i] / m;
            g[e] += w;
            let nb = self.neighbours(i);
            let share = w / nb.len() as f64;
            for &k in nb {
                g[k] -= share;
            }
        }
        (r.iter().map(|v| v * v).sum::<f64>() / m, g)
    }
}
