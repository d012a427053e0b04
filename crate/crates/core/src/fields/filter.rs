use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Linear-decay ("cone") filter restricted to a subset of grid cells.
///
/// Row `e` holds the normalized weights `w_i / sum(w)` with
/// `w_i = r - |x_i - x_e|` over members `i` with `w_i > 0`; distances are
/// measured in element lengths. The operator is stored explicitly so the
/// transpose used by sensitivity back-propagation is exact.
#[derive(Debug, Clone)]
pub struct LinearFilter {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl LinearFilter {
    /// `members` lists the grid cells that take part, in design order;
    /// output index `k` corresponds to `members[k]`.
    pub fn new(grid: &Grid, members: &[usize], radius: f64) -> Result<Self> {
        if !(radius >= 1.0) {
            return Err(Error::config(format!(
                "filter radius {radius} must be at least one element length"
            )));
        }
        let mut member_index = vec![usize::MAX; grid.n_cells()];
        for (k, &c) in members.iter().enumerate() {
            member_index[c] = k;
        }
        let reach = radius.ceil() as isize;
        let mut row_ptr = Vec::with_capacity(members.len() + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        row_ptr.push(0);
        for &c in members {
            let start = cols.len();
            let mut total = 0.0;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let w = radius - ((dx * dx + dy * dy) as f64).sqrt();
                    if w <= 0.0 {
                        continue;
                    }
                    let Some(n) = grid.offset(c, dx, dy) else {
                        continue;
                    };
                    let k = member_index[n];
                    if k == usize::MAX {
                        continue;
                    }
                    cols.push(k);
                    weights.push(w);
                    total += w;
                }
            }
            for w in &mut weights[start..] {
                *w /= total;
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            row_ptr,
            cols,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Neighbour indices and normalized weights of row `e`.
    pub fn row(&self, e: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[e]..self.row_ptr[e + 1];
        (&self.cols[r.clone()], &self.weights[r])
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len());
        (0..self.len())
            .into_par_iter()
            .map(|e| {
                let (cols, w) = self.row(e);
                cols.iter().zip(w).map(|(&i, &w)| w * x[i]).sum()
            })
            .collect()
    }

    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.len());
        let mut out = vec![0.0; self.len()];
        for (e, &ge) in g.iter().enumerate() {
            if ge == 0.0 {
                continue;
            }
            let (cols, w) = self.row(e);
            for (&i, &w) in cols.iter().zip(w) {
                out[i] += w * ge;
            }
        }
        out
    }
}

/// One-shot convenience over all cells of a full grid.
pub fn apply_linear_filter(grid: &Grid, field: &[f64], radius: f64) -> Result<Vec<f64>> {
    let members: Vec<usize> = (0..grid.n_cells()).collect();
    Ok(LinearFilter::new(grid, &members, radius)?.apply(field))
}
