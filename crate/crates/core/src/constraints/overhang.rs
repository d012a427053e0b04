//! Stage-wise overhang measure with self-support.
//!
//! For stage `j` and element `e`:
//!
//! ```text
//! G      = sobel(rho^{j})_e,   n = sqrt(|G|^2 + eps)
//! xi     = b_j . G / n - cos(alpha_bar)
//! P_e^j  = H(xi) (b_j . G) (rho^{j}_e - rho^{j-1}_e),   H = 1 / (1 + exp(-beta_H xi))
//! ```
//!
//! The last factor restricts the measure to material laid down in stage `j`,
//! so anything resting on earlier deposits contributes nothing. The total is
//! the plain double sum over stages and over design elements off the base
//! plate.

use rayon::prelude::*;

use crate::fields::RHO_MIN;
use crate::grid::Domain;
use crate::sobel::{cell_gradient, resolve, stencil_weights, Padding, Source, STENCIL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverhangParams {
    pub cos_alpha: f64,
    pub beta_h: f64,
}

impl OverhangParams {
    pub fn new(alpha_bar_deg: f64, beta_h: f64) -> Self {
        Self {
            cos_alpha: alpha_bar_deg.to_radians().cos(),
            beta_h,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OverhangResult {
    pub total: f64,
    /// `P^j` for `j = 1..=N`.
    pub per_stage: Vec<f64>,
    /// `P_e^j` per cell, indexed `[j - 1][cell]`; zero off the member set.
    pub per_element: Vec<Vec<f64>>,
    /// `dP / d rho^{j}` per design element, `[j][e]` for `j = 0..=N`.
    /// Empty unless gradients were requested.
    pub d_stage: Vec<Vec<f64>>,
    /// `dP / d theta_j`.
    pub d_theta: Vec<f64>,
}

impl OverhangResult {
    /// Sum of `P_e^j` over stages, per cell.
    pub fn element_totals(&self) -> Vec<f64> {
        let n = self.per_element.first().map_or(0, Vec::len);
        (0..n)
            .map(|c| self.per_element.iter().map(|s| s[c]).sum())
            .collect()
    }
}

struct StageOut {
    total: f64,
    per_element: Vec<f64>,
    d_cur: Vec<f64>,
    d_prev: Vec<f64>,
    d_theta: f64,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Evaluates the overhang measure; `rho_stage` is indexed `[j][e]` over
/// design elements, `theta` holds one angle per stage.
pub fn overhang(
    domain: &Domain,
    padding: &Padding,
    rho_stage: &[Vec<f64>],
    theta: &[f64],
    params: &OverhangParams,
    gradient: bool,
) -> OverhangResult {
    let grid = &domain.grid;
    let n_stages = theta.len();
    assert_eq!(rho_stage.len(), n_stages + 1);
    let cells: Vec<Vec<f64>> = rho_stage
        .iter()
        .map(|r| domain.to_cells(r, RHO_MIN, 1.0))
        .collect();
    let members: Vec<usize> = domain
        .free_elements()
        .map(|e| domain.design_cells()[e])
        .collect();

    let stages: Vec<StageOut> = (1..=n_stages)
        .into_par_iter()
        .map(|j| {
            let cur = &cells[j];
            let prev = &cells[j - 1];
            let (s, c) = theta[j - 1].sin_cos();
            let b = [c, s];
            let db = [-s, c];
            let n_cells = grid.n_cells();
            let mut out = StageOut {
                total: 0.0,
                per_element: vec![0.0; n_cells],
                d_cur: if gradient { vec![0.0; n_cells] } else { Vec::new() },
                d_prev: if gradient { vec![0.0; n_cells] } else { Vec::new() },
                d_theta: 0.0,
            };
            for &cell in &members {
                let g = cell_gradient(grid, cur, padding, cell);
                let norm = (g[0] * g[0] + g[1] * g[1] + crate::sobel::GRADIENT_EPS).sqrt();
                let bg = b[0] * g[0] + b[1] * g[1];
                let xi = bg / norm - params.cos_alpha;
                let h = sigmoid(params.beta_h * xi);
                let delta = cur[cell] - prev[cell];
                let p = h * bg * delta;
                out.per_element[cell] = p;
                out.total += p;
                if !gradient {
                    continue;
                }
                let dh = params.beta_h * h * (1.0 - h);
                // dP/dG and dP/db
                let n3 = norm * norm * norm;
                let mut q = [0.0; 2];
                let mut qb = [0.0; 2];
                for i in 0..2 {
                    let dxi_dg = b[i] / norm - bg * g[i] / n3;
                    q[i] = (dh * dxi_dg * bg + h * b[i]) * delta;
                    qb[i] = (dh * g[i] / norm * bg + h * g[i]) * delta;
                }
                out.d_theta += qb[0] * db[0] + qb[1] * db[1];
                for &(dx, dy) in &STENCIL {
                    if let Source::Cell(k) = resolve(grid, padding, cell, dx, dy) {
                        let w = stencil_weights(dx, dy);
                        out.d_cur[k] += q[0] * w[0] + q[1] * w[1];
                    }
                }
                out.d_cur[cell] += h * bg;
                out.d_prev[cell] -= h * bg;
            }
            out
        })
        .collect();

    let mut total = 0.0;
    let mut per_stage = Vec::with_capacity(n_stages);
    let mut per_element = Vec::with_capacity(n_stages);
    let mut d_theta = Vec::with_capacity(n_stages);
    let mut d_stage = if gradient {
        vec![vec![0.0; domain.n_design()]; n_stages + 1]
    } else {
        Vec::new()
    };
    for (k, st) in stages.into_iter().enumerate() {
        total += st.total;
        per_stage.push(st.total);
        d_theta.push(st.d_theta);
        if gradient {
            for (e, &cell) in domain.design_cells().iter().enumerate() {
                d_stage[k + 1][e] += st.d_cur[cell];
                d_stage[k][e] += st.d_prev[cell];
            }
        }
        per_element.push(st.per_element);
    }
    OverhangResult {
        total,
        per_stage,
        per_element,
        d_stage,
        d_theta,
    }
}
