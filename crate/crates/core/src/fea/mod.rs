//! Plane-stress finite element analysis on the structured grid.
//!
//! Every cell of the grid is an element (passive voids keep the density
//! floor so the stiffness matrix stays positive definite). Supports are
//! eliminated by dropping their rows and columns. The remaining dofs are
//! numbered along the shorter grid direction so the stiffness matrix has a
//! narrow band.

pub mod element;
pub mod solver;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::material::Mat3;

pub use element::{bilinear, deformation, element_stiffness, energy, ElementBasis, ElementMatrix};
pub use solver::{BandCholesky, BandMatrix};

/// Required normwise backward error `|r| / (|K| |U| + |F|)` (infinity
/// norms) after every solve.
pub const RESIDUAL_CONTRACT: f64 = 1e-8;

/// Systems larger than this use conjugate gradients under `Auto`.
pub const DIRECT_DOF_LIMIT: usize = 50_000;

const FIXED: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Auto,
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub kind: SolverKind,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::Auto,
            cg_tolerance: 1e-10,
            cg_max_iterations: 20_000,
        }
    }
}

/// Constitutive matrix per cell.
#[derive(Debug, Clone, Copy)]
pub enum Constitutive<'a> {
    Uniform(&'a Mat3),
    PerCell(&'a [Mat3]),
}

impl Constitutive<'_> {
    #[inline]
    pub fn at(&self, cell: usize) -> &Mat3 {
        match self {
            Constitutive::Uniform(d) => d,
            Constitutive::PerCell(ds) => &ds[cell],
        }
    }
}

/// Dof numbering, band structure and element basis for one mesh and support set.
#[derive(Debug, Clone)]
pub struct FeLayout {
    pub grid: Grid,
    basis: ElementBasis,
    dof_map: Vec<usize>,
    n_free: usize,
    bandwidth: usize,
}

impl FeLayout {
    pub fn new(grid: Grid, fixed_dofs: &[usize]) -> Result<Self> {
        let n_dofs = 2 * grid.n_nodes();
        let mut fixed = vec![false; n_dofs];
        for &d in fixed_dofs {
            if d >= n_dofs {
                return Err(Error::config(format!("support dof {d} outside the mesh")));
            }
            fixed[d] = true;
        }
        check_rigid_modes(&grid, &fixed)?;

        // nodes in band order: the shorter direction runs fastest
        let order: Vec<usize> = if grid.nx >= grid.ny {
            (0..=grid.nx)
                .flat_map(|ix| (0..=grid.ny).map(move |iy| (ix, iy)))
                .map(|(ix, iy)| grid.node(ix, iy))
                .collect()
        } else {
            (0..=grid.ny)
                .flat_map(|iy| (0..=grid.nx).map(move |ix| (ix, iy)))
                .map(|(ix, iy)| grid.node(ix, iy))
                .collect()
        };
        let mut dof_map = vec![FIXED; n_dofs];
        let mut next = 0;
        for node in order {
            for d in [2 * node, 2 * node + 1] {
                if !fixed[d] {
                    dof_map[d] = next;
                    next += 1;
                }
            }
        }
        let mut bandwidth = 0;
        for cell in 0..grid.n_cells() {
            let r: Vec<usize> = grid
                .cell_dofs(cell)
                .iter()
                .map(|&d| dof_map[d])
                .filter(|&d| d != FIXED)
                .collect();
            if let (Some(lo), Some(hi)) = (r.iter().min(), r.iter().max()) {
                bandwidth = bandwidth.max(hi - lo);
            }
        }
        Ok(Self {
            grid,
            basis: ElementBasis::new(grid.element_size),
            dof_map,
            n_free: next,
            bandwidth,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_map.len()
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn basis(&self) -> &ElementBasis {
        &self.basis
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.dof_map[dof] == FIXED
    }

    pub fn reduce(&self, full: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_free];
        for (d, &m) in self.dof_map.iter().enumerate() {
            if m != FIXED {
                r[m] = full[d];
            }
        }
        r
    }

    fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        self.dof_map
            .iter()
            .map(|&m| if m == FIXED { 0.0 } else { reduced[m] })
            .collect()
    }

    pub fn element_displacements(&self, u: &[f64], cell: usize) -> [f64; 8] {
        let dofs = self.grid.cell_dofs(cell);
        let mut ue = [0.0; 8];
        for (v, &d) in ue.iter_mut().zip(&dofs) {
            *v = u[d];
        }
        ue
    }

    /// Reduced stiffness `K = sum_e scale_e k0(D_e)`.
    ///
    /// Per-cell matrices are added as scaled copies of the fixed basis
    /// matrices instead of being formed first: rounding while forming
    /// `k0(D_e)` would leak rigid-body energy into `K` and make compliance
    /// jitter with `D` at the 1e-12 level on high-contrast designs.
    pub fn assemble(&self, scale: &[f64], constitutive: Constitutive) -> BandMatrix {
        let mut k = BandMatrix::zeros(self.n_free, self.bandwidth);
        let uniform = match constitutive {
            Constitutive::Uniform(d) => Some(self.basis.stiffness(d)),
            Constitutive::PerCell(_) => None,
        };
        for cell in 0..self.grid.n_cells() {
            let dofs = self.grid.cell_dofs(cell);
            let s = scale[cell];
            let mut scatter = |w: f64, ke: &ElementMatrix| {
                for a in 0..8 {
                    let i = self.dof_map[dofs[a]];
                    if i == FIXED {
                        continue;
                    }
                    for b in 0..8 {
                        let j = self.dof_map[dofs[b]];
                        if j == FIXED || j > i {
                            continue;
                        }
                        k.add_product(i, j, w, ke[a * 8 + b]);
                    }
                }
            };
            match (&uniform, constitutive) {
                (Some(ke), _) => scatter(s, ke),
                (None, Constitutive::PerCell(ds)) => {
                    for (w, m) in self.basis.terms(&ds[cell]) {
                        scatter(s * w, m);
                    }
                }
                (None, Constitutive::Uniform(_)) => unreachable!(),
            }
        }
        k
    }

    /// Solves `K U = F` with element stiffness `scale_e k0(D_e)`.
    pub fn solve(
        &self,
        scale: &[f64],
        constitutive: Constitutive,
        loads: &[f64],
        options: &SolveOptions,
    ) -> Result<SolveResult> {
        if scale.len() != self.grid.n_cells() || loads.len() != self.n_dofs() {
            return Err(Error::config("stiffness scale or load vector has the wrong length"));
        }
        let k = self.assemble(scale, constitutive);
        let f = self.reduce(loads);
        let kind = match options.kind {
            SolverKind::Auto if self.n_free <= DIRECT_DOF_LIMIT => SolverKind::Direct,
            SolverKind::Auto => SolverKind::Cg,
            other => other,
        };
        let (x, residual, factor) = match kind {
            SolverKind::Cg => {
                let (x, r) = solver::solve_pcg(
                    &k,
                    &f,
                    options.cg_tolerance,
                    options.cg_max_iterations,
                )?;
                (x, r, None)
            }
            _ => {
                let factor = BandCholesky::factor(&k).map_err(|i| Error::Singular {
                    mode: format!("non-positive pivot at reduced dof {i}"),
                })?;
                let (x, r) = solver::solve_direct(&k, &factor, &f);
                (x, r, Some(factor))
            }
        };
        if !(residual < RESIDUAL_CONTRACT) {
            return Err(Error::Residual {
                residual,
                tolerance: RESIDUAL_CONTRACT,
            });
        }
        let compliance = x.iter().zip(&f).map(|(a, b)| a * b).sum();
        Ok(SolveResult {
            u: self.expand(&x),
            compliance,
            residual,
            solver: kind,
            matrix: k,
            factor,
            options: *options,
        })
    }

    /// `dc/d rho_e = -p rho_e^(p-1) u_e^T k0(D_e) u_e`.
    pub fn compliance_density_sensitivities(
        &self,
        u: &[f64],
        rho: &[f64],
        penal: f64,
        constitutive: Constitutive,
    ) -> Vec<f64> {
        let uniform = match constitutive {
            Constitutive::Uniform(d) => Some(self.basis.stiffness(d)),
            Constitutive::PerCell(_) => None,
        };
        (0..self.grid.n_cells())
            .into_par_iter()
            .map(|cell| {
                let ue = self.element_displacements(u, cell);
                let w = match &uniform {
                    Some(k) => energy(k, &ue),
                    None => energy(&self.basis.stiffness(constitutive.at(cell)), &ue),
                };
                -penal * rho[cell].powf(penal - 1.0) * w
            })
            .collect()
    }

    /// `dc/d phi_e = -scale_e u_e^T k0(dD/dphi_e) u_e`.
    pub fn compliance_orientation_sensitivities(
        &self,
        u: &[f64],
        scale: &[f64],
        d_constitutive: &[Mat3],
    ) -> Vec<f64> {
        (0..self.grid.n_cells())
            .into_par_iter()
            .map(|cell| {
                let ue = self.element_displacements(u, cell);
                -scale[cell] * energy(&self.basis.stiffness(&d_constitutive[cell]), &ue)
            })
            .collect()
    }
}

/// Result of one static solve. Keeps the operator so adjoint systems can
/// reuse the factorization.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Full nodal displacements, zero on supports.
    pub u: Vec<f64>,
    pub compliance: f64,
    /// Normwise backward error of the displacement solve.
    pub residual: f64,
    pub solver: SolverKind,
    matrix: BandMatrix,
    factor: Option<BandCholesky>,
    options: SolveOptions,
}

impl SolveResult {
    /// Solves `K lambda = rhs` for a full-length right-hand side.
    pub fn solve_adjoint(&self, layout: &FeLayout, rhs: &[f64]) -> Result<Vec<f64>> {
        let r = layout.reduce(rhs);
        let (x, res) = match &self.factor {
            Some(f) => solver::solve_direct(&self.matrix, f, &r),
            None => solver::solve_pcg(
                &self.matrix,
                &r,
                self.options.cg_tolerance,
                self.options.cg_max_iterations,
            )?,
        };
        if !(res < RESIDUAL_CONTRACT) && solver::norm(&r) > 0.0 {
            return Err(Error::Residual {
                residual: res,
                tolerance: RESIDUAL_CONTRACT,
            });
        }
        Ok(layout.expand(&x))
    }

    /// Density sensitivities through the generic adjoint route
    /// `dc/drho_e = lambda_e^T (dK_e/drho_e) u_e` with `K lambda = -F`.
    pub fn adjoint_density_sensitivities(
        &self,
        layout: &FeLayout,
        loads: &[f64],
        rho: &[f64],
        penal: f64,
        constitutive: Constitutive,
    ) -> Result<Vec<f64>> {
        let neg: Vec<f64> = loads.iter().map(|f| -f).collect();
        let lambda = self.solve_adjoint(layout, &neg)?;
        Ok((0..layout.grid.n_cells())
            .map(|cell| {
                let k = layout.basis.stiffness(constitutive.at(cell));
                let ue = layout.element_displacements(&self.u, cell);
                let le = layout.element_displacements(&lambda, cell);
                penal * rho[cell].powf(penal - 1.0) * bilinear(&k, &le, &ue)
            })
            .collect())
    }
}

/// Supports must suppress both translations and the in-plane rotation.
fn check_rigid_modes(grid: &Grid, fixed: &[bool]) -> Result<()> {
    let dofs: Vec<usize> = (0..fixed.len()).filter(|&d| fixed[d]).collect();
    if dofs.is_empty() {
        return Err(Error::Singular {
            mode: "no supports: translation along x is free".into(),
        });
    }
    let nodes: Vec<[f64; 2]> = dofs.iter().map(|&d| grid.node_coords(d / 2)).collect();
    let m = nodes.len() as f64;
    let cx = nodes.iter().map(|p| p[0]).sum::<f64>() / m;
    let cy = nodes.iter().map(|p| p[1]).sum::<f64>() / m;
    // columns: x translation, y translation, rotation about the support centroid
    let mut cols = [vec![0.0; dofs.len()], vec![0.0; dofs.len()], vec![0.0; dofs.len()]];
    for (r, (&d, p)) in dofs.iter().zip(&nodes).enumerate() {
        let (x, y) = ((p[0] - cx) / grid.element_size, (p[1] - cy) / grid.element_size);
        if d % 2 == 0 {
            cols[0][r] = 1.0;
            cols[2][r] = -y;
        } else {
            cols[1][r] = 1.0;
            cols[2][r] = x;
        }
    }
    let names = ["translation along x", "translation along y", "in-plane rotation"];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (col, name) in cols.iter().zip(names) {
        let mut v = col.clone();
        let n0 = solver::norm(&v);
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= dot * qi;
            }
        }
        let n = solver::norm(&v);
        if n0 == 0.0 || n < 1e-10 * n0 {
            return Err(Error::Singular {
                mode: format!("supports leave the {name} free"),
            });
        }
        basis.push(v.iter().map(|x| x / n).collect());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{rotated_constitutive, MaterialModel};

    fn clamped_left(g: &Grid) -> Vec<usize> {
        g.edge_nodes(crate::grid::Edge::Left)
            .iter()
            .flat_map(|&n| [2 * n, 2 * n + 1])
            .collect()
    }

    fn tip_load(g: &Grid) -> Vec<f64> {
        let mut f = vec![0.0; 2 * g.n_nodes()];
        let n = g.node(g.nx, g.ny / 2);
        f[2 * n + 1] = -1.0;
        f
    }

    #[test]
    fn band_order_follows_short_side() {
        let g = Grid::new(20, 4, 1.0).unwrap();
        let l = FeLayout::new(g, &clamped_left(&g)).unwrap();
        assert!(l.bandwidth() <= 2 * (g.ny + 1) + 3);
        let g = Grid::new(4, 20, 1.0).unwrap();
        let l = FeLayout::new(g, &clamped_left(&g)).unwrap();
        assert!(l.bandwidth() <= 2 * (g.nx + 1) + 3);
    }

    #[test]
    fn rigid_modes_named() {
        let g = Grid::new(4, 2, 1.0).unwrap();
        let only_y: Vec<usize> = g.edge_nodes(crate::grid::Edge::Left).iter().map(|&n| 2 * n + 1).collect();
        let e = FeLayout::new(g, &only_y).unwrap_err();
        assert!(e.to_string().contains("translation along x"), "{e}");
        // a single pinned node leaves rotation free
        let n = g.node(0, 0);
        let e = FeLayout::new(g, &[2 * n, 2 * n + 1]).unwrap_err();
        assert!(e.to_string().contains("rotation"), "{e}");
        let e = FeLayout::new(g, &[]).unwrap_err();
        assert!(matches!(e, Error::Singular { .. }));
        // roller line along x plus one x restraint is enough
        let mut ok: Vec<usize> = g.edge_nodes(crate::grid::Edge::Bottom).iter().map(|&n| 2 * n + 1).collect();
        ok.push(0);
        assert!(FeLayout::new(g, &ok).is_ok());
    }

    #[test]
    fn compliance_halves_when_density_doubles_at_unit_penalty() {
        let g = Grid::new(8, 3, 0.5).unwrap();
        let l = FeLayout::new(g, &clamped_left(&g)).unwrap();
        let d = MaterialModel::isotropic().base_constitutive().unwrap();
        let f = tip_load(&g);
        let a = l
            .solve(&vec![0.3; g.n_cells()], Constitutive::Uniform(&d), &f, &SolveOptions::default())
            .unwrap();
        let b = l
            .solve(&vec![0.6; g.n_cells()], Constitutive::Uniform(&d), &f, &SolveOptions::default())
            .unwrap();
        assert!((a.compliance / b.compliance - 2.0).abs() < 1e-12);
        assert!(a.residual < RESIDUAL_CONTRACT);
    }

    #[test]
    fn cg_and_direct_agree() {
        let g = Grid::new(12, 5, 1.0).unwrap();
        let l = FeLayout::new(g, &clamped_left(&g)).unwrap();
        let d = rotated_constitutive(&MaterialModel::anisotropic().base_constitutive().unwrap(), 0.4);
        let f = tip_load(&g);
        let s = vec![1.0; g.n_cells()];
        let a = l.solve(&s, Constitutive::Uniform(&d), &f, &SolveOptions::default()).unwrap();
        let opts = SolveOptions {
            kind: SolverKind::Cg,
            ..SolveOptions::default()
        };
        let b = l.solve(&s, Constitutive::Uniform(&d), &f, &opts).unwrap();
        assert_eq!(b.solver, SolverKind::Cg);
        assert!((a.compliance - b.compliance).abs() < 1e-8 * a.compliance);
    }

    #[test]
    fn generic_adjoint_reproduces_closed_form() {
        let g = Grid::new(6, 4, 1.0).unwrap();
        let l = FeLayout::new(g, &clamped_left(&g)).unwrap();
        let d = MaterialModel::isotropic().base_constitutive().unwrap();
        let rho: Vec<f64> = (0..g.n_cells()).map(|c| 0.2 + 0.03 * c as f64).collect();
        let scale: Vec<f64> = rho.iter().map(|r| r.powi(3)).collect();
        let f = tip_load(&g);
        let c = Constitutive::Uniform(&d);
        let r = l.solve(&scale, c, &f, &SolveOptions::default()).unwrap();
        let closed = l.compliance_density_sensitivities(&r.u, &rho, 3.0, c);
        let adj = r.adjoint_density_sensitivities(&l, &f, &rho, 3.0, c).unwrap();
        for (a, b) in closed.iter().zip(&adj) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1e-12));
            assert!(*a < 0.0);
        }
    }

    #[test]
    fn void_dominated_field_is_solvable() {
        let g = Grid::new(10, 4, 1.0).unwrap();
        let l = FeLayout::new(g, &clamped_left(&g)).unwrap();
        let d = MaterialModel::isotropic().base_constitutive().unwrap();
        let f = tip_load(&g);
        let rmin = crate::fields::RHO_MIN;
        let r = l
            .solve(&vec![rmin.powi(3); g.n_cells()], Constitutive::Uniform(&d), &f, &SolveOptions::default())
            .unwrap();
        let full = l
            .solve(&vec![1.0; g.n_cells()], Constitutive::Uniform(&d), &f, &SolveOptions::default())
            .unwrap();
        assert!((r.compliance / full.compliance / 1e9 - 1.0).abs() < 1e-8);
    }
}
