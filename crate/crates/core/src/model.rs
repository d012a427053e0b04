//! Forward pipeline and total derivatives.
//!
//! Every response is first differentiated with respect to the physical
//! fields it reads (rho, rho^{j}, t, phi, theta). Those partials are then
//! pulled back to the design variables in one place:
//!
//! ```text
//! rho^{j} = rho t-^{j}        -> a_rho += a_j t-^{j},   a_t += a_j rho dt-^{j}/dt
//! phi(t-, theta)              -> a_t += a_phi dphi/dt,  a_theta_j += sum_e a_phi dphi/dtheta_j
//! rho = rho_min + (1 - rho_min) psi-(psi~)   -> a_psi~ = a_rho (1 - rho_min) dpsi-/dpsi~
//! psi~ = F psi, t = F tau (base plate pinned)  -> transposed filters
//! ```

use serde::{Deserialize, Serialize};

use crate::constraints::{overhang, ContinuityOperator, OverhangParams, OverhangResult, VolumeMode};
use crate::error::Result;
use crate::fea::{Constitutive, FeLayout};
use crate::fields::{DesignVector, FieldState, LinearFilter, ProjectionParams, RHO_MIN};
use crate::material::{
    d_constitutive_d_phi, material_orientation, orientation_sensitivities, rotated_constitutive,
    Mat3, OrientationSensitivities, MATERIAL_AXIS_OFFSET,
};
use crate::problems::Problem;
use crate::sobel::Padding;

/// Gradient split into the three design blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignGradient {
    pub psi: Vec<f64>,
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
}

impl DesignGradient {
    pub fn zeros(n_design: usize, n_stages: usize) -> Self {
        Self {
            psi: vec![0.0; n_design],
            tau: vec![0.0; n_design],
            theta: vec![0.0; n_stages],
        }
    }
}

/// One constraint in `g / bound - 1 <= 0` form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintValue {
    pub name: String,
    /// Raw measure before normalization.
    pub raw: f64,
    pub bound: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub fields: FieldState,
    /// Material orientation per design element (anisotropic mode only).
    pub phi: Option<Vec<f64>>,
    pub compliance: f64,
    pub residual: f64,
    pub displacements: Vec<f64>,
    /// `sum rho v / V_domain`.
    pub volume_fraction: f64,
    /// Deposited volume per stage.
    pub stage_volumes: Vec<f64>,
    pub continuity: f64,
    pub overhang: OverhangResult,
    /// Active constraints in optimizer order.
    pub constraints: Vec<ConstraintValue>,
    pub compliance_gradient: Option<DesignGradient>,
    /// Gradients of the normalized constraints; empty without gradients.
    pub constraint_gradients: Vec<DesignGradient>,
}

impl Evaluation {
    /// Mean of `4 psi- (1 - psi-)`; zero for a crisp 0/1 design.
    pub fn grayness(&self) -> f64 {
        let p = &self.fields.psi_projected;
        p.iter().map(|v| 4.0 * v * (1.0 - v)).sum::<f64>() / p.len() as f64
    }

    pub fn max_violation(&self) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.normalized)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Partials of a scalar with respect to the physical fields.
struct Partials {
    rho: Vec<f64>,
    stage: Vec<Vec<f64>>,
    t: Vec<f64>,
    phi: Vec<f64>,
    theta: Vec<f64>,
}

impl Partials {
    fn new(n: usize, n_stages: usize) -> Self {
        Self {
            rho: vec![0.0; n],
            stage: Vec::new(),
            t: vec![0.0; n],
            phi: Vec::new(),
            theta: vec![0.0; n_stages],
        }
    }
}

/// Precomputed operators for one problem.
#[derive(Debug, Clone)]
pub struct Model {
    pub problem: Problem,
    density_filter: LinearFilter,
    time_filter: LinearFilter,
    continuity: ContinuityOperator,
    layout: FeLayout,
    d0: Mat3,
    padding: Padding,
    overhang_params: OverhangParams,
    element_volume: f64,
}

impl Model {
    pub fn new(problem: Problem) -> Result<Self> {
        problem.validate()?;
        let domain = &problem.domain;
        let members = domain.design_cells();
        let density_filter = LinearFilter::new(&domain.grid, members, problem.filter_radius)?;
        let time_filter = density_filter.clone();
        let continuity = ContinuityOperator::new(domain, problem.constraints.neighborhood)?;
        let layout = FeLayout::new(domain.grid, &problem.fixed_dofs)?;
        let d0 = problem.material.base_constitutive()?;
        let h = domain.grid.element_size;
        Ok(Self {
            padding: Padding::with_base_plate(domain.base_edge),
            overhang_params: OverhangParams::new(
                problem.constraints.alpha_bar_deg,
                problem.constraints.beta_h,
            ),
            element_volume: h * h,
            density_filter,
            time_filter,
            continuity,
            layout,
            d0,
            problem,
        })
    }

    pub fn layout(&self) -> &FeLayout {
        &self.layout
    }

    pub fn padding(&self) -> &Padding {
        &self.padding
    }

    pub fn base_constitutive(&self) -> &Mat3 {
        &self.d0
    }

    pub fn n_design(&self) -> usize {
        self.problem.domain.n_design()
    }

    pub fn n_stages(&self) -> usize {
        self.problem.n_stages
    }

    pub fn element_volume(&self) -> f64 {
        self.element_volume
    }

    /// Area of all design elements.
    pub fn domain_volume(&self) -> f64 {
        self.element_volume * self.n_design() as f64
    }

    pub fn projection(&self, betas: (f64, f64)) -> ProjectionParams {
        ProjectionParams::new(betas.0, betas.1, self.n_stages())
    }

    pub fn field_state(&self, x: &DesignVector, betas: (f64, f64)) -> FieldState {
        FieldState::build(
            x,
            &self.projection(betas),
            &self.density_filter,
            &self.time_filter,
            &self.problem.domain.base_plate,
        )
    }

    /// Curvature bound of the normalized continuity constraint with respect
    /// to each element's raw time `tau`: the largest eigenvalue of its
    /// Hessian, so `lambda_max I` majorizes it. Row-sum bounds are two orders
    /// looser here because the filter damps exactly the modes they assume.
    pub fn continuity_curvature(&self) -> Vec<f64> {
        let pinned = &self.problem.domain.base_plate;
        let gamma = self.problem.constraints.gamma;
        let hess = |v: &[f64]| -> Vec<f64> {
            let mut t = self.time_filter.apply(v);
            for (t, &p) in t.iter_mut().zip(pinned) {
                if p {
                    *t = 0.0;
                }
            }
            let (_, mut g) = self.continuity.value_and_gradient(&t);
            for (g, &p) in g.iter_mut().zip(pinned) {
                if p {
                    *g = 0.0;
                }
            }
            let mut h = self.time_filter.apply_transpose(&g);
            for (h, &p) in h.iter_mut().zip(pinned) {
                if p {
                    *h = 0.0;
                }
            }
            h
        };
        let n = self.n_design();
        // deterministic start with components along every mode
        let mut v: Vec<f64> = (0..n)
            .map(|i| if pinned[i] { 0.0 } else { ((i * 7919) % 13) as f64 - 6.0 })
            .collect();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            let hv = hess(&v);
            let next: f64 = hv.iter().zip(&v).map(|(a, b)| a * b).sum();
            v = hv;
            let done = (next - lambda).abs() <= 1e-6 * next;
            lambda = next;
            if done {
                break;
            }
        }
        // power iteration approaches from below
        vec![1.05 * lambda / gamma; n]
    }

    /// Names of the optimizer constraints, in evaluation order.
    pub fn constraint_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        match self.problem.constraints.volume_mode {
            VolumeMode::Global => names.push("volume".to_string()),
            VolumeMode::PerStage => {
                names.extend((1..=self.n_stages()).map(|j| format!("stage_volume_{j}")))
            }
        }
        if self.problem.constraints.continuity {
            names.push("continuity".into());
        }
        if self.problem.constraints.overhang {
            names.push("overhang".into());
        }
        names
    }

    fn orientation_field(&self, fs: &FieldState, theta: &[f64]) -> (Vec<f64>, Vec<Mat3>, Vec<Mat3>) {
        let phi = material_orientation(&fs.t_bar, theta);
        let domain = &self.problem.domain;
        let passive_phi = self.problem.theta0 + MATERIAL_AXIS_OFFSET;
        let passive_d = rotated_constitutive(&self.d0, passive_phi);
        let mut d = Vec::with_capacity(domain.grid.n_cells());
        let mut dd = Vec::with_capacity(domain.grid.n_cells());
        for c in 0..domain.grid.n_cells() {
            match domain.design_index(c) {
                Some(e) => {
                    d.push(rotated_constitutive(&self.d0, phi[e]));
                    dd.push(d_constitutive_d_phi(&self.d0, phi[e]));
                }
                None => {
                    d.push(passive_d);
                    dd.push([[0.0; 3]; 3]);
                }
            }
        }
        (phi, d, dd)
    }

    /// Evaluates the objective and all constraints at sharpness `betas`.
    pub fn evaluate(&self, x: &DesignVector, betas: (f64, f64), gradients: bool) -> Result<Evaluation> {
        let p = &self.problem;
        x.validate(self.n_design(), self.n_stages(), p.theta0)?;
        let fs = self.field_state(x, betas);
        let domain = &p.domain;
        let n = self.n_design();
        let ns = self.n_stages();
        let v = self.element_volume;
        let vdom = self.domain_volume();

        // stiffness
        let anisotropic = p.material.is_anisotropic();
        let rho_cells = domain.to_cells(&fs.rho, RHO_MIN, 1.0);
        let scale: Vec<f64> = rho_cells.iter().map(|r| r.powf(p.penal)).collect();
        let (phi, d_cells, dd_cells) = if anisotropic {
            let (phi, d, dd) = self.orientation_field(&fs, &x.theta);
            (Some(phi), d, dd)
        } else {
            (None, Vec::new(), Vec::new())
        };
        let constitutive = if anisotropic {
            Constitutive::PerCell(&d_cells)
        } else {
            Constitutive::Uniform(&self.d0)
        };
        let solve = self.layout.solve(&scale, constitutive, &p.loads, &p.solver)?;

        // constraint values
        let volume: f64 = crate::constraints::total_volume(&fs.rho, v);
        let stage_volumes = crate::constraints::stage_volumes(&fs.rho_stage, v);
        let (continuity, dcont) = if gradients {
            let (c, g) = self.continuity.value_and_gradient(&fs.t_filtered);
            (c, Some(g))
        } else {
            (self.continuity.value(&fs.t_filtered), None)
        };
        let oh = overhang(
            domain,
            &self.padding,
            &fs.rho_stage,
            &x.theta,
            &self.overhang_params,
            gradients && p.constraints.overhang,
        );

        let mut constraints = Vec::new();
        let mut partials: Vec<Partials> = Vec::new();
        match p.constraints.volume_mode {
            VolumeMode::Global => {
                let bound = p.v0 * vdom;
                constraints.push(ConstraintValue {
                    name: "volume".into(),
                    raw: volume,
                    bound,
                    normalized: volume / bound - 1.0,
                });
                if gradients {
                    let mut a = Partials::new(n, ns);
                    a.rho = vec![v / bound; n];
                    partials.push(a);
                }
            }
            VolumeMode::PerStage => {
                let bound = p.v0 * vdom / ns as f64;
                for (j, &sv) in stage_volumes.iter().enumerate() {
                    constraints.push(ConstraintValue {
                        name: format!("stage_volume_{}", j + 1),
                        raw: sv,
                        bound,
                        normalized: sv / bound - 1.0,
                    });
                    if gradients {
                        let mut a = Partials::new(n, ns);
                        a.stage = vec![Vec::new(); ns + 1];
                        a.stage[j + 1] = vec![v / bound; n];
                        a.stage[j] = vec![-v / bound; n];
                        partials.push(a);
                    }
                }
            }
        }
        if p.constraints.continuity {
            let gamma = p.constraints.gamma;
            constraints.push(ConstraintValue {
                name: "continuity".into(),
                raw: continuity,
                bound: gamma,
                normalized: continuity / gamma - 1.0,
            });
            if let Some(g) = &dcont {
                let mut a = Partials::new(n, ns);
                a.t = g.iter().map(|v| v / gamma).collect();
                partials.push(a);
            }
        }
        if p.constraints.overhang {
            let pb = p.p_bar;
            constraints.push(ConstraintValue {
                name: "overhang".into(),
                raw: oh.total,
                bound: pb,
                normalized: oh.total / pb - 1.0,
            });
            if gradients {
                let mut a = Partials::new(n, ns);
                a.stage = oh
                    .d_stage
                    .iter()
                    .map(|s| s.iter().map(|v| v / pb).collect())
                    .collect();
                a.theta = oh.d_theta.iter().map(|v| v / pb).collect();
                partials.push(a);
            }
        }

        let (compliance_gradient, constraint_gradients) = if gradients {
            let orient = phi
                .as_ref()
                .map(|_| orientation_sensitivities(&fs.t_bar, &fs.dt_bar, &x.theta));
            let dc_drho_cells = self.layout.compliance_density_sensitivities(
                &solve.u,
                &rho_cells,
                p.penal,
                constitutive,
            );
            let mut a = Partials::new(n, ns);
            for (e, &c) in domain.design_cells().iter().enumerate() {
                a.rho[e] = dc_drho_cells[c];
            }
            if anisotropic {
                let dphi_cells =
                    self.layout
                        .compliance_orientation_sensitivities(&solve.u, &scale, &dd_cells);
                a.phi = domain.design_cells().iter().map(|&c| dphi_cells[c]).collect();
            }
            let cg = self.pull_back(&fs, orient.as_ref(), a);
            let gs = partials
                .into_iter()
                .map(|a| self.pull_back(&fs, orient.as_ref(), a))
                .collect();
            (Some(cg), gs)
        } else {
            (None, Vec::new())
        };

        Ok(Evaluation {
            phi,
            compliance: solve.compliance,
            residual: solve.residual,
            displacements: solve.u,
            volume_fraction: volume / vdom,
            stage_volumes,
            continuity,
            overhang: oh,
            constraints,
            compliance_gradient,
            constraint_gradients,
            fields: fs,
        })
    }

    fn pull_back(
        &self,
        fs: &FieldState,
        orient: Option<&OrientationSensitivities>,
        mut a: Partials,
    ) -> DesignGradient {
        let n = self.n_design();
        for (j, aj) in a.stage.iter().enumerate() {
            if aj.is_empty() {
                continue;
            }
            for e in 0..n {
                a.rho[e] += aj[e] * fs.t_bar[j][e];
                a.t[e] += aj[e] * fs.rho[e] * fs.dt_bar[j][e];
            }
        }
        if let (Some(o), false) = (orient, a.phi.is_empty()) {
            for e in 0..n {
                a.t[e] += a.phi[e] * o.dphi_dt[e];
            }
            for (j, col) in o.dphi_dtheta.iter().enumerate() {
                a.theta[j] += col.iter().zip(&a.phi).map(|(d, g)| d * g).sum::<f64>();
            }
        }
        let a_psi_f: Vec<f64> = (0..n)
            .map(|e| a.rho[e] * (1.0 - RHO_MIN) * fs.dpsi_projected[e])
            .collect();
        for (t, &pinned) in a.t.iter_mut().zip(&self.problem.domain.base_plate) {
            if pinned {
                *t = 0.0;
            }
        }
        DesignGradient {
            psi: self.density_filter.apply_transpose(&a_psi_f),
            tau: self.time_filter.apply_transpose(&a.t),
            theta: a.theta,
        }
    }
}
