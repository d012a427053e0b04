//! Design variables and the chain that turns them into physical stage fields.
//!
//! ```text
//! psi --filter--> psi~ --project(eta, beta_d)--> psi- --> rho = rho_min + (1 - rho_min) psi-
//! tau --filter--> t (base plate pinned to 0) --truncate(j/N, beta_t)--> t-^{j}, j = 0..=N
//! rho^{j} = rho * t-^{j}
//! ```

pub mod filter;
pub mod projection;

use serde::{Deserialize, Serialize};

pub use filter::{apply_linear_filter, LinearFilter};
pub use projection::{project, project_derivative, truncate_time, truncate_time_derivative};

use crate::error::{Error, Result};

/// Density floor keeping the stiffness matrix positive definite.
pub const RHO_MIN: f64 = 1e-3;

/// Optimizer unknowns: raw density and raw pseudo-time per design element,
/// one build orientation (radians) per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    pub psi: Vec<f64>,
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
}

impl DesignVector {
    pub fn n_stages(&self) -> usize {
        self.theta.len()
    }

    /// Checks lengths and box bounds; `theta0` is the initial orientation.
    pub fn validate(&self, n_design: usize, n_stages: usize, theta0: f64) -> Result<()> {
        if self.psi.len() != n_design || self.tau.len() != n_design {
            return Err(Error::config(format!(
                "design vector has {} densities and {} times for {} design elements",
                self.psi.len(),
                self.tau.len(),
                n_design
            )));
        }
        if self.theta.len() != n_stages {
            return Err(Error::config(format!(
                "design vector has {} orientations for {} stages",
                self.theta.len(),
                n_stages
            )));
        }
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        if !self.psi.iter().all(unit) || !self.tau.iter().all(unit) {
            return Err(Error::config("density and time variables must lie in [0, 1]"));
        }
        let half = std::f64::consts::FRAC_PI_2 + 1e-12;
        if self.theta.iter().any(|t| (t - theta0).abs() > half) {
            return Err(Error::config(
                "build orientations must stay within theta0 +/- pi/2",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub beta_d: f64,
    pub beta_t: f64,
    pub eta: f64,
    /// `tau_j = j / N` for `j = 0..=N`.
    pub stage_thresholds: Vec<f64>,
}

impl ProjectionParams {
    pub fn new(beta_d: f64, beta_t: f64, n_stages: usize) -> Self {
        assert!(n_stages >= 1);
        Self {
            beta_d,
            beta_t,
            eta: 0.5,
            stage_thresholds: (0..=n_stages)
                .map(|j| j as f64 / n_stages as f64)
                .collect(),
        }
    }

    pub fn n_stages(&self) -> usize {
        self.stage_thresholds.len() - 1
    }
}

/// Heaviside sharpness continuation.
///
/// Both sharpness values start at `start`; from iteration `first_iteration`
/// on (iteration 0 is the initial evaluation) they grow by `step` every
/// `every` iterations until they reach their caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationSchedule {
    pub start: f64,
    pub step: f64,
    pub every: usize,
    pub first_iteration: usize,
    pub beta_d_max: f64,
    pub beta_t_max: f64,
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        Self {
            start: 20.0,
            step: 3.0,
            every: 5,
            first_iteration: 40,
            beta_d_max: 50.0,
            beta_t_max: 80.0,
        }
    }
}

impl ContinuationSchedule {
    pub fn betas(&self, iteration: usize) -> (f64, f64) {
        let increments = if iteration >= self.first_iteration {
            (iteration - self.first_iteration) / self.every.max(1) + 1
        } else {
            0
        };
        let beta = self.start + self.step * increments as f64;
        (beta.min(self.beta_d_max), beta.min(self.beta_t_max))
    }

    pub fn at_cap(&self, iteration: usize) -> bool {
        let (d, t) = self.betas(iteration);
        d >= self.beta_d_max && t >= self.beta_t_max
    }
}

/// Derived fields for one design. Per-stage arrays are indexed `[j][e]`,
/// `j = 0..=N`.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub psi_filtered: Vec<f64>,
    pub psi_projected: Vec<f64>,
    pub rho: Vec<f64>,
    pub t_filtered: Vec<f64>,
    pub t_bar: Vec<Vec<f64>>,
    pub rho_stage: Vec<Vec<f64>>,
    /// d psi- / d psi~.
    pub dpsi_projected: Vec<f64>,
    /// d t-^{j} / d t.
    pub dt_bar: Vec<Vec<f64>>,
}

impl FieldState {
    /// `pinned` marks design elements whose filtered time is held at 0
    /// (the base plate).
    pub fn build(
        x: &DesignVector,
        params: &ProjectionParams,
        density_filter: &LinearFilter,
        time_filter: &LinearFilter,
        pinned: &[bool],
    ) -> Self {
        let psi_filtered = density_filter.apply(&x.psi);
        let psi_projected = project_density(&psi_filtered, params);
        let dpsi_projected = psi_filtered
            .iter()
            .map(|&v| project_derivative(v, params.eta, params.beta_d))
            .collect();
        let rho = physical_density(&psi_projected);
        let mut t_filtered = time_filter.apply(&x.tau);
        for (t, &p) in t_filtered.iter_mut().zip(pinned) {
            if p {
                *t = 0.0;
            }
        }
        let t_bar: Vec<Vec<f64>> = (0..=params.n_stages())
            .map(|j| truncate_time_field(&t_filtered, j, params))
            .collect();
        let dt_bar = projection_derivatives(&t_filtered, params);
        let rho_stage = stage_density(&rho, &t_bar);
        Self {
            psi_filtered,
            psi_projected,
            rho,
            t_filtered,
            t_bar,
            rho_stage,
            dpsi_projected,
            dt_bar,
        }
    }

    pub fn n_stages(&self) -> usize {
        self.t_bar.len() - 1
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

pub fn project_density(psi_filtered: &[f64], params: &ProjectionParams) -> Vec<f64> {
    psi_filtered
        .iter()
        .map(|&v| project(v, params.eta, params.beta_d))
        .collect()
}

pub fn physical_density(psi_projected: &[f64]) -> Vec<f64> {
    psi_projected
        .iter()
        .map(|&p| RHO_MIN + (1.0 - RHO_MIN) * p)
        .collect()
}

pub fn truncate_time_field(t: &[f64], stage: usize, params: &ProjectionParams) -> Vec<f64> {
    let thr = params.stage_thresholds[stage];
    t.iter()
        .map(|&v| truncate_time(v, thr, params.beta_t))
        .collect()
}

/// `rho^{j}_e = rho_e * t-^{j}_e` for every stage.
pub fn stage_density(rho: &[f64], t_bar: &[Vec<f64>]) -> Vec<Vec<f64>> {
    t_bar
        .iter()
        .map(|tj| rho.iter().zip(tj).map(|(r, t)| r * t).collect())
        .collect()
}

/// d t-^{j} / d t for every stage, `[j][e]`.
pub fn projection_derivatives(t: &[f64], params: &ProjectionParams) -> Vec<Vec<f64>> {
    params
        .stage_thresholds
        .iter()
        .map(|&thr| {
            t.iter()
                .map(|&v| truncate_time_derivative(v, thr, params.beta_t))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn continuation_matches_schedule() {
        let s = ContinuationSchedule::default();
        assert_eq!(s.betas(0), (20.0, 20.0));
        assert_eq!(s.betas(39), (20.0, 20.0));
        assert_eq!(s.betas(40), (23.0, 23.0));
        assert_eq!(s.betas(44), (23.0, 23.0));
        assert_eq!(s.betas(45), (26.0, 26.0));
        assert_eq!(s.betas(300), (50.0, 80.0));
        assert!(!s.at_cap(120));
        assert!(s.at_cap(135));
    }

    #[test]
    fn density_floor_applies() {
        let rho = physical_density(&[0.0, 1.0, 0.5]);
        assert_eq!(rho[0], RHO_MIN);
        assert_eq!(rho[1], 1.0);
    }

    #[test]
    fn full_solid_deposited_stage_is_one() {
        let s = stage_density(&[1.0], &[vec![1.0]]);
        assert_eq!(s[0][0], 1.0);
    }

    #[test]
    fn telescoping_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 50;
        let rho: Vec<f64> = (0..n).map(|_| rng.gen_range(RHO_MIN..1.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let params = ProjectionParams::new(20.0, 37.0, 6);
        let tb: Vec<_> = (0..=6).map(|j| truncate_time_field(&t, j, &params)).collect();
        let rs = stage_density(&rho, &tb);
        for e in 0..n {
            let sum: f64 = (1..=6).map(|j| rs[j][e] - rs[j - 1][e]).sum();
            assert!((sum - (rs[6][e] - rs[0][e])).abs() < 1e-15);
        }
    }

    #[test]
    fn field_state_invariants() {
        let g = Grid::new(10, 6, 1.0).unwrap();
        let members: Vec<usize> = (0..g.n_cells()).collect();
        let f = LinearFilter::new(&g, &members, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = g.n_cells();
        let x = DesignVector {
            psi: (0..n).map(|_| rng.gen()).collect(),
            tau: (0..n).map(|_| rng.gen()).collect(),
            theta: vec![1.0; 4],
        };
        let pinned: Vec<bool> = (0..n).map(|c| c < g.nx).collect();
        let params = ProjectionParams::new(20.0, 20.0, 4);
        let s = FieldState::build(&x, &params, &f, &f, &pinned);
        assert!(s.rho.iter().all(|&r| r >= RHO_MIN));
        for e in 0..n {
            for j in 1..=4 {
                assert!(s.t_bar[j][e] >= s.t_bar[j - 1][e] - 1e-12);
                assert!(s.dt_bar[j][e] <= 0.0);
                assert_eq!(s.rho_stage[j][e], s.rho[e] * s.t_bar[j][e]);
            }
        }
        for e in 0..g.nx {
            assert_eq!(s.t_filtered[e], 0.0);
            assert_eq!(s.t_bar[0][e], 1.0);
        }
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let x = DesignVector {
            psi: vec![0.5; 3],
            tau: vec![0.5, 1.2, 0.0],
            theta: vec![0.0],
        };
        assert!(x.validate(3, 1, 0.0).is_err());
        let y = DesignVector {
            tau: vec![0.5; 3],
            theta: vec![2.0],
            ..x
        };
        assert!(y.validate(3, 1, 0.0).is_err());
    }
}
