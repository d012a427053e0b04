//! Adapter exposing a [`Model`] as an [`NlpProblem`].
//!
//! Optimizer vector layout: `[psi (all design elements), tau (elements off
//! the base plate), theta scaled to [0, 1]]`. Base-plate times stay at 0
//! and never enter the optimizer. Orientation `theta_j` maps to
//! `(theta_j - theta0 + pi/2) / pi`. The objective is compliance divided by
//! its value at the starting design.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::Result;
use crate::fields::DesignVector;
use crate::model::{DesignGradient, Evaluation, Model};

use super::{solve_nlp_observed, IterationRecord, Metrics, NlpEvaluation, NlpProblem, NlpStatus};

pub struct TopOptNlp<'a> {
    model: &'a Model,
    free_tau: Vec<usize>,
    template: DesignVector,
    initial_compliance: Option<f64>,
}

impl<'a> TopOptNlp<'a> {
    pub fn new(model: &'a Model, x0: &DesignVector) -> Self {
        let free_tau = model.problem.domain.free_elements().collect();
        Self {
            model,
            free_tau,
            template: x0.clone(),
            initial_compliance: None,
        }
    }

    fn theta_lo(&self) -> f64 {
        self.model.problem.theta0 - FRAC_PI_2
    }

    pub fn to_vars(&self, x: &DesignVector) -> Vec<f64> {
        let lo = self.theta_lo();
        let mut v = x.psi.clone();
        v.extend(self.free_tau.iter().map(|&e| x.tau[e]));
        v.extend(x.theta.iter().map(|t| ((t - lo) / PI).clamp(0.0, 1.0)));
        v
    }

    pub fn to_design(&self, v: &[f64]) -> DesignVector {
        let n = self.model.n_design();
        let nf = self.free_tau.len();
        let lo = self.theta_lo();
        let mut x = self.template.clone();
        x.psi.copy_from_slice(&v[..n]);
        for (k, &e) in self.free_tau.iter().enumerate() {
            x.tau[e] = v[n + k];
        }
        for (j, t) in x.theta.iter_mut().enumerate() {
            *t = lo + PI * v[n + nf + j];
        }
        x
    }

    fn flatten(&self, g: &DesignGradient) -> Vec<f64> {
        let mut v = g.psi.clone();
        v.extend(self.free_tau.iter().map(|&e| g.tau[e]));
        v.extend(g.theta.iter().map(|d| d * PI));
        v
    }

    pub fn initial_compliance(&self) -> Option<f64> {
        self.initial_compliance
    }
}

impl NlpProblem for TopOptNlp<'_> {
    fn n_vars(&self) -> usize {
        self.model.n_design() + self.free_tau.len() + self.model.n_stages()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.n_vars()], vec![1.0; self.n_vars()])
    }

    fn constraint_names(&self) -> Vec<String> {
        self.model.constraint_names()
    }

    fn evaluate(&mut self, v: &[f64], iteration: usize, gradients: bool) -> Result<NlpEvaluation> {
        let x = self.to_design(v);
        let betas = self.sharpness(iteration);
        let e = self
            .model
            .evaluate(&x, betas, gradients)
            .map_err(|err| crate::Error::Evaluation {
                iteration,
                message: err.to_string(),
            })?;
        let c0 = *self.initial_compliance.get_or_insert(e.compliance);
        let gradient = e
            .compliance_gradient
            .as_ref()
            .map(|g| self.flatten(g).into_iter().map(|d| d / c0).collect())
            .unwrap_or_default();
        let jacobian = e.constraint_gradients.iter().map(|g| self.flatten(g)).collect();
        Ok(NlpEvaluation {
            objective: e.compliance / c0,
            gradient,
            constraints: e.constraints.iter().map(|c| c.normalized).collect(),
            jacobian,
            metrics: metrics_of(&e),
        })
    }

    fn sharpness(&self, iteration: usize) -> (f64, f64) {
        self.model.problem.continuation.betas(iteration)
    }

    fn curvature(&self) -> Vec<Vec<f64>> {
        let n = self.model.n_design();
        let names = self.constraint_names();
        let tau = self.model.continuity_curvature();
        names
            .iter()
            .map(|name| {
                if name != "continuity" {
                    return Vec::new();
                }
                let mut h = vec![0.0; self.n_vars()];
                for (k, &e) in self.free_tau.iter().enumerate() {
                    h[n + k] = tau[e];
                }
                h
            })
            .collect()
    }

    fn same_level(&self, a: usize, b: usize) -> bool {
        self.sharpness(a) == self.sharpness(b)
    }

    fn at_final_level(&self, iteration: usize) -> bool {
        self.model.problem.continuation.at_cap(iteration)
    }
}

pub fn metrics_of(e: &Evaluation) -> Metrics {
    Metrics {
        compliance: e.compliance,
        volume: e.volume_fraction,
        continuity: e.continuity,
        overhang: e.overhang.total,
        stage_volumes: e.stage_volumes.clone(),
        residual: e.residual,
    }
}

/// Result of a full optimization run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub design: DesignVector,
    /// Evaluation of `design` at the sharpness of `best_iteration`.
    pub evaluation: Option<Evaluation>,
    pub betas: (f64, f64),
    pub records: Vec<IterationRecord>,
    pub status: NlpStatus,
    pub best_iteration: usize,
    pub feasible: bool,
    pub initial_compliance: f64,
}

/// Runs the optimizer from `x0` with the model's own settings.
pub fn optimize(model: &Model, x0: &DesignVector) -> RunOutcome {
    optimize_observed(model, x0, &mut |_, _| {})
}

/// [`optimize`] with a per-iteration observer receiving the record and the
/// design it describes.
pub fn optimize_observed(
    model: &Model,
    x0: &DesignVector,
    observer: &mut dyn FnMut(&IterationRecord, &DesignVector),
) -> RunOutcome {
    let settings = model.problem.optimizer.clone();
    let mut nlp = TopOptNlp::new(model, x0);
    let v0 = nlp.to_vars(x0);
    let mapper = TopOptNlp::new(model, x0);
    let out = solve_nlp_observed(&mut nlp, &v0, &settings, &mut |r, v| {
        observer(r, &mapper.to_design(v))
    });
    let design = nlp.to_design(&out.x);
    let betas = nlp.sharpness(out.best_iteration);
    let evaluation = model.evaluate(&design, betas, false).ok();
    RunOutcome {
        design,
        evaluation,
        betas,
        records: out.records,
        status: out.status,
        best_iteration: out.best_iteration,
        feasible: out.feasible,
        initial_compliance: nlp.initial_compliance().unwrap_or(f64::NAN),
    }
}
