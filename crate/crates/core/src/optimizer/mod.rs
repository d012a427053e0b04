//! Constrained optimization driver.
//!
//! [`solve_nlp`] runs MMA on any [`NlpProblem`]. The problem may change
//! between iterations (sharpness continuation); MMA keeps its asymptotes
//! across those changes and each subproblem sees one fixed level.

pub mod audit;
pub mod convergence;
pub mod mma;
pub mod topopt;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use audit::{finite_difference_audit, AuditEntry, AuditReport};
pub use convergence::{convergence_check, Convergence};
pub use mma::{Mma, MmaParams};
pub use topopt::{optimize, optimize_observed, RunOutcome, TopOptNlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Per-iteration step limit as a fraction of each variable's range.
    pub move_limit: f64,
    /// Relative objective change over `window` iterations.
    pub tolerance: f64,
    /// Largest admissible normalized constraint value.
    pub feasibility_tolerance: f64,
    pub window: usize,
    /// Design change below which an infeasible run counts as stalled.
    pub stall_change: f64,
    /// Subtracted from every normalized bound the optimizer sees, so steps
    /// land slightly inside the feasible set.
    pub constraint_margin: f64,
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    /// Penalty on the elastic constraint relaxation.
    pub c: f64,
    /// Re-solve each subproblem with raised curvature until its
    /// approximations bound the true functions at the candidate point
    /// (Svanberg's globally convergent variant). Off by default: the
    /// Heaviside-based overhang measure is far from convex, and forcing its
    /// approximation to bound it freezes the design. Continuity gets exact
    /// curvature through [`NlpProblem::curvature`] instead.
    pub conservative: bool,
    /// Inner re-solves per iteration in conservative mode.
    pub max_inner: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            move_limit: 0.05,
            tolerance: 1e-5,
            feasibility_tolerance: 1e-6,
            window: 10,
            stall_change: 1e-6,
            constraint_margin: 0.0,
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            c: 1000.0,
            conservative: false,
            max_inner: 15,
        }
    }
}

impl OptimizerSettings {
    pub fn mma_params(&self) -> MmaParams {
        MmaParams {
            move_limit: self.move_limit,
            asyinit: self.asyinit,
            asyincr: self.asyincr,
            asydecr: self.asydecr,
            c: self.c,
            ..MmaParams::default()
        }
    }
}

/// Problem-specific quantities logged per iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub compliance: f64,
    pub volume: f64,
    pub continuity: f64,
    pub overhang: f64,
    pub stage_volumes: Vec<f64>,
    /// Backward error of the state solve.
    #[serde(default)]
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct NlpEvaluation {
    pub objective: f64,
    pub gradient: Vec<f64>,
    /// Values in `g <= 0` form.
    pub constraints: Vec<f64>,
    /// One gradient per constraint; may be empty when gradients were not
    /// requested.
    pub jacobian: Vec<Vec<f64>>,
    pub metrics: Metrics,
}

pub trait NlpProblem {
    fn n_vars(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn constraint_names(&self) -> Vec<String>;
    /// Evaluates at `x` for optimizer iteration `iteration`.
    fn evaluate(&mut self, x: &[f64], iteration: usize, gradients: bool) -> Result<NlpEvaluation>;
    /// `(beta_d, beta_t)` in effect at `iteration`.
    fn sharpness(&self, _iteration: usize) -> (f64, f64) {
        (0.0, 0.0)
    }
    /// Per constraint, a bound on each diagonal second derivative, used as
    /// the curvature of the approximation; an empty entry means unknown.
    fn curvature(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }
    /// Whether an evaluation made for iteration `a` is valid for `b`.
    fn same_level(&self, _a: usize, _b: usize) -> bool {
        false
    }
    /// Whether the problem has stopped changing at `iteration`.
    fn at_final_level(&self, _iteration: usize) -> bool {
        true
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub metrics: Metrics,
    /// Normalized constraint values.
    pub constraints: Vec<f64>,
    pub max_violation: f64,
    pub beta_d: f64,
    pub beta_t: f64,
    /// Largest change of any variable in the step that produced this iterate.
    pub max_change: f64,
    pub at_final_level: bool,
    /// Subproblem re-solves spent on the step that produced this iterate.
    #[serde(default)]
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpStatus {
    Converged,
    Stalled,
    MaxIterations,
    /// An evaluation failed; the message is kept and the records stop there.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct NlpOutcome {
    /// Best feasible iterate at the final problem level, otherwise the
    /// least infeasible one.
    pub x: Vec<f64>,
    pub best_iteration: usize,
    pub feasible: bool,
    pub status: NlpStatus,
    pub records: Vec<IterationRecord>,
    /// Constraint multipliers of the last subproblem.
    pub multipliers: Vec<f64>,
}

pub fn solve_nlp<P: NlpProblem + ?Sized>(
    problem: &mut P,
    x0: &[f64],
    settings: &OptimizerSettings,
) -> NlpOutcome {
    solve_nlp_observed(problem, x0, settings, &mut |_, _| {})
}

/// Like [`solve_nlp`], calling `observer` with every record and the iterate
/// it describes.
pub fn solve_nlp_observed<P: NlpProblem + ?Sized>(
    problem: &mut P,
    x0: &[f64],
    settings: &OptimizerSettings,
    observer: &mut dyn FnMut(&IterationRecord, &[f64]),
) -> NlpOutcome {
    let (lo, hi) = problem.bounds();
    let mut mma = Mma::new(lo, hi, settings.mma_params());
    let mut x = x0.to_vec();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut max_change = 0.0;
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut least: Option<(f64, usize, Vec<f64>)> = None;
    let mut multipliers = Vec::new();
    let mut status = NlpStatus::MaxIterations;
    let tol = settings.feasibility_tolerance;

    let mut inner_iterations = 0;
    let mut pending: Option<(usize, NlpEvaluation)> = None;
    let curvature = problem.curvature();
    for it in 0..=settings.max_iterations {
        let eval = match pending.take() {
            Some((at, e)) if problem.same_level(at, it) => Ok(e),
            _ => problem.evaluate(&x, it, true),
        };
        let eval = match eval {
            Ok(e) => e,
            Err(e) => {
                status = NlpStatus::Failed(e.to_string());
                break;
            }
        };
        let max_violation = eval
            .constraints
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let (beta_d, beta_t) = problem.sharpness(it);
        let at_final_level = problem.at_final_level(it);
        records.push(IterationRecord {
            iteration: it,
            objective: eval.objective,
            metrics: eval.metrics.clone(),
            constraints: eval.constraints.clone(),
            max_violation,
            beta_d,
            beta_t,
            max_change,
            at_final_level,
            inner_iterations,
        });
        observer(records.last().unwrap(), &x);
        if at_final_level && max_violation <= tol {
            if best.as_ref().map_or(true, |b| eval.objective < b.0) {
                best = Some((eval.objective, it, x.clone()));
            }
        }
        if least.as_ref().map_or(true, |b| max_violation < b.0) {
            least = Some((max_violation, it, x.clone()));
        }
        match convergence_check(&records, settings) {
            Convergence::Continue => {}
            Convergence::Converged => {
                status = NlpStatus::Converged;
                break;
            }
            Convergence::Stalled => {
                status = NlpStatus::Stalled;
                break;
            }
        }
        if it == settings.max_iterations {
            break;
        }
        let shift = |g: &[f64]| -> Vec<f64> { g.iter().map(|g| g + settings.constraint_margin).collect() };
        let mut approx = mma.approximate(
            &x,
            eval.objective,
            &eval.gradient,
            &shift(&eval.constraints),
            &eval.jacobian,
            &curvature,
            settings.conservative,
        );
        inner_iterations = 0;
        let step = loop {
            let step = approx.solve();
            if !settings.conservative {
                break Ok(step);
            }
            let trial = match problem.evaluate(&step.x, it, true) {
                Ok(t) => t,
                Err(e) => break Err(e),
            };
            let g = shift(&trial.constraints);
            if inner_iterations >= settings.max_inner || approx.is_conservative(&step.x, trial.objective, &g) {
                pending = Some((it, trial));
                break Ok(step);
            }
            approx.raise(&step.x, trial.objective, &g);
            inner_iterations += 1;
        };
        let step = match step {
            Ok(s) => s,
            Err(e) => {
                status = NlpStatus::Failed(e.to_string());
                break;
            }
        };
        mma.accept(&x, &step);
        multipliers = step.lambda;
        max_change = step
            .x
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = step.x;
    }

    let (x, best_iteration, feasible) = match (best, least) {
        (Some((_, i, x)), _) => (x, i, true),
        (None, Some((v, i, x))) => (x, i, v <= tol),
        (None, None) => (x0.to_vec(), 0, false),
    };
    NlpOutcome {
        x,
        best_iteration,
        feasible,
        status,
        records,
        multipliers,
    }
}
