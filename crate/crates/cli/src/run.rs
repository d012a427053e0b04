//! Runs, studies and the gradient audit behind the `run` and `verify`
//! commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use spacetime_topopt::material::MaterialMode;
use spacetime_topopt::model::ConstraintValue;
use spacetime_topopt::optimizer::audit::random_interior_design;
use spacetime_topopt::optimizer::{finite_difference_audit, optimize_observed, AuditReport, IterationRecord, NlpStatus};
use spacetime_topopt::problems::{stage_report, BenchmarkConfig, CellRect, LoadSpec, ProblemKind, StageRow};
use spacetime_topopt::{DesignVector, Model};

use crate::config::{ConfigError, RunConfig, Study};
use crate::export::{self, CellFields};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error("solver failure: {0}")]
    Solver(String),
}

impl RunError {
    /// Process exit code: 2 for anything wrong with the input, 3 when the
    /// run itself failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Problem(_) => 2,
            RunError::Output { .. } | RunError::Solver(_) => 3,
        }
    }
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub name: String,
    pub raw: f64,
    pub bound: f64,
    pub normalized: f64,
    pub satisfied: bool,
}

impl ConstraintReport {
    fn new(c: &ConstraintValue, tolerance: f64) -> Self {
        Self {
            name: c.name.clone(),
            raw: c.raw,
            bound: c.bound,
            normalized: c.normalized,
            satisfied: c.normalized <= tolerance,
        }
    }
}

/// Everything known about one finished (or failed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: NlpStatus,
    pub feasible: bool,
    pub initial_compliance: Option<f64>,
    /// Compliance of the returned design; `None` when it could not be
    /// evaluated.
    pub final_compliance: Option<f64>,
    pub grayness: Option<f64>,
    pub best_iteration: usize,
    pub iterations: usize,
    pub betas: (f64, f64),
    pub constraints: Vec<ConstraintReport>,
    pub stage_table: Vec<StageRow>,
    /// Largest state-solve backward error over all iterations.
    pub max_residual: f64,
    pub history: Vec<IterationRecord>,
    pub design: DesignVector,
    pub wall_clock_seconds: f64,
    pub config: RunConfig,
}

impl RunReport {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(|e| RunError::Problem(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::Problem(format!("{}: {e}", path.display())))
    }

    pub fn constraint(&self, name: &str) -> Option<&ConstraintReport> {
        self.constraints.iter().find(|c| c.name == name)
    }
}

/// One run of a study, as listed in `study.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEntry {
    pub label: String,
    pub directory: PathBuf,
    pub gamma: f64,
    pub stages: usize,
    pub status: NlpStatus,
    pub feasible: bool,
    pub final_compliance: Option<f64>,
    pub continuity: Option<f64>,
}

impl StudyEntry {
    fn new(label: String, directory: PathBuf, report: &RunReport) -> Self {
        Self {
            label,
            directory,
            gamma: report.config.problem.constraints.gamma,
            stages: report.config.problem.stages,
            status: report.status.clone(),
            feasible: report.feasible,
            final_compliance: report.final_compliance,
            continuity: report.constraint("continuity").map(|c| c.raw),
        }
    }
}

/// Isotropic design re-evaluated with orientation-dependent moduli, next to
/// a native anisotropic optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reanalysis {
    pub isotropic_compliance: f64,
    pub reanalyzed_compliance: f64,
    pub anisotropic_compliance: f64,
    /// `|reanalyzed - anisotropic| / anisotropic`.
    pub relative_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub entries: Vec<StudyEntry>,
    pub reanalysis: Option<Reanalysis>,
}

/// Outcome of a `run` invocation.
#[derive(Debug, Clone)]
pub enum Outcome {
    Single(Box<RunReport>),
    Study(StudyReport),
}

/// Runs `cfg` inside a worker pool of `cfg.threads` threads.
pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| RunError::Problem(e.to_string()))?;
    pool.install(|| run_study(cfg))
}

fn prepare_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| {
        RunError::Config(ConfigError {
            path: dir.to_path_buf(),
            line: None,
            column: None,
            message: format!("output directory is not writable: {e}"),
        })
    })
}

fn run_study(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let variant = |problem: BenchmarkConfig, dir: PathBuf| RunConfig {
        problem,
        output_dir: dir,
        study: Study::None,
        ..cfg.clone()
    };
    let (entries, reanalysis) = match &cfg.study {
        Study::None => return run_single(cfg).map(|r| Outcome::Single(Box::new(r))),
        Study::GammaSweep { gammas } => {
            let mut entries = Vec::new();
            for &g in gammas {
                let mut p = cfg.problem.clone();
                p.constraints.gamma = g;
                let label = format!("gamma_{g:e}");
                let sub = variant(p, cfg.output_dir.join(&label));
                let report = run_single(&sub)?;
                entries.push(StudyEntry::new(label, sub.output_dir, &report));
            }
            (entries, None)
        }
        Study::StageSweep { stages } => {
            let mut entries = Vec::new();
            for &n in stages {
                let mut p = cfg.problem.clone();
                p.stages = n;
                let label = format!("stages_{n}");
                let sub = variant(p, cfg.output_dir.join(&label));
                let report = run_single(&sub)?;
                entries.push(StudyEntry::new(label, sub.output_dir, &report));
            }
            (entries, None)
        }
        Study::Reanalysis { design } => {
            let mut iso_cfg = cfg.problem.clone();
            iso_cfg.material = MaterialMode::Isotropic;
            let mut aniso_cfg = cfg.problem.clone();
            aniso_cfg.material = MaterialMode::Anisotropic;
            let mut entries = Vec::new();
            let iso = match design {
                Some(path) => RunReport::load(path)?,
                None => {
                    let sub = variant(iso_cfg, cfg.output_dir.join("isotropic"));
                    let report = run_single(&sub)?;
                    entries.push(StudyEntry::new("isotropic".into(), sub.output_dir, &report));
                    report
                }
            };
            let sub = variant(aniso_cfg.clone(), cfg.output_dir.join("anisotropic"));
            let aniso = run_single(&sub)?;
            entries.push(StudyEntry::new("anisotropic".into(), sub.output_dir, &aniso));
            let reanalyzed = reanalyze(&aniso_cfg, &iso)?;
            let evaluated = |r: &RunReport| {
                r.final_compliance
                    .ok_or_else(|| RunError::Problem("isotropic report has no evaluated design".into()))
            };
            let native = evaluated(&aniso)?;
            let result = Reanalysis {
                isotropic_compliance: evaluated(&iso)?,
                reanalyzed_compliance: reanalyzed,
                anisotropic_compliance: native,
                relative_difference: (reanalyzed - native).abs() / native,
            };
            (entries, Some(result))
        }
    };
    let report = StudyReport {
        study: cfg.study.name().to_string(),
        entries,
        reanalysis,
    };
    prepare_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("study.json");
    export::write_json(&path, &report).map_err(|e| output_error(&path, e))?;
    Ok(Outcome::Study(report))
}

/// Compliance of the design in `report` under the moduli of `cfg`, at the
/// sharpness the design was returned at.
pub fn reanalyze(cfg: &BenchmarkConfig, report: &RunReport) -> Result<f64, RunError> {
    let (problem, _) = cfg.build().map_err(|e| RunError::Problem(e.to_string()))?;
    let model = Model::new(problem).map_err(|e| RunError::Problem(e.to_string()))?;
    let e = model
        .evaluate(&report.design, report.betas, false)
        .map_err(|e| RunError::Problem(format!("design does not fit the reanalysis problem: {e}")))?;
    Ok(e.compliance)
}

/// One optimization with every artifact written to `cfg.output_dir`.
/// A failed solve still writes the convergence log and report before
/// returning [`RunError::Solver`].
pub fn run_single(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let (problem, x0) = cfg.problem.build().map_err(|e| RunError::Problem(e.to_string()))?;
    let model = Model::new(problem).map_err(|e| RunError::Problem(e.to_string()))?;
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let snapshots = dir.join("snapshots");
    if cfg.snapshot_every > 0 && cfg.export.pgm {
        prepare_dir(&snapshots)?;
    }
    let n_stages = model.n_stages();
    let mut write_failure: Option<RunError> = None;
    let outcome = optimize_observed(&model, &x0, &mut |r, x| {
        if r.iteration % 10 == 0 {
            log::info!(
                "{} it {:4} c {:.5e} v {:.4} cont {:.3e} P {:.3e} viol {:+.2e}",
                dir.display(),
                r.iteration,
                r.metrics.compliance,
                r.metrics.volume,
                r.metrics.continuity,
                r.metrics.overhang,
                r.max_violation
            );
        }
        if cfg.snapshot_every > 0 && cfg.export.pgm && r.iteration % cfg.snapshot_every == 0 {
            let fs = model.field_state(x, (r.beta_d, r.beta_t));
            if let Err(e) = export::write_snapshot(&snapshots, r.iteration, &model.problem.domain, &fs) {
                write_failure.get_or_insert(output_error(&snapshots, e));
            }
        }
    });
    if let Some(e) = write_failure {
        return Err(e);
    }
    let tol = model.problem.optimizer.feasibility_tolerance;
    let max_residual = outcome.records.iter().map(|r| r.metrics.residual).fold(0.0, f64::max);
    let eval = outcome.evaluation.as_ref();
    let report = RunReport {
        status: outcome.status.clone(),
        feasible: outcome.feasible,
        initial_compliance: Some(outcome.initial_compliance).filter(|c| c.is_finite()),
        final_compliance: eval.map(|e| e.compliance),
        grayness: eval.map(|e| e.grayness()),
        best_iteration: outcome.best_iteration,
        iterations: outcome.records.len(),
        betas: outcome.betas,
        constraints: eval.map_or(Vec::new(), |e| {
            e.constraints.iter().map(|c| ConstraintReport::new(c, tol)).collect()
        }),
        stage_table: eval.map_or(Vec::new(), |e| stage_report(&outcome.design.theta, e)),
        max_residual,
        history: outcome.records.clone(),
        design: outcome.design.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };

    if cfg.export.csv {
        let path = dir.join("convergence.csv");
        export::write_convergence_csv(&path, &report.history, n_stages).map_err(|e| output_error(&path, e))?;
        let path = dir.join("stage_report.csv");
        export::write_stage_report(&path, &report.stage_table).map_err(|e| output_error(&path, e))?;
    }
    if let Some(e) = eval {
        let fields = CellFields::new(&model.problem.domain, e, &outcome.design.theta);
        if cfg.export.vtk {
            let path = dir.join("fields.vtk");
            export::write_vtk(&path, &fields).map_err(|e| output_error(&path, e))?;
        }
        if cfg.export.pgm {
            let path = dir.join("density.pgm");
            export::write_density_pgm(&path, &fields).map_err(|e| output_error(&path, e))?;
            let path = dir.join("time.pgm");
            export::write_time_pgm(&path, &fields).map_err(|e| output_error(&path, e))?;
        }
    }
    if cfg.export.json {
        let path = dir.join("report.json");
        export::write_json(&path, &report).map_err(|e| output_error(&path, e))?;
    }
    match (&report.status, eval) {
        (NlpStatus::Failed(msg), _) => Err(RunError::Solver(msg.clone())),
        (_, None) => Err(RunError::Solver("the returned design could not be evaluated".into())),
        _ => Ok(report),
    }
}

/// Copy of `cfg` on a mesh `cells` elements high, with the same physical
/// size. Explicit geometry (cutout, loads) is scaled along; row masks can
/// not be, so custom problems are audited at full size.
pub fn shrink(cfg: &BenchmarkConfig, cells: usize) -> BenchmarkConfig {
    if cfg.kind == ProblemKind::Custom {
        return cfg.clone();
    }
    let (nx0, ny0, h0) = match cfg.kind {
        ProblemKind::CantileverCutout => (175, 100, 0.01),
        _ => (100, 100, 0.01),
    };
    let nx0 = cfg.nx.unwrap_or(nx0);
    let ny0 = cfg.ny.unwrap_or(ny0);
    let h0 = cfg.element_size.unwrap_or(h0);
    if ny0 <= cells {
        return cfg.clone();
    }
    let scale = cells as f64 / ny0 as f64;
    let s = |v: usize| ((v as f64 * scale).round() as usize).max(1);
    let mut out = cfg.clone();
    out.nx = Some(s(nx0));
    out.ny = Some(cells);
    out.element_size = Some(h0 / scale);
    out.filter_radius = (cfg.filter_radius * scale).max(1.5);
    out.cutout = cfg.cutout.map(|c| CellRect {
        x: s(c.x),
        y: s(c.y),
        width: s(c.width),
        height: s(c.height),
    });
    out.loads = cfg.loads.as_ref().map(|loads| {
        loads
            .iter()
            .map(|l| LoadSpec {
                node: [s(l.node[0]), s(l.node[1])],
                force: l.force,
            })
            .collect()
    });
    out
}

/// Gradient audit of the shrunken problem at a random interior design and
/// the first sharpness level.
pub fn verify(cfg: &RunConfig) -> Result<AuditReport, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| RunError::Problem(e.to_string()))?;
    pool.install(|| {
        let small = shrink(&cfg.problem, cfg.verify.cells);
        let (problem, _) = small.build().map_err(|e| RunError::Problem(e.to_string()))?;
        let betas = problem.continuation.betas(0);
        let model = Model::new(problem).map_err(|e| RunError::Problem(e.to_string()))?;
        let x = random_interior_design(&model, cfg.verify.seed);
        finite_difference_audit(&model, &x, betas, cfg.verify.samples, cfg.verify.step, cfg.verify.seed)
            .map_err(|e| RunError::Solver(e.to_string()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrink_keeps_lbeam_shape() {
        let cfg = BenchmarkConfig::new(ProblemKind::Lbeam);
        let s = shrink(&cfg, 10);
        assert_eq!((s.nx, s.ny), (Some(10), Some(10)));
        assert!((s.element_size.unwrap() - 0.1).abs() < 1e-15);
        let (p, _) = s.build().unwrap();
        assert_eq!(p.domain.n_design(), 100 - 36);
    }

    #[test]
    fn shrink_scales_explicit_geometry() {
        let mut cfg = BenchmarkConfig::new(ProblemKind::CantileverCutout);
        cfg.loads = Some(vec![LoadSpec {
            node: [175, 50],
            force: [0.0, -1.0],
        }]);
        let s = shrink(&cfg, 20);
        assert_eq!(s.nx, Some(35));
        assert_eq!(s.loads.as_ref().unwrap()[0].node, [35, 10]);
        s.build().unwrap();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::Problem("x".into()).exit_code(), 2);
        assert_eq!(RunError::Solver("x".into()).exit_code(), 3);
    }
}
