//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Criteria 1-5 are oracle checks on small inputs. Criteria 6-10 run the
//! reduced 50x50 L-beam end to end; every run is sequential and reused
//! where a criterion allows it. Artifacts are kept under the cargo test
//! scratch directory.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spacetime_topopt::constraints::{overhang, OverhangParams, VolumeMode};
use spacetime_topopt::fea::{element_stiffness, Constitutive, FeLayout, SolveOptions, SolverKind};
use spacetime_topopt::material::{rotated_constitutive, MaterialMode, MaterialModel};
use spacetime_topopt::optimizer::audit::random_interior_design;
use spacetime_topopt::optimizer::{finite_difference_audit, NlpStatus};
use spacetime_topopt::problems::{
    BenchmarkConfig, CellRect, LoadSpec, ProblemKind, SupportDofs, SupportSpec,
};
use spacetime_topopt::sobel::{sobel_gradient, PadRule, Padding};
use spacetime_topopt::{CellKind, Domain, Edge, Grid, Model};
use spacetime_topopt_cli::config::{ExportFlags, RunConfig, Study, VerifySettings};
use spacetime_topopt_cli::run::{self, Outcome, RunReport};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

// ---------------------------------------------------------------- 1

fn audit_problem(mode: MaterialMode, volume_mode: VolumeMode) -> Model {
    let mut cfg = BenchmarkConfig::new(ProblemKind::Custom);
    cfg.nx = Some(8);
    cfg.ny = Some(8);
    cfg.element_size = Some(1.0);
    cfg.stages = 3;
    cfg.material = mode;
    cfg.filter_radius = 2.0;
    cfg.base_edge = Some(Edge::Bottom);
    cfg.cutout = Some(CellRect { x: 5, y: 0, width: 3, height: 4 });
    cfg.supports = Some(vec![SupportSpec { edge: Edge::Bottom, dofs: SupportDofs::Xy }]);
    cfg.loads = Some(vec![LoadSpec { node: [8, 6], force: [0.0, -1.0] }]);
    cfg.constraints.volume_mode = volume_mode;
    let (p, _) = cfg.build().expect("audit problem builds");
    Model::new(p).expect("audit model")
}

fn gradient_audit() -> Verdict {
    let start = Instant::now();
    let mut worst: (f64, String) = (0.0, String::new());
    // every block sampled at 20 coordinates, or all of them when smaller
    let mut short_blocks = Vec::new();
    let cases = [
        (MaterialMode::Isotropic, VolumeMode::Global),
        (MaterialMode::Anisotropic, VolumeMode::Global),
        (MaterialMode::Isotropic, VolumeMode::PerStage),
    ];
    for (seed, (mode, vm)) in cases.into_iter().enumerate() {
        let model = audit_problem(mode, vm);
        let x = random_interior_design(&model, seed as u64 + 1);
        let betas = model.problem.continuation.betas(0);
        let report = match finite_difference_audit(&model, &x, betas, 20, 1e-6, seed as u64) {
            Ok(r) => r,
            Err(e) => return Verdict::new(false, format!("audit failed: {e}")),
        };
        let free = model.problem.domain.free_elements().count();
        for e in &report.entries {
            let size = match e.block.as_str() {
                "psi" => model.n_design(),
                "tau" => free,
                _ => model.n_stages(),
            };
            if e.checked < size.min(20) {
                short_blocks.push(format!("{} {}", e.function, e.block));
            }
            if e.max_relative_error >= worst.0 {
                worst = (e.max_relative_error, format!("{mode:?} {} {}", e.function, e.block));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        worst.0 < 1e-4 && short_blocks.is_empty() && secs < 120.0,
        format!(
            "worst relative error {:.2e} ({}), undersampled blocks {:?}, {:.1} s",
            worst.0, worst.1, short_blocks, secs
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Explicitly padded copy, `(nx + 2) x (ny + 2)`, from the bottom-left
/// padding cell.
fn padded(grid: &Grid, f: &[f64], pad: &Padding) -> Vec<Vec<f64>> {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let mut out = vec![vec![0.0; grid.nx + 2]; grid.ny + 2];
    for py in -1..=ny {
        for px in -1..=nx {
            let (mut x, mut y) = (px, py);
            let mut fixed = None;
            let rule = |r: PadRule, c: &mut isize, edge: isize, fixed: &mut Option<f64>| match r {
                PadRule::Constant(v) => *fixed = Some(v),
                PadRule::Replicate => *c = edge,
            };
            if y < 0 {
                rule(pad.bottom, &mut y, 0, &mut fixed);
            } else if y >= ny {
                rule(pad.top, &mut y, ny - 1, &mut fixed);
            }
            if fixed.is_none() {
                if x < 0 {
                    rule(pad.left, &mut x, 0, &mut fixed);
                } else if x >= nx {
                    rule(pad.right, &mut x, nx - 1, &mut fixed);
                }
            }
            out[(py + 1) as usize][(px + 1) as usize] = fixed.unwrap_or_else(|| f[(x + y * nx) as usize]);
        }
    }
    out
}

fn brute_force_sobel(grid: &Grid, f: &[f64], pad: &Padding) -> Vec<[f64; 2]> {
    const H1: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    const H2: [[f64; 3]; 3] = [[1.0, 2.0, 1.0], [0.0, 0.0, 0.0], [-1.0, -2.0, -1.0]];
    let p = padded(grid, f, pad);
    let mut out = Vec::new();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (mut g1, mut g2) = (0.0, 0.0);
            for r in 0..3 {
                for c in 0..3 {
                    // kernel row 0 is the row above the cell
                    let v = p[iy + 2 - r][ix + c];
                    g1 += H1[r][c] * v;
                    g2 += H2[r][c] * v;
                }
            }
            out.push([g1, g2]);
        }
    }
    out
}

fn sobel_oracle() -> Verdict {
    let grid = Grid::new(9, 7, 1.0).unwrap();
    let rep = Padding::replicate();

    let uniform = vec![0.6; grid.n_cells()];
    let g = sobel_gradient(&grid, &uniform, &rep).unwrap();
    let uniform_ok = g.g.iter().all(|v| v[0] == 0.0 && v[1] == 0.0);

    let delta = 0.125;
    let interior = |c: usize| {
        let (ix, iy) = (c % grid.nx, c / grid.nx);
        ix > 0 && iy > 0 && ix + 1 < grid.nx && iy + 1 < grid.ny
    };
    let ramp_x: Vec<f64> = (0..grid.n_cells()).map(|c| delta * (c % grid.nx) as f64).collect();
    let ramp_y: Vec<f64> = (0..grid.n_cells()).map(|c| delta * (c / grid.nx) as f64).collect();
    let gx = sobel_gradient(&grid, &ramp_x, &rep).unwrap();
    let gy = sobel_gradient(&grid, &ramp_y, &rep).unwrap();
    let ramps_ok = (0..grid.n_cells()).filter(|&c| interior(c)).all(|c| {
        gx.g[c] == [8.0 * delta, 0.0] && gy.g[c] == [0.0, 8.0 * delta]
    });

    let mut mixed = Padding::replicate();
    mixed.left = PadRule::Constant(0.25);
    mixed.top = PadRule::Constant(0.0);
    let pads = [rep, Padding::with_base_plate(Edge::Bottom), Padding::with_base_plate(Edge::Left), mixed];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    let mut mismatches = 0;
    for (nx, ny) in [(1, 1), (2, 5), (7, 4), (13, 9)] {
        let grid = Grid::new(nx, ny, 0.1).unwrap();
        // dyadic values keep every partial sum exact
        let f: Vec<f64> = (0..grid.n_cells()).map(|_| rng.gen_range(0..=1024) as f64 / 1024.0).collect();
        for pad in &pads {
            let fast = sobel_gradient(&grid, &f, pad).unwrap();
            for (a, b) in fast.g.iter().zip(brute_force_sobel(&grid, &f, pad)) {
                compared += 1;
                if a[0].to_bits() != b[0].to_bits() || a[1].to_bits() != b[1].to_bits() {
                    mismatches += 1;
                }
            }
        }
    }
    Verdict::new(
        uniform_ok && ramps_ok && mismatches == 0,
        format!(
            "uniform zero {uniform_ok}, ramps 8*delta {ramps_ok}, {mismatches} of {compared} cells differ from the 3x3 loop"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn plate(n: usize) -> Domain {
    let g = Grid::new(n, n, 1.0).unwrap();
    let base = g.edge_cells(Edge::Bottom);
    Domain::new(g, vec![CellKind::Design; n * n], Edge::Bottom, &base).unwrap()
}

fn overhang_semantics() -> Verdict {
    let d = plate(10);
    let g = d.grid;
    let pad = Padding::with_base_plate(Edge::Bottom);
    let params = OverhangParams::new(45.0, 50.0);
    let void = 1e-3;

    let mut column = vec![void; 100];
    for iy in 0..10 {
        for ix in 3..7 {
            column[g.cell(ix, iy)] = 1.0;
        }
    }
    let col = overhang(&d, &pad, &[vec![0.0; 100], column], &[FRAC_PI_2], &params, false).total;

    let mut s1 = vec![void; 100];
    for ix in 0..3 {
        for iy in 0..10 {
            s1[g.cell(ix, iy)] = 1.0;
        }
    }
    let mut s2 = s1.clone();
    for ix in 3..10 {
        s2[g.cell(ix, 6)] = 1.0;
        s2[g.cell(ix, 7)] = 1.0;
    }
    let slab = overhang(&d, &pad, &[vec![0.0; 100], s1, s2], &[FRAC_PI_2; 2], &params, false).per_stage[1];

    let mut s1 = vec![void; 100];
    for iy in 0..5 {
        for ix in 0..10 {
            s1[g.cell(ix, iy)] = 1.0;
        }
    }
    let mut s2 = s1.clone();
    for iy in 5..8 {
        for ix in 2..8 {
            s2[g.cell(ix, iy)] = 1.0;
        }
    }
    let supported = overhang(&d, &pad, &[vec![0.0; 100], s1, s2], &[FRAC_PI_2; 2], &params, false).per_stage[1];

    Verdict::new(
        col < 1e-6 && slab > 0.1 && supported < 1e-6,
        format!("column P {col:.2e}, floating slab P {slab:.3}, supported deposit P {supported:.2e}"),
    )
}

// ---------------------------------------------------------------- 4

fn spd(d: &[[f64; 3]; 3]) -> bool {
    Matrix3::from_fn(|i, j| d[i][j]).cholesky().is_some()
}

fn max_entry(d: &[[f64; 3]; 3]) -> f64 {
    d.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

fn deviation(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m / max_entry(b)
}

fn constitutive_identities() -> Verdict {
    let iso = MaterialModel::isotropic().base_constitutive().unwrap();
    let ani = MaterialModel::anisotropic().base_constitutive().unwrap();
    let identity = rotated_constitutive(&iso, 0.0) == iso && rotated_constitutive(&ani, 0.0) == ani;
    let sweep: Vec<f64> = (0..100).map(|k| PI * k as f64 / 99.0).collect();
    let iso_dev = sweep
        .iter()
        .map(|&phi| deviation(&rotated_constitutive(&iso, phi), &iso))
        .fold(0.0, f64::max);
    let quarter = deviation(&rotated_constitutive(&ani, FRAC_PI_2), &rotated_constitutive(&ani, 0.0));
    let all_spd = sweep
        .iter()
        .all(|&phi| spd(&rotated_constitutive(&iso, phi)) && spd(&rotated_constitutive(&ani, phi)));
    Verdict::new(
        identity && iso_dev < 1e-3 && quarter < 1e-12 && all_spd,
        format!(
            "D(0) == D0 {identity}, isotropic sweep deviation {iso_dev:.2e}, anisotropic D(pi/2) vs D(0) {quarter:.1e}, SPD {all_spd}"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn patch_test_error() -> f64 {
    let h = 0.3;
    let d = rotated_constitutive(&MaterialModel::anisotropic().base_constitutive().unwrap(), 0.4);
    let ke = element_stiffness(&d, h);
    // node order: (0,0), (h,0), (h,h), (0,h)
    let nodes = [(0.0, 0.0), (h, 0.0), (h, h), (0.0, h)];
    let field = |a: f64, b: f64, c: f64, e: f64, shift: [f64; 2], r: f64| {
        let mut u = [0.0; 8];
        for (k, &(x, y)) in nodes.iter().enumerate() {
            u[2 * k] = a * x + b * y - r * y + shift[0];
            u[2 * k + 1] = c * x + e * y + r * x + shift[1];
        }
        u
    };
    let kmax = ke.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    // rigid motions carry no force
    let rigid = field(0.0, 0.0, 0.0, 0.0, [0.2, -0.1], 0.7);
    for i in 0..8 {
        let f: f64 = (0..8).map(|j| ke[i * 8 + j] * rigid[j]).sum();
        worst = worst.max(f.abs() / kmax);
    }
    // constant strain energy equals area * eps' D eps; a rigid offset on
    // top would only add cancellation to the oracle's own sum
    for (a, b, c, e) in [(1e-3, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 2e-3), (0.0, 1e-3, 1e-3, 0.0), (1e-3, -4e-4, 7e-4, 3e-4)] {
        let u = field(a, b, c, e, [0.0; 2], 0.0);
        let mut energy = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                energy += u[i] * ke[i * 8 + j] * u[j];
            }
        }
        let eps = [a, e, b + c];
        let mut want = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                want += eps[i] * d[i][j] * eps[j];
            }
        }
        want *= h * h;
        worst = worst.max((energy - want).abs() / want);
    }
    worst
}

fn dense_oracle_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let grid = Grid::new(7, 5, 0.2).unwrap();
    let fixed: Vec<usize> = grid
        .edge_nodes(Edge::Left)
        .iter()
        .flat_map(|&nd| [2 * nd, 2 * nd + 1])
        .collect();
    let layout = FeLayout::new(grid, &fixed).unwrap();
    let mut f = vec![0.0; 2 * grid.n_nodes()];
    f[2 * grid.node(7, 2) + 1] = -1.0;
    f[2 * grid.node(7, 5)] = 0.3;
    let scale: Vec<f64> = (0..grid.n_cells()).map(|_| rng.gen_range(0.01f64..1.0).powi(3)).collect();
    let d = rotated_constitutive(&MaterialModel::anisotropic().base_constitutive().unwrap(), 0.7);

    let n = 2 * grid.n_nodes();
    let ke = element_stiffness(&d, grid.element_size);
    let mut k = DMatrix::<f64>::zeros(n, n);
    for cell in 0..grid.n_cells() {
        let dofs = grid.cell_dofs(cell);
        for a in 0..8 {
            for b in 0..8 {
                k[(dofs[a], dofs[b])] += scale[cell] * ke[a * 8 + b];
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|i| !fixed.contains(i)).collect();
    let kr = DMatrix::from_fn(free.len(), free.len(), |i, j| k[(free[i], free[j])]);
    let fr = DVector::from_iterator(free.len(), free.iter().map(|&i| f[i]));
    let want = fr.dot(&kr.cholesky().expect("SPD").solve(&fr));

    let mut worst: f64 = 0.0;
    for kind in [SolverKind::Direct, SolverKind::Cg] {
        let opts = SolveOptions { kind, cg_tolerance: 1e-13, ..SolveOptions::default() };
        let got = layout.solve(&scale, Constitutive::Uniform(&d), &f, &opts).unwrap();
        worst = worst.max(((got.compliance - want) / want).abs());
    }
    worst
}

// ---------------------------------------------------------------- runs

struct Runs {
    root: PathBuf,
    reports: Vec<(String, RunReport)>,
    failures: Vec<String>,
}

impl Runs {
    fn config(&self, label: &str, problem: BenchmarkConfig) -> RunConfig {
        RunConfig {
            problem,
            output_dir: self.root.join(label),
            snapshot_every: 0,
            export: ExportFlags::default(),
            threads: 1,
            study: Study::None,
            verify: VerifySettings::default(),
        }
    }

    /// Runs `problem` once; a solver error still yields the written report.
    fn run(&mut self, label: &str, problem: BenchmarkConfig) -> Option<RunReport> {
        let cfg = self.config(label, problem);
        eprintln!("running {label} ...");
        let report = match run::run(&cfg) {
            Ok(Outcome::Single(r)) => Some(*r),
            Ok(Outcome::Study(_)) => unreachable!("no study configured"),
            Err(e) => {
                self.failures.push(format!("{label}: {e}"));
                RunReport::load(&cfg.output_dir.join("report.json")).ok()
            }
        };
        if let Some(r) = &report {
            eprintln!(
                "  {label}: {:?} after {} iterations, compliance {:?}, {:.0} s",
                r.status, r.iterations, r.final_compliance, r.wall_clock_seconds
            );
            self.reports.push((label.to_string(), r.clone()));
        }
        report
    }
}

fn lbeam(stages: usize) -> BenchmarkConfig {
    let mut cfg = BenchmarkConfig::lbeam(50);
    // radius 5 at 100 cells keeps its physical size at 50
    cfg.filter_radius = 2.5;
    cfg.stages = stages;
    cfg
}

struct Measured {
    converged: bool,
    volume: f64,
    continuity: f64,
    overhang: f64,
    p_bar: f64,
    gamma: f64,
    v0: f64,
    grayness: f64,
    compliance: f64,
    seconds: f64,
    p_tol: f64,
}

fn measure(r: &RunReport) -> Measured {
    let (problem, _) = r.config.problem.build().unwrap();
    let model = Model::new(problem).unwrap();
    let vdom = model.domain_volume();
    let raw = |name: &str| r.constraint(name).map_or(f64::NAN, |c| c.raw);
    let volume = match r.config.problem.constraints.volume_mode {
        VolumeMode::Global => raw("volume"),
        VolumeMode::PerStage => (1..=model.n_stages()).map(|j| raw(&format!("stage_volume_{j}"))).sum(),
    };
    Measured {
        converged: r.status == NlpStatus::Converged && r.iterations <= 501,
        volume: volume / vdom,
        continuity: raw("continuity"),
        overhang: raw("overhang"),
        p_bar: model.problem.p_bar,
        gamma: model.problem.constraints.gamma,
        v0: model.problem.v0,
        grayness: r.grayness.unwrap_or(f64::NAN),
        compliance: r.final_compliance.unwrap_or(f64::NAN),
        seconds: r.wall_clock_seconds,
        p_tol: 1e-6 * model.n_design() as f64 / 6400.0,
    }
}

impl Measured {
    fn overhang_ok(&self) -> bool {
        self.overhang <= self.p_bar + self.p_tol
    }

    fn continuity_ok(&self) -> bool {
        self.continuity <= self.gamma * (1.0 + 1e-6)
    }

    fn end_state_ok(&self) -> bool {
        self.converged
            && self.volume <= self.v0 + 1e-3
            && self.continuity_ok()
            && self.overhang_ok()
            && self.grayness < 0.05
            && self.seconds < 1800.0
    }

    fn describe(&self) -> String {
        format!(
            "converged {}, vol {:.4} (V0 {}), cont {:.2e} (gamma {:.0e}), P {:.2e} (bar {:.2e}), gray {:.3}, c {:.4e}, {:.0} s",
            self.converged,
            self.volume,
            self.v0,
            self.continuity,
            self.gamma,
            self.overhang,
            self.p_bar,
            self.grayness,
            self.compliance,
            self.seconds
        )
    }
}

fn missing(label: &str) -> Verdict {
    Verdict::new(false, format!("{label} produced no report"))
}

fn same_artifacts(a: &Path, b: &Path) -> Result<(), String> {
    for f in ["convergence.csv", "stage_report.csv", "fields.vtk"] {
        let x = fs::read(a.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = fs::read(b.join(f)).map_err(|e| format!("{f}: {e}"))?;
        if x != y {
            return Err(format!("{f} differs"));
        }
    }
    Ok(())
}

fn main() {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = fs::remove_dir_all(&root);
    let mut verdicts: Vec<(usize, &str, Verdict)> = Vec::new();

    eprintln!("oracle checks ...");
    verdicts.push((1, "gradient audit", gradient_audit()));
    verdicts.push((2, "Sobel oracle", sobel_oracle()));
    verdicts.push((3, "overhang semantics", overhang_semantics()));
    verdicts.push((4, "constitutive identities", constitutive_identities()));
    let patch = patch_test_error();
    let dense = dense_oracle_error();

    let mut runs = Runs { root: root.clone(), reports: Vec::new(), failures: Vec::new() };

    let n3 = runs.run("lbeam_n3", lbeam(3));
    let n5 = runs.run("lbeam_n5", lbeam(5));
    let verdict6 = match (&n3, &n5) {
        (Some(a), Some(b)) => {
            let (a, b) = (measure(a), measure(b));
            Verdict::new(
                a.end_state_ok() && b.end_state_ok() && b.compliance <= a.compliance,
                format!("N=3: {}; N=5: {}", a.describe(), b.describe()),
            )
        }
        _ => missing("an L-beam run"),
    };

    let mut aniso = lbeam(5);
    aniso.material = MaterialMode::Anisotropic;
    let aniso_report = runs.run("lbeam_n5_anisotropic", aniso.clone());
    let verdict7 = match (&n5, &aniso_report) {
        (Some(iso), Some(an)) => match run::reanalyze(&aniso, iso) {
            Ok(re) => {
                let m = measure(an);
                let feasible = m.converged && an.feasible;
                let diff = (re - m.compliance).abs() / m.compliance;
                Verdict::new(
                    feasible && diff > 0.01,
                    format!(
                        "anisotropic run converged and feasible {feasible} ({}); isotropic design reanalyzed {re:.4e} vs native {:.4e}, {:.1}% apart",
                        m.describe(),
                        m.compliance,
                        100.0 * diff
                    ),
                )
            }
            Err(e) => Verdict::new(false, format!("reanalysis failed: {e}")),
        },
        _ => missing("the isotropic or anisotropic N=5 run"),
    };

    let mut per_stage = lbeam(3);
    per_stage.constraints.volume_mode = VolumeMode::PerStage;
    let verdict8 = match runs.run("lbeam_n3_stage_volume", per_stage) {
        Some(r) => {
            let m = measure(&r);
            let (problem, _) = r.config.problem.build().unwrap();
            let vdom = Model::new(problem).unwrap().domain_volume();
            let target = m.v0 * vdom / 3.0;
            let worst = (1..=3)
                .map(|j| r.constraint(&format!("stage_volume_{j}")).map_or(f64::INFINITY, |c| (c.raw - target).abs()))
                .fold(0.0, f64::max);
            Verdict::new(
                m.converged && worst <= 1e-3 * vdom && m.overhang_ok(),
                format!(
                    "worst stage deviation {:.2e} of V_domain, overhang P {:.2e} (bar {:.2e}), {}",
                    worst / vdom,
                    m.overhang,
                    m.p_bar,
                    m.describe()
                ),
            )
        }
        None => missing("the stage-volume run"),
    };

    let mut sweep = vec![n5.clone()];
    for g in [1e-7, 1e-6] {
        let mut p = lbeam(5);
        p.constraints.gamma = g;
        sweep.push(runs.run(&format!("lbeam_n5_gamma_{g:e}"), p));
    }
    let verdict9 = if sweep.iter().all(Option::is_some) {
        let ms: Vec<Measured> = sweep.iter().flatten().map(measure).collect();
        // the constraint counts as active within 5% of its bound
        let active = ms.iter().all(|m| m.converged && m.continuity_ok() && m.continuity >= 0.95 * m.gamma);
        // solver noise allowance on the compliance trend
        let monotone = ms.windows(2).all(|w| w[1].compliance <= w[0].compliance * 1.01);
        let detail: Vec<String> = ms
            .iter()
            .map(|m| format!("gamma {:.0e}: cont {:.2e}, c {:.4e}, converged {}", m.gamma, m.continuity, m.compliance, m.converged))
            .collect();
        Verdict::new(active && monotone, detail.join("; "))
    } else {
        missing("a gamma sweep run")
    };

    let mut small = BenchmarkConfig::lbeam(16);
    small.stages = 3;
    small.filter_radius = 1.5;
    small.optimizer.max_iterations = 30;
    let a = runs.run("determinism_a", small.clone());
    let b = runs.run("determinism_b", small);
    let verdict10 = match (a, b) {
        (Some(mut a), Some(mut b)) => {
            a.wall_clock_seconds = 0.0;
            b.wall_clock_seconds = 0.0;
            a.config.output_dir = PathBuf::new();
            b.config.output_dir = PathBuf::new();
            let files = same_artifacts(&root.join("determinism_a"), &root.join("determinism_b"));
            Verdict::new(
                files.is_ok() && a == b,
                format!(
                    "artifacts {}, reports equal apart from timing {}",
                    files.err().unwrap_or_else(|| "identical".into()),
                    a == b
                ),
            )
        }
        _ => missing("a determinism run"),
    };

    let max_residual = runs.reports.iter().map(|(_, r)| r.max_residual).fold(0.0, f64::max);
    verdicts.push((
        5,
        "finite elements",
        Verdict::new(
            patch < 1e-10 && dense < 1e-10 && max_residual < 1e-8 && !runs.reports.is_empty(),
            format!(
                "patch test {patch:.1e}, dense oracle {dense:.1e}, worst residual over {} runs {max_residual:.1e}",
                runs.reports.len()
            ),
        ),
    ));
    verdicts.push((6, "L-beam N=3 and N=5", verdict6));
    verdicts.push((7, "anisotropy trend", verdict7));
    verdicts.push((8, "stage volume mode", verdict8));
    verdicts.push((9, "gamma monotonicity", verdict9));
    verdicts.push((10, "determinism", verdict10));
    verdicts.sort_by_key(|v| v.0);

    for f in &runs.failures {
        eprintln!("run error: {f}");
    }
    let mut failed = 0;
    for (k, name, v) in &verdicts {
        println!("{} {k:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria pass; artifacts in {}", verdicts.len() - failed, verdicts.len(), root.display());
    if failed > 0 {
        std::process::exit(1);
    }
}
