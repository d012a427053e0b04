use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spacetime_topopt::material::MaterialMode;
use spacetime_topopt_cli::config::{ConfigError, RunConfig, Study};
use spacetime_topopt_cli::run::{self, Outcome, RunError};

/// Space-time topology optimization for multi-axis additive manufacturing.
#[derive(Debug, Parser)]
#[command(name = "stopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize the configured problem (or study) and write its artifacts.
    Run(Invocation),
    /// Check analytic gradients against finite differences on a shrunken mesh.
    Verify(Invocation),
}

#[derive(Debug, Args)]
struct Invocation {
    /// TOML run configuration.
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Number of build stages N.
    #[arg(long)]
    stages: Option<usize>,
    /// Use orientation-dependent moduli.
    #[arg(long)]
    anisotropic: bool,
    /// none, gamma_sweep, stage_sweep or reanalysis.
    #[arg(long)]
    study: Option<String>,
}

impl Invocation {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::load(&self.config)?;
        let invalid = |message: String| ConfigError {
            path: self.config.clone(),
            line: None,
            column: None,
            message,
        };
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(n) = self.max_iters {
            cfg.problem.optimizer.max_iterations = n;
        }
        if let Some(n) = self.stages {
            cfg.problem.stages = n;
        }
        if self.anisotropic {
            cfg.problem.material = MaterialMode::Anisotropic;
        }
        if let Some(name) = &self.study {
            cfg.study = Study::from_name(name).ok_or_else(|| invalid(format!("unknown study `{name}`")))?;
        }
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(inv) => {
            let cfg = match inv.load() {
                Ok(c) => c,
                Err(e) => return fail(&RunError::Config(e)),
            };
            match run::run(&cfg) {
                Ok(Outcome::Single(r)) => {
                    println!(
                        "{:?}: compliance {:.6e}, feasible {}, {} iterations, written to {}",
                        r.status,
                        r.final_compliance.unwrap_or(f64::NAN),
                        r.feasible,
                        r.iterations,
                        cfg.output_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Ok(Outcome::Study(s)) => {
                    for e in &s.entries {
                        println!(
                            "{}: {:?}, compliance {:.6e}, continuity {:.3e}, feasible {}",
                            e.label,
                            e.status,
                            e.final_compliance.unwrap_or(f64::NAN),
                            e.continuity.unwrap_or(f64::NAN),
                            e.feasible
                        );
                    }
                    if let Some(r) = &s.reanalysis {
                        println!(
                            "reanalysis: isotropic design {:.6e} under anisotropic moduli vs anisotropic optimum {:.6e} ({:.2}% apart)",
                            r.reanalyzed_compliance,
                            r.anisotropic_compliance,
                            100.0 * r.relative_difference
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Verify(inv) => {
            let cfg = match inv.load() {
                Ok(c) => c,
                Err(e) => return fail(&RunError::Config(e)),
            };
            match run::verify(&cfg) {
                Ok(report) => {
                    let mut ok = true;
                    for e in &report.entries {
                        let pass = e.max_relative_error < cfg.verify.tolerance;
                        ok &= pass;
                        println!(
                            "{:<16} {:<6} checked {:>3}  worst relative error {:.3e}  {}",
                            e.function,
                            e.block,
                            e.checked,
                            e.max_relative_error,
                            if pass { "ok" } else { "FAIL" }
                        );
                    }
                    if ok {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}
