//! Run configuration files.
//!
//! A config is TOML with the problem under `[problem]` and run options at
//! the top level:
//!
//! ```toml
//! output_dir = "out/lbeam"
//! snapshot_every = 25
//! threads = 4
//!
//! [export]
//! vtk = true
//! pgm = true
//!
//! [study]
//! kind = "gamma_sweep"
//! gammas = [1e-8, 1e-7, 1e-6]
//!
//! [problem]
//! kind = "lbeam"
//! stages = 5
//! ```
//!
//! Every problem key has the reference default, so `[problem]` with only
//! `kind` reproduces the reference setup.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spacetime_topopt::BenchmarkConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: BenchmarkConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Write density/time snapshots every this many iterations; 0 disables.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub export: ExportFlags,
    /// Worker threads for element loops; 0 lets the runtime decide.
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub study: Study,
    #[serde(default)]
    pub verify: VerifySettings,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportFlags {
    pub vtk: bool,
    pub pgm: bool,
    pub csv: bool,
    pub json: bool,
}

impl Default for ExportFlags {
    fn default() -> Self {
        Self {
            vtk: true,
            pgm: true,
            csv: true,
            json: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Study {
    #[default]
    None,
    GammaSweep {
        #[serde(default = "default_gammas")]
        gammas: Vec<f64>,
    },
    StageSweep {
        #[serde(default = "default_stage_counts")]
        stages: Vec<usize>,
    },
    /// Re-evaluates an isotropic design with orientation-dependent moduli
    /// and compares it with a native anisotropic run. Without `design` the
    /// isotropic design is optimized first.
    Reanalysis {
        #[serde(default)]
        design: Option<PathBuf>,
    },
}

pub fn default_gammas() -> Vec<f64> {
    vec![1e-8, 1e-7, 1e-6]
}

pub fn default_stage_counts() -> Vec<usize> {
    vec![3, 5]
}

impl Study {
    /// Study selected by name on the command line, with default lists.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "none" => Some(Study::None),
            "gamma_sweep" => Some(Study::GammaSweep {
                gammas: default_gammas(),
            }),
            "stage_sweep" => Some(Study::StageSweep {
                stages: default_stage_counts(),
            }),
            "reanalysis" => Some(Study::Reanalysis { design: None }),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Study::None => "none",
            Study::GammaSweep { .. } => "gamma_sweep",
            Study::StageSweep { .. } => "stage_sweep",
            Study::Reanalysis { .. } => "reanalysis",
        }
    }
}

/// Shrunken-mesh gradient audit settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    /// Elements along the short side of the shrunken mesh.
    pub cells: usize,
    pub samples: usize,
    pub step: f64,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            cells: 8,
            samples: 20,
            step: 1e-6,
            seed: 0,
            tolerance: 1e-3,
        }
    }
}

/// Config problem with a location, shown as `path:line:column: message`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, ":{l}:{c}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            ConfigError {
                path: path.to_path_buf(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.validate().map_err(|message| ConfigError {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<(), String> {
        let study: Result<(), String> = match &self.study {
            Study::GammaSweep { gammas } if gammas.is_empty() => {
                Err("study.gammas must not be empty".into())
            }
            Study::GammaSweep { gammas } if gammas.iter().any(|g| !(*g > 0.0)) => {
                Err("study.gammas must be positive".into())
            }
            Study::StageSweep { stages } if stages.is_empty() => {
                Err("study.stages must not be empty".into())
            }
            Study::StageSweep { stages } if stages.contains(&0) => {
                Err("study.stages must be at least 1".into())
            }
            _ => Ok(()),
        };
        study?;
        if self.verify.samples == 0 || !(self.verify.step > 0.0) || self.verify.cells < 2 {
            return Err("verify needs samples >= 1, step > 0 and cells >= 2".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
