//! Manufacturing and resource constraints.
//!
//! Each function returns its raw value together with partial derivatives
//! with respect to the physical fields it reads (densities, stage densities,
//! filtered times, orientations). [`crate::model`] chains those partials back
//! to the design variables.

pub mod continuity;
pub mod overhang;
pub mod volume;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use continuity::ContinuityOperator;
pub use overhang::{overhang, OverhangParams, OverhangResult};
pub use volume::{stage_volumes, total_volume};

/// Adjacency used by the continuity constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// Edge-adjacent neighbours.
    #[default]
    Four,
    /// Edge- and corner-adjacent neighbours.
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMode {
    /// One bound on the total material volume.
    #[default]
    Global,
    /// Equal material deposition in every stage; replaces the global bound.
    PerStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintParams {
    /// Continuity bound.
    pub gamma: f64,
    /// Overhang bound; `None` means `1e-3 * n_design / 6400`.
    pub p_bar: Option<f64>,
    /// Overhang threshold angle in degrees.
    pub alpha_bar_deg: f64,
    /// Slope of the overhang Heaviside.
    pub beta_h: f64,
    pub neighborhood: Neighborhood,
    pub volume_mode: VolumeMode,
    /// Set to false to drop the overhang constraint.
    pub overhang: bool,
    /// Set to false to drop the continuity constraint.
    pub continuity: bool,
}

impl Default for ConstraintParams {
    fn default() -> Self {
        Self {
            gamma: 1e-8,
            p_bar: None,
            alpha_bar_deg: 45.0,
            beta_h: 50.0,
            neighborhood: Neighborhood::Four,
            volume_mode: VolumeMode::Global,
            overhang: true,
            continuity: true,
        }
    }
}

impl ConstraintParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::config("gamma must be positive"));
        }
        if let Some(p) = self.p_bar {
            if !(p > 0.0) {
                return Err(Error::config("p_bar must be positive"));
            }
        }
        if !(self.alpha_bar_deg > 0.0 && self.alpha_bar_deg < 90.0) {
            return Err(Error::config("alpha_bar_deg must lie in (0, 90)"));
        }
        if !(self.beta_h > 0.0) {
            return Err(Error::config("beta_h must be positive"));
        }
        Ok(())
    }

    pub fn resolved_p_bar(&self, n_design: usize) -> f64 {
        self.p_bar
            .unwrap_or(1e-3 * n_design as f64 / 6400.0)
    }
}
