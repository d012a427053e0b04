//! Space-time topology optimization for multi-axis additive manufacturing.
//!
//! The design is described by three blocks of unknowns: a raw density per
//! element, a raw pseudo-time per element that encodes the fabrication
//! sequence, and one build orientation per fabrication stage. From these the
//! crate derives the stage-wise intermediate structures, evaluates end
//! compliance of the final structure by plane-stress finite elements
//! (optionally with orientation-dependent orthotropic stiffness), and
//! evaluates volume, time-continuity and stage-wise overhang constraints,
//! all with analytic gradients. A Method of Moving Asymptotes driver ties
//! everything together.
//!
//! Module map:
//!
//! - [`grid`]: structured quad grid, cell kinds, edges.
//! - [`fields`]: design vector, linear-decay filter, Heaviside projections,
//!   truncated times and stage densities.
//! - [`sobel`]: Sobel density gradients with configurable border padding.
//! - [`material`]: plane-stress orthotropic constitutive law, rotation by the
//!   material orientation field.
//! - [`fea`]: Q4 elements, banded Cholesky / PCG solve, compliance.
//! - [`constraints`]: volume, stage volume, continuity and overhang functions.
//! - [`model`]: the assembled forward pipeline and its chain-rule totals.
//! - [`optimizer`]: MMA, convergence logic and the finite-difference audit.
//! - [`problems`]: benchmark construction and stage reports.

pub mod constraints;
pub mod error;
pub mod fea;
pub mod fields;
pub mod grid;
pub mod material;
pub mod model;
pub mod optimizer;
pub mod problems;
pub mod sobel;

pub use error::{Error, Result};
pub use fields::{DesignVector, FieldState, ProjectionParams};
pub use grid::{CellKind, Domain, Edge, Grid};
pub use material::{MaterialMode, MaterialModel};
pub use model::{DesignGradient, Evaluation, Model};
pub use problems::{BenchmarkConfig, Problem};
