//! Quasi-static phase-field fracture by staggered (alternate) minimization
//! on structured P1 triangle meshes.
//!
//! The energy couples a tension/compression-split elastic density, degraded
//! by a phase field `z`, with a gradient-plus-potential dissipation term.
//! The evolution alternates a displacement minimization and a bound
//! constrained phase-field minimization at each time node, under the
//! irreversibility constraint `z_new <= z_old`. The discrete evolution is
//! reparametrized by arc length (H1 for `u`, lumped L2 for `z`) and audited
//! by an energy-dissipation ledger.
//!
//! Crate layout:
//! - [`fem`]: rectangle meshes, P1 strains, H1/L2 inner products
//! - [`model`]: material parameters, degradation/dissipation families,
//!   boundary datum, time grid
//! - [`energy`]: strain splits, energy density and stress, global assembly,
//!   slopes and power
//! - [`solver`]: the two convex subproblems and the two auxiliary flows
//! - [`evolution`]: staggered time stepping and arc-length parametrization
//! - [`diagnostics`]: ledger, stationarity/beta report, norm comparison
//! - [`config`], [`output`], [`run`]: TOML configuration, CSV/VTK/report
//!   writers, orchestration and verification suites

pub mod config;
pub mod diagnostics;
pub mod energy;
pub mod evolution;
pub mod fem;
pub mod linalg;
pub mod model;
pub mod output;
pub mod run;
pub mod solver;
pub mod system;
pub mod verify;

pub use energy::State;
pub use system::System;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("solver did not converge: {what} after {iterations} iterations (last slope {last_slope:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        last_slope: f64,
    },
    #[error("infeasible input: {0}")]
    Infeasible(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("evolution failed at time node {node}: {source}")]
    AtNode {
        node: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
