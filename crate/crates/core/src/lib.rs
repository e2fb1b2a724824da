//! Numerical laboratory for a sine-Gordon kink driven by a weak, slowly varying
//! external force `F(ε, x) = ε² f(εx)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod functionals;
pub mod grid;
pub mod harness;
pub mod kink;
pub mod modulation;
pub mod symplectic;
pub mod verify;

pub use error::{DecomposeError, Error, Result};
pub use evolution::{evolve, EvolveConfig, ForcingFamily, ForcingProfile};
pub use grid::{Field, Grid};
pub use kink::{KinkConstants, ParamWindow, SolitonParams};
pub use symplectic::{decompose, DecomposeOptions, Decomposition, State};
pub use harness::{run_experiment, sweep, DiagnosticsRecord, RunConfig, RunResult, SweepResult};
pub use modulation::{ModulationState, Trajectory};
pub use functionals::FunctionalReport;
