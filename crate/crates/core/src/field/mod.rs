//! Periodic grid fields, cloud-in-cell deposition, and spectral Poisson
//! solves for the quasineutral, fixed-ion and limit models.

mod deposit;
mod grid;
mod spectral;

pub use deposit::{deposit_charge, deposit_positions, eval_field, interpolate};
pub use grid::{GridSpec, ScalarField, VectorField};
pub use spectral::{mode_number, FieldSolver, PoissonModel, SOLVABILITY_TOLERANCE};
