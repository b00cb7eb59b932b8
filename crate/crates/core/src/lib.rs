//! Particle-in-cell simulation of the finite-Larmor-radius scaled Vlasov
//! system, its filtered formulation, and the gyrokinetic limit model.

pub mod config;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod external;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod limit;
pub mod sampling;
pub mod scaled;

pub use error::{FlrError, Result};
