//! Generalized Sierpinski carpets, their approximation graphs, discrete
//! p-energies and Korevaar-Schoen type functionals.

pub mod carpet;
pub mod error;
pub mod functionals;
pub mod graph;
pub mod penergy;
pub mod verify;
pub mod reduce;
pub mod rng;

pub use carpet::CarpetSpec;
pub use error::{Error, Result};

/// Crate version embedded in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
