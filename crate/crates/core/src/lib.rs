//! Variational Ramsey interferometry with collective spins.

pub mod circuits;
pub mod clock;
pub mod cost;
pub mod decoherence;
pub mod error;
pub mod finite_range;
pub mod io;
pub mod estimation;
pub mod experiment;
pub mod optimizer;
pub mod poi;
pub mod quadrature;
pub mod spin;
pub mod wigner;

pub use circuits::{CircuitParams, Estimator, ProbabilityKernel, Template};
pub use error::{Error, Result};
pub use spin::{Axis, PureState, SpinBasis, SpinOperatorTable};
