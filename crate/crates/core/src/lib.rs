//! Spectral solvers for periodic tracking control of the 1-D heat
//! equation, with impulse and sample-hold approximations and the
//! verification studies that measure how fast those approximations
//! converge.
//!
//! The state is expanded in the Dirichlet eigenbasis of the interval, so
//! the dynamics diagonalize and every time step is an exact
//! variation-of-constants update per mode. Controls act through a spatial
//! window; the periodic-in-time optimality systems of the three control
//! classes (distributed in time, impulsive, sample-hold) are reduced to
//! self-adjoint positive definite systems and solved by conjugate
//! gradients. Small instances are cross-checked against densely assembled
//! systems, and refinement studies fit the observed convergence orders.
//!
//! Everything is generic over the scalar through [`Real`]; the aliases at
//! the crate root fix `f64`, which is what the binary and the acceptance
//! studies use.

pub mod analysis;
pub mod cg;
pub mod error;
pub mod heat;
pub mod impulse;
pub mod ocp;
pub mod oracle;
pub mod quadrature;
pub mod real;
pub mod report;
pub mod rng;
pub mod sampled;
pub mod spectral;

pub use error::{Error, Result};
pub use real::Real;

/// Spatial setup at the default precision.
pub type Domain = spectral::Domain1D<f64>;
/// Modal coefficient vector at the default precision.
pub type Field = spectral::SpectralField<f64>;
/// Uniform time grid at the default precision.
pub type Grid = heat::TimeGrid<f64>;
/// Nodal state trajectory at the default precision.
pub type State = heat::Trajectory<f64>;
/// Cellwise source trajectory at the default precision.
pub type Source = heat::SourceTrajectory<f64>;
/// Impulse train at the default precision.
pub type Impulses = heat::ImpulseSequence<f64>;
/// Piecewise state with jumps at the default precision.
pub type BrokenState = heat::BrokenTrajectory<f64>;
/// Distributed problem configuration at the default precision.
pub type Config = ocp::OcpConfig<f64>;
/// Distributed solve outcome at the default precision.
pub type Solution = ocp::OcpSolution<f64>;
/// Impulse solve outcome at the default precision.
pub type ImpulseOutcome = impulse::ImpulseSolution<f64>;
/// Sample-hold solve outcome at the default precision.
pub type SampledOutcome = sampled::SampledSolution<f64>;
/// Refinement study outcome at the default precision.
pub type StudyReport = analysis::ConvergenceReport<f64>;
