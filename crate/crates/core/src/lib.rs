//! Solvers for the 1D linear transport equation under diffusive scaling.
//!
//! Two independent routes to the same physics:
//!
//! * a physics-informed neural network — a tanh MLP trained with Adam against
//!   the PDE residual, initial-condition and boundary-condition losses, with
//!   gradient-statistics weight balancing ([`trainer`], [`mlp`], [`physics`],
//!   backed by the tape in [`autodiff`]);
//! * an asymptotic-preserving even-odd parity finite-difference scheme with
//!   its diffusion-limit companion solver ([`ap`]), used as the reference.
//!
//! Everything is `f64`: the stiff 1/ε residual term loses too much precision
//! in single precision.

pub mod ap;
pub mod autodiff;
pub mod mlp;
pub mod physics;
pub mod quadrature;
pub mod trainer;

pub use autodiff::{ParameterStore, Tape, TracedValue};
pub use physics::{CollocationGrid, LossWeights, ProblemSpec};
pub use quadrature::VelocityQuadrature;
