//! Adiabatic spatial search on reversible Markov chains.
//!
//! Given a row-stochastic chain `P` with a set of marked vertices, the
//! crate builds the interpolation `P(s) = (1-s) P + s P'` toward the
//! absorbing walk, its symmetric discriminant `D(s)`, and the edge-space
//! Hamiltonian `H(s) = i [V^T S V, Pi_0]`, then drives the stationary
//! edge state to a superposition over marked vertices with the closed-form
//! schedule that rotates at constant angular velocity. Hitting times are
//! computed three independent ways (linear solve, series, Monte Carlo) and
//! every structural identity the construction relies on can be checked
//! numerically through [`suite::run_suite`].
//!
//! Layout:
//! - [`chain`]: chain validation, stationary distributions, interpolation,
//!   generators, and the JSON file schema.
//! - [`discriminant`]: `D(s)`, its eigensystem, and the rotation frame.
//! - [`hitting`]: classical/extended hitting times and the resolvent.
//! - [`hamiltonian`]: edge-space operators and their spectrum.
//! - [`adiabatic`]: schedule, running time, evolution, measurement.
//! - [`suite`]: the invariant battery.
//!
//! Matrices are dense; analysis tops out around n = 256 vertices and the
//! edge-space evolution at n = 32 (the edge space is n^2-dimensional).

pub mod adiabatic;
pub mod chain;
pub mod discriminant;
pub mod error;
pub mod hamiltonian;
pub mod hitting;
pub mod linalg;
pub mod suite;

pub use adiabatic::{evolve, measure, running_time, schedule, EvolutionTrace, Schedule};
pub use chain::{
    absorbing, generate, interpolate, make_lazy, stationary_distribution, Family,
    InterpolatedChain, StochasticChain,
};
pub use discriminant::{
    discriminant, eigendecompose, rotation_frame, theta, Discriminant, RotationFrame,
    SpectralDecomposition,
};
pub use error::{Error, Result};
pub use hamiltonian::{analytic_spectrum, build_h, build_v, EdgeOperators};
pub use hitting::{
    classical_hitting_time, extended_hitting_time, monte_carlo_hitting_time, HittingReport,
};
pub use suite::{run_suite, SuiteReport};
