//! Path integral Monte Carlo for a single relativistic particle in one
//! dimension, bound (or not) by a regularized Coulomb potential
//! `V(q) = -alpha / sqrt(q^2 + a^2)`.
//!
//! The crate is organized around the simulation pipeline:
//!
//! * [`specfun`] — modified Bessel functions `K0`, `K1` that enter the
//!   relativistic free kernel and the kinetic-energy estimator.
//! * [`model`] — physical/lattice parameters, the potential, the per-link
//!   kernel weight and the per-link kinetic estimator.
//! * [`sampler`] — single-site Metropolis over periodic worldlines with
//!   step tuning, thermalization and collapse detection.
//! * [`estimators`] — binned (blocked) statistics and the virial residual.
//! * [`diagnostics`] — bound/unbound/collapsed phase classification,
//!   bisection for the critical coupling, mass scans, and the analytic
//!   free-particle reference.
//! * [`oracle`] — independent grid diagonalization of the non-relativistic
//!   and relativistic Hamiltonians used to cross-check the sampler.
//!
//! Natural units `hbar = c = 1` are used throughout, and the charge is
//! absorbed into the coupling (`e = 1`).

pub mod diagnostics;
pub mod estimators;
pub mod model;
pub mod oracle;
pub mod sampler;
pub mod specfun;

/// Crate version string, echoed into every output metadata block.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
