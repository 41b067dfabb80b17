//! Physical and lattice parameters, the regularized Coulomb potential, and
//! the per-link ingredients of the relativistic path integral.
//!
//! The free (potential-stripped) density matrix of a relativistic particle
//! over one imaginary-time link of length `tau = dt` in one dimension is
//!
//! ```text
//! rho(dq; dt) = (m dt / (pi s)) K1(m s),     s = sqrt(dt^2 + dq^2),
//! ```
//!
//! a normalized probability density in the hop `dq`. The full weight of a
//! worldline is the product of these link kernels times `exp(-dt V(q_i))`
//! attached to the initial site of each link (left-endpoint rule). The
//! kinetic estimator for `<sqrt(p^2 + m^2)>` is `-d/d(dt) ln rho`:
//!
//! ```text
//! E(dq; dt) = (m dt / s) K0(m s)/K1(m s) + (dt^2 - dq^2) / (dt s^2).
//! ```
//!
//! The massless limit uses `x K1(x) -> 1`: the kernel becomes the Cauchy
//! density `dt / (pi s^2)` and the estimator keeps only its second term,
//! which is exactly `-d/d(dt)` of the Cauchy log-kernel.

use serde::Serialize;
use thiserror::Error;

use crate::specfun;

/// Errors from parameter validation and kernel evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("mass must be finite and >= 0, got {0}")]
    InvalidMass(f64),
    #[error("coupling alpha must be finite and >= 0, got {0}")]
    InvalidCoupling(f64),
    #[error("regularization length a_reg must be finite and > 0, got {0}")]
    InvalidRegularization(f64),
    #[error("number of time slices must be >= 2, got {0}")]
    InvalidSliceCount(usize),
    #[error("time step dt must be finite and > 0, got {0}")]
    InvalidTimeStep(f64),
    #[error("displacement must be finite, got {0}")]
    NonFiniteDisplacement(f64),
}

/// Physical parameters of the model, in natural units (`hbar = c = 1`).
///
/// The charge is absorbed into the coupling (`e = 1`), so the potential
/// strength is `alpha` alone. `mass = 0` is allowed and selects the
/// ultra-relativistic kernel automatically. `a_reg = 0` is rejected: the
/// unregularized potential is outside the sampler's domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub mass: f64,
    pub alpha: f64,
    pub a_reg: f64,
}

impl ModelParams {
    pub fn new(mass: f64, alpha: f64, a_reg: f64) -> Result<Self, ModelError> {
        if !mass.is_finite() || mass < 0.0 {
            return Err(ModelError::InvalidMass(mass));
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(ModelError::InvalidCoupling(alpha));
        }
        if !a_reg.is_finite() || a_reg <= 0.0 {
            return Err(ModelError::InvalidRegularization(a_reg));
        }
        Ok(Self { mass, alpha, a_reg })
    }
}

/// Imaginary-time discretization: `n_slices` sites with step `dt`, so the
/// total Euclidean extent (inverse temperature) is `beta = n_slices * dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeParams {
    n_slices: usize,
    dt: f64,
}

impl LatticeParams {
    pub fn new(n_slices: usize, dt: f64) -> Result<Self, ModelError> {
        if n_slices < 2 {
            return Err(ModelError::InvalidSliceCount(n_slices));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(ModelError::InvalidTimeStep(dt));
        }
        Ok(Self { n_slices, dt })
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn beta(&self) -> f64 {
        self.n_slices as f64 * self.dt
    }
}

/// Regularized Coulomb potential `V(q) = -alpha / sqrt(q^2 + a^2)`.
///
/// Always finite and non-positive, with minimum `-alpha / a` at the origin.
pub fn potential(q: f64, p: &ModelParams) -> f64 {
    -p.alpha / q.hypot(p.a_reg)
}

/// Regularization correction to the virial theorem,
/// `D(q) = a^2 alpha / (q^2 + a^2)^{3/2} >= 0`.
///
/// Satisfies the pointwise identity `q V'(q) + V(q) + D(q) = 0`, which turns
/// the virial relation `2<K> = <q dV/dq>` into `2<K> = -<V + D>`.
pub fn virial_correction(q: f64, p: &ModelParams) -> f64 {
    let s = q.hypot(p.a_reg);
    p.a_reg * p.a_reg * p.alpha / (s * s * s)
}

/// Log of the free link kernel `ln rho(dq; dt)`.
///
/// The site potential factor `exp(-dt V)` is *not* included here; the
/// sampler adds it as a separate site term, matching the kernel/potential
/// factorization of the density matrix.
pub fn log_link_weight(dq: f64, p: &ModelParams, dt: f64) -> Result<f64, ModelError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(ModelError::InvalidTimeStep(dt));
    }
    if !dq.is_finite() {
        return Err(ModelError::NonFiniteDisplacement(dq));
    }
    Ok(log_link_weight_raw(dq, p.mass, dt))
}

pub(crate) fn log_link_weight_raw(dq: f64, mass: f64, dt: f64) -> f64 {
    let s = dt.hypot(dq);
    if !s.is_finite() {
        // Overflowed hop: the kernel vanishes in this limit.
        return f64::NEG_INFINITY;
    }
    if mass == 0.0 {
        // Cauchy kernel: lim_{m->0} (m dt / (pi s)) K1(m s) = dt / (pi s^2).
        (dt / (std::f64::consts::PI * s * s)).ln()
    } else {
        (mass * dt / (std::f64::consts::PI * s)).ln() + specfun::log_bessel_k1_raw(mass * s)
    }
}

/// Per-link estimator of `<sqrt(p^2 + m^2)>`, i.e. `-d/d(dt) ln rho`.
pub fn link_kinetic_estimator(dq: f64, p: &ModelParams, dt: f64) -> Result<f64, ModelError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(ModelError::InvalidTimeStep(dt));
    }
    if !dq.is_finite() {
        return Err(ModelError::NonFiniteDisplacement(dq));
    }
    Ok(link_kinetic_estimator_raw(dq, p.mass, dt))
}

pub(crate) fn link_kinetic_estimator_raw(dq: f64, mass: f64, dt: f64) -> f64 {
    let s = dt.hypot(dq);
    let prefactor_term = (dt - dq) * (dt + dq) / (dt * s * s);
    if mass == 0.0 {
        prefactor_term
    } else {
        (mass * dt / s) * specfun::k0_over_k1_raw(mass * s) + prefactor_term
    }
}
