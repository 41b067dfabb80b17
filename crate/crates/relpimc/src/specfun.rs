//! Modified Bessel functions of the second kind, orders 0 and 1.
//!
//! These are the only special functions the relativistic kernel needs in
//! one dimension: the free density matrix carries `K1(m s)` per link and
//! the kinetic estimator carries the ratio `K0(m s) / K1(m s)`, with
//! `s = sqrt(tau^2 + (dq)^2)`.
//!
//! Both functions are evaluated through the internally scaled pair
//! `(e^x K0(x), e^x K1(x))`:
//!
//! * `x < 2` — the ascending power series
//!   `K0 = -(ln(x/2) + gamma) I0 + sum_k H_k t^k / (k!)^2`,
//!   `K1 = 1/x + (ln(x/2) + gamma) I1 - (x/4) sum_k (H_k + H_{k+1}) t^k / (k! (k+1)!)`
//!   with `t = x^2/4` and harmonic numbers `H_k`.
//! * `x >= 2` — Steed's continued fraction for the scaled functions
//!   (Thompson–Barnett CF2), which converges to machine precision on the
//!   whole tail and never underflows.
//!
//! All link-weight arithmetic elsewhere in the crate goes through
//! [`log_bessel_k1`], so lattices with large `m * dt` stay in log space.

use thiserror::Error;

/// Errors from the special-function layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecFunError {
    /// Argument outside the domain of K_nu (must be positive and finite).
    #[error("bessel argument must be a positive finite real, got {0}")]
    Domain(f64),
}

/// A Bessel value together with its natural logarithm.
///
/// `K0` and `K1` are strictly positive and strictly decreasing on the
/// positive axis, so the logarithm is always defined. The log form is what
/// the sampler consumes; the plain value underflows past `x ~ 745`.
#[derive(Debug, Clone, Copy)]
pub struct BesselEval {
    pub value: f64,
    pub log_value: f64,
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;
const CF2_MAX_ITER: usize = 10_000;

fn check_arg(x: f64) -> Result<(), SpecFunError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(SpecFunError::Domain(x))
    }
}

/// Scaled pair `(e^x K0(x), e^x K1(x))` for `x > 0`.
///
/// The scaled functions are O(1) over the whole domain, so callers can
/// recover values, logs or ratios without intermediate under/overflow.
pub(crate) fn scaled_k0_k1(x: f64) -> (f64, f64) {
    debug_assert!(x > 0.0 && x.is_finite());
    if x < 2.0 {
        series_k0_k1_scaled(x)
    } else {
        cf2_k0_k1_scaled(x)
    }
}

/// Ascending series for `x < 2`, scaled by `e^x` at the end.
fn series_k0_k1_scaled(x: f64) -> (f64, f64) {
    let t = 0.25 * x * x;
    let log_half_x = (0.5 * x).ln();
    let c = log_half_x + EULER_GAMMA;

    // I0, I1 and the companion sums, accumulated together. Harmonic
    // numbers enter through psi(k+1) = -gamma + H_k.
    let mut i0_term = 1.0;
    let mut i0 = 1.0;
    let mut k0_sum = 0.0; // sum_{k>=1} H_k t^k / (k!)^2
    let mut i1_term = 1.0; // t^k / (k! (k+1)!), k = 0
    let mut i1_sum = 1.0;
    let mut k1_sum = 1.0; // sum_k (H_k + H_{k+1}) t^k / (k! (k+1)!), H_0 + H_1 = 1
    let mut harmonic = 0.0;

    for k in 1..64 {
        let kf = k as f64;
        i0_term *= t / (kf * kf);
        harmonic += 1.0 / kf;
        i0 += i0_term;
        k0_sum += i0_term * harmonic;

        i1_term *= t / (kf * (kf + 1.0));
        i1_sum += i1_term;
        k1_sum += i1_term * (2.0 * harmonic + 1.0 / (kf + 1.0));

        if i0_term < f64::EPSILON * i0 {
            break;
        }
    }

    let i1 = 0.5 * x * i1_sum;
    let k0 = -c * i0 + k0_sum;
    let k1 = 1.0 / x + c * i1 - 0.25 * x * k1_sum;
    let ex = x.exp();
    (k0 * ex, k1 * ex)
}

/// Steed's continued fraction (CF2) for `x >= 2`, order mu = 0.
///
/// Produces the scaled values directly: `e^x K0 = sqrt(pi/2x) / s` with `s`
/// the CF2 series sum, and `e^x K1 = e^x K0 * (x + 1/2 - h) / x`.
fn cf2_k0_k1_scaled(x: f64) -> (f64, f64) {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = delh;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;

    for i in 2..CF2_MAX_ITER {
        a -= 2.0 * (i as f64 - 1.0);
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }

    h = a1 * h;
    let k0e = (FRAC_PI_2 / x).sqrt() / s;
    let k1e = k0e * (x + 0.5 - h) / x;
    (k0e, k1e)
}

/// `K0(x)` for `x > 0`.
pub fn bessel_k0(x: f64) -> Result<f64, SpecFunError> {
    check_arg(x)?;
    let (k0e, _) = scaled_k0_k1(x);
    Ok(k0e * (-x).exp())
}

/// `K1(x)` for `x > 0`.
pub fn bessel_k1(x: f64) -> Result<f64, SpecFunError> {
    check_arg(x)?;
    let (_, k1e) = scaled_k0_k1(x);
    Ok(k1e * (-x).exp())
}

/// `ln K1(x)` without intermediate underflow, usable up to `x ~ 1e6`.
pub fn log_bessel_k1(x: f64) -> Result<f64, SpecFunError> {
    check_arg(x)?;
    Ok(log_bessel_k1_raw(x))
}

pub(crate) fn log_bessel_k1_raw(x: f64) -> f64 {
    let (_, k1e) = scaled_k0_k1(x);
    k1e.ln() - x
}

/// The ratio `K0(x) / K1(x)`, strictly inside `(0, 1)` for all `x > 0`.
pub fn k0_over_k1(x: f64) -> Result<f64, SpecFunError> {
    check_arg(x)?;
    Ok(k0_over_k1_raw(x))
}

pub(crate) fn k0_over_k1_raw(x: f64) -> f64 {
    let (k0e, k1e) = scaled_k0_k1(x);
    k0e / k1e
}

/// `K0(x)` together with its logarithm.
pub fn eval_k0(x: f64) -> Result<BesselEval, SpecFunError> {
    check_arg(x)?;
    let (k0e, _) = scaled_k0_k1(x);
    Ok(BesselEval {
        value: k0e * (-x).exp(),
        log_value: k0e.ln() - x,
    })
}

/// `K1(x)` together with its logarithm.
pub fn eval_k1(x: f64) -> Result<BesselEval, SpecFunError> {
    check_arg(x)?;
    let (k1e, _) = (scaled_k0_k1(x).1, ());
    Ok(BesselEval {
        value: k1e * (-x).exp(),
        log_value: k1e.ln() - x,
    })
}
