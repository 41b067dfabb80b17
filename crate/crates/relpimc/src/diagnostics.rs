//! Phase classification and critical-coupling searches.
//!
//! A chain is classified from the sweep dependence of the path-averaged
//! `<q^2>`: a bound state thermalizes to a sweep-independent plateau, an
//! unbound one diffuses like a random walk (steadily growing `<q^2>`), and
//! a collapsed one sits on the smoothed singularity with `<q^2>` at the
//! regularization scale. The critical coupling separating bound from
//! unbound is then bracketed by bisection in `alpha`, with several
//! independent chains voting at every probe point.
//!
//! The classification is intentionally operational — it asks what a finite
//! Monte Carlo run shows, not what the infinite-time spectrum says — which
//! is also how the underlying dichotomy is defined in practice.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::estimators::ObservableSeries;
use crate::model::{LatticeParams, ModelParams};
use crate::sampler::{run_chain, InitialPath, RunConfig, SamplerError};
use crate::specfun;

/// Slope t-statistic above which `<q^2>` growth counts as significant.
const SLOPE_T_THRESHOLD: f64 = 3.0;
/// Number of `<q^2>` blocks fitted per chain.
const N_BLOCKS: usize = 16;
/// Seed stride between bisection probes (chains within a probe use
/// consecutive seeds).
const PROBE_SEED_STRIDE: u64 = 0x9e37_79b9;

/// Errors from classification and bracketing.
#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("need at least 8 q^2 blocks, got {0}")]
    TooFewBlocks(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(
        "bracket validation failed: alpha_lo {alpha_lo} classified {lo_phase:?} (need Unbound), \
         alpha_hi {alpha_hi} classified {hi_phase:?} (need Bound)"
    )]
    InvalidBracket {
        alpha_lo: f64,
        alpha_hi: f64,
        lo_phase: Phase,
        hi_phase: Phase,
    },
    #[error(
        "probe at alpha = {alpha} stayed inconclusive after doubled reruns; \
         partial bracket [{alpha_lo}, {alpha_hi}]"
    )]
    PersistentlyInconclusive {
        alpha: f64,
        alpha_lo: f64,
        alpha_hi: f64,
    },
    #[error(
        "probe at alpha = {alpha} collapsed onto the regularized singularity; \
         partial bracket [{alpha_lo}, {alpha_hi}] (shrink the time step or the bracket)"
    )]
    CollapsedProbe {
        alpha: f64,
        alpha_lo: f64,
        alpha_hi: f64,
    },
    #[error("probe chain at alpha = {alpha} failed: {source}")]
    ProbeFailed {
        alpha: f64,
        #[source]
        source: SamplerError,
    },
}

/// Verdict on one chain (or one majority vote).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Bound,
    Unbound,
    Collapsed,
    Inconclusive,
}

/// Classification with its fit diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhaseVerdict {
    pub phase: Phase,
    /// Fitted d<q^2>/d(sweep).
    pub q2_slope: f64,
    /// Mean <q^2> over the trailing half of the blocks.
    pub q2_plateau: f64,
    /// Slope divided by its standard error (signed).
    pub slope_significance: f64,
}

/// A bracketed critical coupling.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalPoint {
    pub mass: f64,
    pub a_reg: f64,
    pub alpha_cr: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub n_chains_per_probe: usize,
}

/// One entry of a mass scan; failures are kept, they do not abort thescan.
#[derive(Debug)]
pub struct MassScanPoint {
    pub mass: f64,
    pub result: Result<CriticalPoint, DiagnosticsError>,
}

/// Average the `q2` records into `n_blocks` consecutive blocks of equal
/// size, returning `(mean sweep index, mean q2)` per block. A trailing
/// remainder of records is dropped.
pub fn q2_blocks(series: &ObservableSeries, n_blocks: usize) -> Vec<(f64, f64)> {
    let n = series.records.len();
    let block_len = n / n_blocks;
    if block_len == 0 {
        return Vec::new();
    }
    (0..n_blocks)
        .map(|b| {
            let chunk = &series.records[b * block_len..(b + 1) * block_len];
            let sweep = chunk.iter().map(|r| r.sweep as f64).sum::<f64>() / block_len as f64;
            let q2 = chunk.iter().map(|r| r.q2).sum::<f64>() / block_len as f64;
            (sweep, q2)
        })
        .collect()
}

/// Classify a chain from its `<q^2>` block series.
///
/// Least-squares line through the blocks; `Bound` needs a slope consistent
/// with zero *and* a plateau above `(2 a)^2`, a plateau at or below that
/// scale is `Collapsed`, a significantly positive slope is `Unbound`, and
/// anything else is `Inconclusive`.
pub fn classify_state(
    q2_blocks: &[(f64, f64)],
    model: &ModelParams,
) -> Result<PhaseVerdict, DiagnosticsError> {
    if q2_blocks.len() < 8 {
        return Err(DiagnosticsError::TooFewBlocks(q2_blocks.len()));
    }
    let n = q2_blocks.len() as f64;
    let x_mean = q2_blocks.iter().map(|b| b.0).sum::<f64>() / n;
    let y_mean = q2_blocks.iter().map(|b| b.1).sum::<f64>() / n;
    let sxx: f64 = q2_blocks.iter().map(|b| (b.0 - x_mean) * (b.0 - x_mean)).sum();
    let sxy: f64 = q2_blocks
        .iter()
        .map(|b| (b.0 - x_mean) * (b.1 - y_mean))
        .sum();
    let slope = sxy / sxx;
    let ss_res: f64 = q2_blocks
        .iter()
        .map(|b| {
            let fit = y_mean + slope * (b.0 - x_mean);
            (b.1 - fit) * (b.1 - fit)
        })
        .sum();
    let slope_err = (ss_res / (n - 2.0) / sxx).sqrt();
    let t = if slope_err > 0.0 {
        slope / slope_err
    } else if slope == 0.0 {
        0.0
    } else {
        slope.signum() * f64::INFINITY
    };

    let tail = &q2_blocks[q2_blocks.len() / 2..];
    let plateau = tail.iter().map(|b| b.1).sum::<f64>() / tail.len() as f64;

    let collapse_scale = (2.0 * model.a_reg) * (2.0 * model.a_reg);
    let phase = if plateau <= collapse_scale {
        Phase::Collapsed
    } else if t.abs() < SLOPE_T_THRESHOLD {
        Phase::Bound
    } else if t >= SLOPE_T_THRESHOLD && slope > 0.0 {
        Phase::Unbound
    } else {
        Phase::Inconclusive
    };

    Ok(PhaseVerdict {
        phase,
        q2_slope: slope,
        q2_plateau: plateau,
        slope_significance: t,
    })
}

/// Analytic thermal energy of the free relativistic particle,
/// `<E> = -d ln Z / d beta` with `Z = m K1(beta m) / pi` (and `Z = 1/(pi
/// beta)` at `m = 0`):
///
/// ```text
/// <E> = m K0(beta m) / K1(beta m) + 1/beta      (m > 0)
/// <E> = 1/beta                                  (m = 0)
/// ```
///
/// The lattice kernel is the exact free propagator, so the sampled kinetic
/// estimator must agree with this at *any* time step.
pub fn free_particle_reference(beta: f64, mass: f64) -> Result<f64, DiagnosticsError> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(DiagnosticsError::InvalidInput(format!(
            "beta must be positive and finite, got {beta}"
        )));
    }
    if !mass.is_finite() || mass < 0.0 {
        return Err(DiagnosticsError::InvalidInput(format!(
            "mass must be >= 0, got {mass}"
        )));
    }
    if mass == 0.0 {
        Ok(1.0 / beta)
    } else {
        let ratio = specfun::k0_over_k1(beta * mass)
            .map_err(|e| DiagnosticsError::InvalidInput(e.to_string()))?;
        Ok(mass * ratio + 1.0 / beta)
    }
}

/// Default probe chain for classification runs at a given mass and
/// regularization, sized for the largest coupling the bracket will visit.
///
/// The time step obeys `dt <= a / (2 alpha_hi)` so the site weight
/// `exp(dt alpha / a)` can never beat the kinetic entropy and push the
/// chain into the collapse artifact, with a base cap of 1/8. Thermalization
/// is short (the classifier detects drift, it does not need equilibrium)
/// and the measured span is four times the thermalization length.
pub fn default_probe_config(mass: f64, a_reg: f64, alpha_hi: f64, seed: u64) -> RunConfig {
    let beta = 16.0;
    let dt_cap = (a_reg / (2.0 * alpha_hi)).min(0.125);
    let n_slices = ((beta / dt_cap).ceil() as usize).max(16);
    let dt = beta / n_slices as f64;
    let n_therm = (n_slices as u64).max(256);
    let n_measure = 4 * n_therm;
    let measure_every = (n_measure / 2048).max(1);
    RunConfig {
        model: ModelParams::new(mass, alpha_hi, a_reg).expect("valid probe model"),
        lattice: LatticeParams::new(n_slices, dt).expect("valid probe lattice"),
        seed,
        n_therm_sweeps: n_therm,
        n_measure_sweeps: n_measure,
        measure_every,
        target_acceptance: 0.5,
        initial_path: InitialPath::Cold,
    }
}

/// Run one probe chain and classify it. A run aborted by the sampler's
/// collapse detector counts as `Collapsed`.
fn classify_chain(config: &RunConfig) -> Result<PhaseVerdict, DiagnosticsError> {
    match run_chain(config) {
        Ok(series) => {
            let blocks = q2_blocks(&series, N_BLOCKS);
            classify_state(&blocks, &config.model)
        }
        Err(SamplerError::CollapseSuspected { .. }) => Ok(PhaseVerdict {
            phase: Phase::Collapsed,
            q2_slope: 0.0,
            q2_plateau: 0.0,
            slope_significance: 0.0,
        }),
        Err(err) => Err(DiagnosticsError::ProbeFailed {
            alpha: config.model.alpha,
            source: err,
        }),
    }
}

/// Majority verdict over `n_chains` independent seeds at one coupling.
/// No strict majority counts as `Inconclusive`.
fn probe_phase(
    template: &RunConfig,
    alpha: f64,
    seed_base: u64,
    n_chains: usize,
    sweep_scale: u64,
) -> Result<Phase, DiagnosticsError> {
    let configs: Vec<RunConfig> = (0..n_chains)
        .map(|c| {
            let mut cfg = *template;
            cfg.model.alpha = alpha;
            cfg.seed = seed_base.wrapping_add(c as u64);
            cfg.n_measure_sweeps *= sweep_scale;
            cfg
        })
        .collect();
    let verdicts: Vec<PhaseVerdict> = configs
        .par_iter()
        .map(classify_chain)
        .collect::<Result<_, _>>()?;

    let count = |p: Phase| verdicts.iter().filter(|v| v.phase == p).count();
    for phase in [Phase::Bound, Phase::Unbound, Phase::Collapsed] {
        if 2 * count(phase) > n_chains {
            return Ok(phase);
        }
    }
    Ok(Phase::Inconclusive)
}

/// Probe with the re-run policy: an inconclusive majority is retried with
/// doubled measurement sweeps, at most twice.
fn probe_with_retries(
    template: &RunConfig,
    alpha: f64,
    seed_base: u64,
    n_chains: usize,
) -> Result<Phase, DiagnosticsError> {
    for scale in [1u64, 2, 4] {
        let phase = probe_phase(template, alpha, seed_base, n_chains, scale)?;
        if phase != Phase::Inconclusive {
            return Ok(phase);
        }
    }
    Ok(Phase::Inconclusive)
}

/// Bisect for the critical coupling between a verified-unbound `alpha_lo`
/// and a verified-bound `alpha_hi`.
///
/// Terminates when the bracket width relative to its midpoint drops below
/// `rel_tol`; the reported `alpha_cr` is the final midpoint.
pub fn find_critical_coupling(
    mass: f64,
    a_reg: f64,
    alpha_bracket: (f64, f64),
    rel_tol: f64,
    probe: &RunConfig,
    n_chains_per_probe: usize,
) -> Result<CriticalPoint, DiagnosticsError> {
    let (mut lo, mut hi) = alpha_bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(DiagnosticsError::InvalidInput(format!(
            "need 0 < alpha_lo < alpha_hi, got ({lo}, {hi})"
        )));
    }
    if !(rel_tol > 0.0) {
        return Err(DiagnosticsError::InvalidInput(format!(
            "rel_tol must be positive, got {rel_tol}"
        )));
    }
    if n_chains_per_probe == 0 {
        return Err(DiagnosticsError::InvalidInput(
            "n_chains_per_probe must be >= 1".into(),
        ));
    }

    let mut template = *probe;
    template.model =
        ModelParams::new(mass, probe.model.alpha, a_reg).map_err(|e| {
            DiagnosticsError::InvalidInput(format!("invalid probe model: {e}"))
        })?;

    let mut probe_index: u64 = 0;
    let mut next_seed = || {
        let s = template
            .seed
            .wrapping_add(probe_index.wrapping_mul(PROBE_SEED_STRIDE));
        probe_index += 1;
        s
    };

    let lo_phase = probe_with_retries(&template, lo, next_seed(), n_chains_per_probe)?;
    let hi_phase = probe_with_retries(&template, hi, next_seed(), n_chains_per_probe)?;
    if lo_phase != Phase::Unbound || hi_phase != Phase::Bound {
        return Err(DiagnosticsError::InvalidBracket {
            alpha_lo: lo,
            alpha_hi: hi,
            lo_phase,
            hi_phase,
        });
    }

    loop {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) / mid < rel_tol {
            return Ok(CriticalPoint {
                mass,
                a_reg,
                alpha_cr: mid,
                alpha_lo: lo,
                alpha_hi: hi,
                n_chains_per_probe,
            });
        }
        match probe_with_retries(&template, mid, next_seed(), n_chains_per_probe)? {
            Phase::Bound => hi = mid,
            Phase::Unbound => lo = mid,
            Phase::Collapsed => {
                return Err(DiagnosticsError::CollapsedProbe {
                    alpha: mid,
                    alpha_lo: lo,
                    alpha_hi: hi,
                })
            }
            Phase::Inconclusive => {
                return Err(DiagnosticsError::PersistentlyInconclusive {
                    alpha: mid,
                    alpha_lo: lo,
                    alpha_hi: hi,
                })
            }
        }
    }
}

/// Critical coupling as a function of mass at fixed regularization.
///
/// Starts every mass from the same initial bracket, first adapting it
/// against the two failure modes of a blind bracket (a collapsed upper
/// endpoint is walked down, a bound lower endpoint is walked down), then
/// bisecting. Per-mass failures are recorded, not propagated. The output
/// is sorted by mass.
pub fn scan_mass(
    masses: &[f64],
    a_reg: f64,
    initial_bracket: (f64, f64),
    rel_tol: f64,
    probe_seed: u64,
    n_chains_per_probe: usize,
) -> Result<Vec<MassScanPoint>, DiagnosticsError> {
    if masses.is_empty() {
        return Err(DiagnosticsError::InvalidInput("masses must be non-empty".into()));
    }
    if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(DiagnosticsError::InvalidInput(
            "every mass must be finite and >= 0".into(),
        ));
    }
    let mut sorted: Vec<f64> = masses.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let points: Vec<MassScanPoint> = sorted
        .par_iter()
        .map(|&mass| MassScanPoint {
            mass,
            result: scan_one_mass(
                mass,
                a_reg,
                initial_bracket,
                rel_tol,
                probe_seed,
                n_chains_per_probe,
            ),
        })
        .collect();
    Ok(points)
}

fn scan_one_mass(
    mass: f64,
    a_reg: f64,
    initial_bracket: (f64, f64),
    rel_tol: f64,
    probe_seed: u64,
    n_chains: usize,
) -> Result<CriticalPoint, DiagnosticsError> {
    let (mut lo, mut hi) = initial_bracket;
    // Endpoint adaptation, bounded number of steps each.
    for attempt in 0..6 {
        let template = default_probe_config(mass, a_reg, hi, probe_seed);
        let seed = probe_seed.wrapping_add(1000 + attempt);
        match probe_with_retries(&template, hi, seed, n_chains)? {
            Phase::Bound => break,
            // Too deep: the state (or the lattice artifact) localized below
            // the classification scale; back off toward the transition.
            Phase::Collapsed => hi *= 0.7,
            // Whole bracket sits below the transition; shift it up.
            Phase::Unbound | Phase::Inconclusive => {
                hi *= 1.5;
                lo *= 1.5;
            }
        }
    }
    for attempt in 0..6 {
        let template = default_probe_config(mass, a_reg, hi, probe_seed);
        let seed = probe_seed.wrapping_add(2000 + attempt);
        match probe_with_retries(&template, lo, seed, n_chains)? {
            Phase::Unbound => break,
            _ => lo *= 0.5,
        }
    }
    let template = default_probe_config(mass, a_reg, hi, probe_seed);
    find_critical_coupling(mass, a_reg, (lo, hi), rel_tol, &template, n_chains)
}
