//! Single-site Metropolis sampling of periodic worldlines.
//!
//! The Markov chain state is the whole discretized trajectory
//! `q_0 .. q_{N_t - 1}` with periodic wraparound (a thermal trace). One
//! sweep visits every site once in order and proposes
//! `q -> q + uniform(-delta, +delta)`; the acceptance ratio needs only the
//! two links touching the site plus its potential term, all in log space.
//!
//! The proposal half-width is tuned toward a target acceptance rate during
//! thermalization only, so the measured chain is a true Markov chain.
//! Runs abort with a collapse-suspected error when the measured window
//! localizes onto the potential minimum (the lattice artifact where
//! trajectories fall onto the smoothed singularity), and with a
//! frozen-chain error when acceptance stays below 1% for a long stretch.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::estimators::{ObservableSeries, Record, RunMetadata};
use crate::model::{
    link_kinetic_estimator_raw, log_link_weight_raw, potential, virial_correction, LatticeParams,
    ModelParams,
};

/// Name of the pseudo-random generator, recorded in output metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8";

/// Sweeps between step-size adjustments during thermalization.
const TUNE_WINDOW: u64 = 20;
/// Records forming the sliding window of the collapse detector.
const COLLAPSE_WINDOW: usize = 100;
/// Consecutive low-acceptance sweeps before a chain counts as frozen.
const FROZEN_SWEEPS: u64 = 100;
const FROZEN_ACCEPTANCE: f64 = 0.01;

/// What tripped the collapse detector.
#[derive(Debug, Clone, PartialEq)]
pub enum CollapseDetail {
    /// A proposed move produced a non-finite log-weight change.
    NonFiniteDelta { site: usize, q: f64 },
    /// The measured window localized at the potential minimum:
    /// `<q^2> < (2a)^2` together with `<V> < -0.9 alpha / a`.
    LocalizedWindow { q2_mean: f64, v_mean: f64 },
}

impl std::fmt::Display for CollapseDetail {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CollapseDetail::NonFiniteDelta { site, q } => {
                write!(f, "non-finite action delta at site {site}, proposed q = {q}")
            }
            CollapseDetail::LocalizedWindow { q2_mean, v_mean } => write!(
                f,
                "trajectory localized on the attractive center: <q^2> = {q2_mean:.3e}, <V> = {v_mean:.6}"
            ),
        }
    }
}

/// Errors from chain construction and running.
#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    /// The trajectory is (or is about to be) stuck on the smoothed
    /// singularity; the time step is too coarse for this regularization.
    #[error("collapse suspected at sweep {sweep}: {detail}")]
    CollapseSuspected {
        sweep: u64,
        detail: CollapseDetail,
        partial: Option<Box<ObservableSeries>>,
    },
    #[error("chain frozen at sweep {sweep}: acceptance below {FROZEN_ACCEPTANCE} for {FROZEN_SWEEPS} sweeps")]
    FrozenChain {
        sweep: u64,
        partial: Option<Box<ObservableSeries>>,
    },
}

impl SamplerError {
    /// Partial measurement series salvaged from an aborted run, if any.
    pub fn partial_series(&self) -> Option<&ObservableSeries> {
        match self {
            SamplerError::CollapseSuspected { partial, .. }
            | SamplerError::FrozenChain { partial, .. } => partial.as_deref(),
            SamplerError::InvalidConfig(_) => None,
        }
    }
}

/// A periodic worldline: `n_slices` positions with `q[n] = q[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    positions: Vec<f64>,
}

impl Path {
    /// All-zero (cold) path.
    pub fn cold(n_slices: usize) -> Self {
        Path {
            positions: vec![0.0; n_slices],
        }
    }

    pub fn from_positions(positions: Vec<f64>) -> Result<Self, SamplerError> {
        if positions.len() < 2 {
            return Err(SamplerError::InvalidConfig(
                "a path needs at least 2 slices".into(),
            ));
        }
        if !positions.iter().all(|q| q.is_finite()) {
            return Err(SamplerError::InvalidConfig(
                "path positions must be finite".into(),
            ));
        }
        Ok(Path { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    fn neighbor_indices(&self, site: usize) -> (usize, usize) {
        let n = self.positions.len();
        ((site + n - 1) % n, (site + 1) % n)
    }

    /// Mean of `q_i^2` over the path.
    pub fn mean_q2(&self) -> f64 {
        self.positions.iter().map(|q| q * q).sum::<f64>() / self.positions.len() as f64
    }
}

/// Change of the total log-weight when `q[site]` is replaced by `new_q`.
///
/// Only the two adjacent links and the site's potential term contribute:
/// `dlog = logw(q_next - new) + logw(new - q_prev) - (old link terms)
///        - dt (V(new) - V(old))`.
pub fn local_action_delta(
    path: &Path,
    site: usize,
    new_q: f64,
    model: &ModelParams,
    dt: f64,
) -> f64 {
    let (prev, next) = path.neighbor_indices(site);
    let q_prev = path.positions[prev];
    let q_next = path.positions[next];
    let q_old = path.positions[site];
    // Grouped as per-link differences so a no-op move is exactly zero.
    (log_link_weight_raw(q_next - new_q, model.mass, dt)
        - log_link_weight_raw(q_next - q_old, model.mass, dt))
        + (log_link_weight_raw(new_q - q_prev, model.mass, dt)
            - log_link_weight_raw(q_old - q_prev, model.mass, dt))
        - dt * (potential(new_q, model) - potential(q_old, model))
}

/// Initial path distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialPath {
    /// All sites at the origin.
    Cold,
    /// Sites independently uniform in `[-half_width, half_width]`.
    Hot { half_width: f64 },
}

/// Everything needed to reproduce one chain exactly.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunConfig {
    pub model: ModelParams,
    pub lattice: LatticeParams,
    pub seed: u64,
    pub n_therm_sweeps: u64,
    pub n_measure_sweeps: u64,
    pub measure_every: u64,
    pub target_acceptance: f64,
    pub initial_path: InitialPath,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.measure_every == 0 {
            return Err(SamplerError::InvalidConfig("measure_every must be >= 1".into()));
        }
        if self.n_measure_sweeps < self.measure_every {
            return Err(SamplerError::InvalidConfig(format!(
                "n_measure_sweeps ({}) must be >= measure_every ({})",
                self.n_measure_sweeps, self.measure_every
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(SamplerError::InvalidConfig(format!(
                "target_acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        if let InitialPath::Hot { half_width } = self.initial_path {
            if !half_width.is_finite() || half_width <= 0.0 {
                return Err(SamplerError::InvalidConfig(format!(
                    "hot start half_width must be > 0, got {half_width}"
                )));
            }
        }
        Ok(())
    }
}

/// The Markov chain: path, generator, step size and counters.
#[derive(Debug, Clone)]
pub struct ChainState {
    path: Path,
    rng: ChaCha8Rng,
    step_delta: f64,
    accept_count: u64,
    propose_count: u64,
    sweep_index: u64,
    window_accepts: u64,
    window_proposals: u64,
    // Cached per-link log-weights (link i spans sites i -> i+1) and site
    // potentials; updated incrementally on accepted moves.
    link_logw: Vec<f64>,
    site_pot: Vec<f64>,
    mass: f64,
    dt: f64,
    model: ModelParams,
}

impl ChainState {
    pub fn new(config: &RunConfig) -> Result<Self, SamplerError> {
        config.validate()?;
        let n = config.lattice.n_slices();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let path = match config.initial_path {
            InitialPath::Cold => Path::cold(n),
            InitialPath::Hot { half_width } => {
                let positions = (0..n)
                    .map(|_| half_width * (2.0 * rng.random::<f64>() - 1.0))
                    .collect();
                Path { positions }
            }
        };
        let step_delta = initial_step(&config.model, config.lattice.dt());
        Ok(Self::from_parts(path, rng, step_delta, config))
    }

    fn from_parts(path: Path, rng: ChaCha8Rng, step_delta: f64, config: &RunConfig) -> Self {
        let dt = config.lattice.dt();
        let model = config.model;
        let n = path.len();
        let link_logw = (0..n)
            .map(|i| {
                let j = (i + 1) % n;
                log_link_weight_raw(path.positions[j] - path.positions[i], model.mass, dt)
            })
            .collect();
        let site_pot = path.positions.iter().map(|&q| potential(q, &model)).collect();
        ChainState {
            path,
            rng,
            step_delta,
            accept_count: 0,
            propose_count: 0,
            sweep_index: 0,
            window_accepts: 0,
            window_proposals: 0,
            link_logw,
            site_pot,
            mass: model.mass,
            dt,
            model,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn step_delta(&self) -> f64 {
        self.step_delta
    }

    pub fn sweep_index(&self) -> u64 {
        self.sweep_index
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.propose_count == 0 {
            0.0
        } else {
            self.accept_count as f64 / self.propose_count as f64
        }
    }

    fn window_acceptance(&self) -> f64 {
        if self.window_proposals == 0 {
            0.0
        } else {
            self.window_accepts as f64 / self.window_proposals as f64
        }
    }

    fn reset_window(&mut self) {
        self.window_accepts = 0;
        self.window_proposals = 0;
    }

    /// One Metropolis sweep: every site visited once, sequentially.
    pub fn metropolis_sweep(&mut self) -> Result<(), SamplerError> {
        let n = self.path.len();
        for site in 0..n {
            let (prev, next) = self.path.neighbor_indices(site);
            let q_old = self.path.positions[site];
            let q_prev = self.path.positions[prev];
            let q_next = self.path.positions[next];

            let new_q = q_old + self.step_delta * (2.0 * self.rng.random::<f64>() - 1.0);
            let new_out = log_link_weight_raw(q_next - new_q, self.mass, self.dt);
            let new_in = log_link_weight_raw(new_q - q_prev, self.mass, self.dt);
            let new_pot = potential(new_q, &self.model);
            // link `site` leaves the site, link `prev` arrives into it
            let delta = (new_out - self.link_logw[site]) + (new_in - self.link_logw[prev])
                - self.dt * (new_pot - self.site_pot[site]);

            if !delta.is_finite() {
                return Err(SamplerError::CollapseSuspected {
                    sweep: self.sweep_index,
                    detail: CollapseDetail::NonFiniteDelta { site, q: new_q },
                    partial: None,
                });
            }

            self.propose_count += 1;
            self.window_proposals += 1;
            let accept = delta >= 0.0 || self.rng.random::<f64>() < delta.exp();
            if accept {
                self.path.positions[site] = new_q;
                self.link_logw[site] = new_out;
                self.link_logw[prev] = new_in;
                self.site_pot[site] = new_pot;
                self.accept_count += 1;
                self.window_accepts += 1;
            }
        }
        self.sweep_index += 1;
        Ok(())
    }

    /// Multiplicative step-size feedback toward the target acceptance,
    /// with a +-0.05 dead band. Only called during thermalization.
    pub fn tune_step(&mut self, target: f64) {
        let rate = self.window_acceptance();
        if self.window_proposals > 0 {
            if rate > target + 0.05 {
                self.step_delta *= 1.1;
            } else if rate < target - 0.05 {
                self.step_delta *= 0.9;
            }
        }
        self.reset_window();
    }

    /// Path means of the measured observables.
    fn measure(&self) -> (f64, f64, f64, f64) {
        let n = self.path.len();
        let mut kin = 0.0;
        let mut pot = 0.0;
        let mut vir = 0.0;
        let mut q2 = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            let dq = self.path.positions[j] - self.path.positions[i];
            kin += link_kinetic_estimator_raw(dq, self.mass, self.dt);
            let q = self.path.positions[i];
            pot += potential(q, &self.model);
            vir += virial_correction(q, &self.model);
            q2 += q * q;
        }
        let nf = n as f64;
        (kin / nf, pot / nf, vir / nf, q2 / nf)
    }
}

/// Scale for the very first proposal width: the free-kernel hop scale,
/// floored by the regularization length. Thermalization tuning takes over
/// from there.
fn initial_step(model: &ModelParams, dt: f64) -> f64 {
    let kernel_scale = if model.mass > 0.0 {
        (dt / model.mass).sqrt().max(dt.min(1.0 / model.mass))
    } else {
        dt
    };
    kernel_scale.max(model.a_reg)
}

/// Run one chain to completion: tuned thermalization, then measurement.
///
/// Deterministic for a fixed config (including seed). Returns the full
/// per-measurement series with reproducibility metadata.
pub fn run_chain(config: &RunConfig) -> Result<ObservableSeries, SamplerError> {
    let mut state = ChainState::new(config)?;
    run_chain_from(&mut state, config)
}

/// Same as [`run_chain`] but starting from a caller-prepared state; the
/// frozen-chain and collapse tests drive this directly.
pub(crate) fn run_chain_from(
    state: &mut ChainState,
    config: &RunConfig,
) -> Result<ObservableSeries, SamplerError> {
    for _ in 0..config.n_therm_sweeps {
        state.metropolis_sweep()?;
        if state.sweep_index % TUNE_WINDOW == 0 {
            state.tune_step(config.target_acceptance);
        }
    }
    state.reset_window();

    let n_records = (config.n_measure_sweeps / config.measure_every) as usize;
    let mut records = Vec::with_capacity(n_records);
    let metadata = |state: &ChainState| RunMetadata {
        config: *config,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        version: crate::VERSION.to_string(),
        final_step_delta: state.step_delta,
    };

    // Sliding-window sums for the collapse detector.
    let mut window: std::collections::VecDeque<(f64, f64)> = std::collections::VecDeque::new();
    let mut window_q2 = 0.0;
    let mut window_v = 0.0;
    let collapse_q2 = (2.0 * config.model.a_reg).powi(2);
    let collapse_v = -0.9 * config.model.alpha / config.model.a_reg;
    let mut low_acceptance_sweeps: u64 = 0;

    for sweep in 1..=config.n_measure_sweeps {
        let sweep_accepts_before = state.accept_count;
        if let Err(mut err) = state.metropolis_sweep() {
            if let SamplerError::CollapseSuspected { partial, .. } = &mut err {
                *partial = Some(Box::new(ObservableSeries {
                    records: records.clone(),
                    metadata: metadata(state),
                }));
            }
            return Err(err);
        }

        // Frozen-chain detector: per-sweep acceptance persistently ~ 0.
        let sweep_rate = (state.accept_count - sweep_accepts_before) as f64
            / state.path.len() as f64;
        if sweep_rate < FROZEN_ACCEPTANCE {
            low_acceptance_sweeps += 1;
            if low_acceptance_sweeps >= FROZEN_SWEEPS {
                return Err(SamplerError::FrozenChain {
                    sweep: state.sweep_index,
                    partial: Some(Box::new(ObservableSeries {
                        records,
                        metadata: metadata(state),
                    })),
                });
            }
        } else {
            low_acceptance_sweeps = 0;
        }

        if sweep % config.measure_every == 0 {
            let (kin, pot, vir, q2) = state.measure();
            records.push(Record {
                sweep: state.sweep_index,
                kinetic: kin,
                potential: pot,
                virial_d: vir,
                q2,
                acceptance: state.window_acceptance(),
            });
            state.reset_window();

            window.push_back((q2, pot));
            window_q2 += q2;
            window_v += pot;
            if window.len() > COLLAPSE_WINDOW {
                let (old_q2, old_v) = window.pop_front().unwrap();
                window_q2 -= old_q2;
                window_v -= old_v;
            }
            if window.len() == COLLAPSE_WINDOW {
                let q2_mean = window_q2 / COLLAPSE_WINDOW as f64;
                let v_mean = window_v / COLLAPSE_WINDOW as f64;
                if q2_mean < collapse_q2 && v_mean < collapse_v {
                    return Err(SamplerError::CollapseSuspected {
                        sweep: state.sweep_index,
                        detail: CollapseDetail::LocalizedWindow { q2_mean, v_mean },
                        partial: Some(Box::new(ObservableSeries {
                            records,
                            metadata: metadata(state),
                        })),
                    });
                }
            }
        }
    }

    Ok(ObservableSeries {
        metadata: metadata(state),
        records,
    })
}
