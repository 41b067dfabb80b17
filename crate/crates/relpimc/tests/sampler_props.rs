//! Statistical exactness of the Metropolis sampler on cases where the
//! target distribution can be evaluated directly.

mod common;

use relpimc::estimators::auto_binned_estimate;
use relpimc::model::{log_link_weight, LatticeParams, ModelParams};
use relpimc::sampler::{run_chain, ChainState, InitialPath, RunConfig};

fn two_site_config(seed: u64) -> RunConfig {
    RunConfig {
        model: ModelParams::new(1.0, 0.0, 0.1).unwrap(),
        lattice: LatticeParams::new(2, 1.0).unwrap(),
        seed,
        n_therm_sweeps: 1000,
        n_measure_sweeps: 1_000_000,
        measure_every: 1,
        target_acceptance: 0.5,
        initial_path: InitialPath::Cold,
    }
}

/// 99th percentile of chi^2 with k degrees of freedom (Wilson-Hilferty).
fn chi2_crit_99(k: f64) -> f64 {
    let z = 2.326_347_874;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

/// Stationary distribution of the hop dq = q1 - q0 on the free two-site
/// chain is proportional to rho(dq)^2. Empirical bin counts must sit
/// within 3 sigma multinomial bands around the directly integrated bin
/// probabilities.
#[test]
fn two_site_hop_histogram_matches_exact_density() {
    let config = two_site_config(2024);
    let model = config.model;
    let dt = config.lattice.dt();

    let n_bins = 41;
    let lo = -4.0;
    let hi = 4.0;
    let width = (hi - lo) / n_bins as f64;

    // Exact bin probabilities by fine midpoint quadrature of rho^2,
    // normalized over the whole axis (tails integrated out to |dq| = 40).
    let g = |dq: f64| (2.0 * log_link_weight(dq, &model, dt).unwrap()).exp();
    let quad = |a: f64, b: f64| {
        let steps = 400;
        let h = (b - a) / steps as f64;
        (0..steps).map(|i| g(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
    };
    let z = quad(-40.0, 40.0);
    let probs: Vec<f64> = (0..n_bins)
        .map(|b| quad(lo + b as f64 * width, lo + (b + 1) as f64 * width) / z)
        .collect();
    let p_outside = 1.0 - probs.iter().sum::<f64>();

    // Sample: decimate to roughly independent draws.
    let mut state = ChainState::new(&config).unwrap();
    for s in 0..config.n_therm_sweeps {
        state.metropolis_sweep().unwrap();
        if (s + 1) % 20 == 0 {
            state.tune_step(config.target_acceptance);
        }
    }
    let mut counts = vec![0u64; n_bins];
    let mut outside = 0u64;
    let mut n_samples = 0u64;
    for s in 0..config.n_measure_sweeps {
        state.metropolis_sweep().unwrap();
        if s % 10 != 0 {
            continue;
        }
        n_samples += 1;
        let q = state.path().positions();
        let dq = q[1] - q[0];
        if dq < lo || dq >= hi {
            outside += 1;
        } else {
            counts[((dq - lo) / width) as usize] += 1;
        }
    }

    let n = n_samples as f64;
    let mut checked = 0;
    for (b, (&c, &p)) in counts.iter().zip(&probs).enumerate() {
        let expect = n * p;
        if expect < 10.0 {
            continue;
        }
        let sigma = (n * p * (1.0 - p)).sqrt();
        let dev = (c as f64 - expect) / sigma;
        assert!(
            dev.abs() <= 3.0,
            "bin {b}: count {c}, expected {expect:.1}, deviation {dev:.2} sigma"
        );
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} bins were populated enough to test");
    let sigma_out = (n * p_outside * (1.0 - p_outside)).sqrt();
    assert!(((outside as f64 - n * p_outside) / sigma_out).abs() <= 3.0);
}

/// Joint distribution of (q0, q1) restricted to the box [-4, 4]^2, pooled
/// over independent chains, against the directly evaluated two-link weight
/// binned on a 41 x 41 grid: chi-square test at the 1% level.
///
/// The center of mass of a free chain is an unbiased random walk, so after
/// enough sweeps its occupation across the box is flat and the conditional
/// joint density is rho(q1 - q0)^2 restricted to the box.
#[test]
fn two_site_joint_histogram_chi_square() {
    let model = ModelParams::new(1.0, 0.0, 0.1).unwrap();
    let dt = 1.0;
    let n_bins = 41;
    let lo = -4.0;
    let hi = 4.0;
    let width = (hi - lo) / n_bins as f64;

    // Expected cell weights: integrate rho(q1-q0)^2 over each cell with a
    // 4x4 midpoint rule, then normalize over the box.
    let g = |dq: f64| (2.0 * log_link_weight(dq, &model, dt).unwrap()).exp();
    let sub = 4;
    let mut weights = vec![0.0f64; n_bins * n_bins];
    for i in 0..n_bins {
        for j in 0..n_bins {
            let mut acc = 0.0;
            for si in 0..sub {
                for sj in 0..sub {
                    let q0 = lo + (i as f64 + (si as f64 + 0.5) / sub as f64) * width;
                    let q1 = lo + (j as f64 + (sj as f64 + 0.5) / sub as f64) * width;
                    acc += g(q1 - q0);
                }
            }
            weights[i * n_bins + j] = acc;
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }

    // Pool samples from independent chains; each one random-walks its
    // center of mass far beyond the box, flattening the occupation.
    let mut counts = vec![0u64; n_bins * n_bins];
    let mut n_in_box = 0u64;
    for chain in 0..64u64 {
        let config = RunConfig {
            model,
            lattice: LatticeParams::new(2, dt).unwrap(),
            seed: 5000 + chain,
            n_therm_sweeps: 2000,
            n_measure_sweeps: 30_000,
            measure_every: 1,
            target_acceptance: 0.5,
            initial_path: InitialPath::Cold,
        };
        let mut state = ChainState::new(&config).unwrap();
        for s in 0..config.n_therm_sweeps {
            state.metropolis_sweep().unwrap();
            if (s + 1) % 20 == 0 {
                state.tune_step(config.target_acceptance);
            }
        }
        for s in 0..config.n_measure_sweeps {
            state.metropolis_sweep().unwrap();
            if s % 20 != 0 {
                continue;
            }
            let q = state.path().positions();
            let (q0, q1) = (q[0], q[1]);
            if q0 >= lo && q0 < hi && q1 >= lo && q1 < hi {
                let i = ((q0 - lo) / width) as usize;
                let j = ((q1 - lo) / width) as usize;
                counts[i * n_bins + j] += 1;
                n_in_box += 1;
            }
        }
    }

    // Chi-square over cells with expected count >= 10; the rest pooled.
    let n = n_in_box as f64;
    let mut chi2 = 0.0;
    let mut dof: i64 = -1;
    let mut pooled_expect = 0.0;
    let mut pooled_count = 0.0;
    for (c, w) in counts.iter().zip(&weights) {
        let expect = n * w;
        if expect >= 10.0 {
            let d = *c as f64 - expect;
            chi2 += d * d / expect;
            dof += 1;
        } else {
            pooled_expect += expect;
            pooled_count += *c as f64;
        }
    }
    if pooled_expect > 10.0 {
        let d = pooled_count - pooled_expect;
        chi2 += d * d / pooled_expect;
        dof += 1;
    }
    assert!(n_in_box > 3000, "too few in-box samples: {n_in_box}");
    assert!(dof > 30, "too few testable cells: {dof}");
    let crit = chi2_crit_99(dof as f64);
    assert!(
        chi2 < crit,
        "chi2 = {chi2:.1} exceeds the 1% critical value {crit:.1} (dof {dof}, samples {n_in_box})"
    );
}

/// At alpha = 0 the center of mass performs an unbiased random walk: the
/// mean drift per sweep vanishes within errors.
#[test]
fn free_center_of_mass_has_no_drift() {
    let config = RunConfig {
        model: ModelParams::new(1.0, 0.0, 0.1).unwrap(),
        lattice: LatticeParams::new(32, 0.5).unwrap(),
        seed: 77,
        n_therm_sweeps: 500,
        n_measure_sweeps: 200_000,
        measure_every: 1,
        target_acceptance: 0.5,
        initial_path: InitialPath::Cold,
    };
    let mut state = ChainState::new(&config).unwrap();
    for s in 0..config.n_therm_sweeps {
        state.metropolis_sweep().unwrap();
        if (s + 1) % 20 == 0 {
            state.tune_step(config.target_acceptance);
        }
    }
    let com = |st: &ChainState| {
        st.path().positions().iter().sum::<f64>() / st.path().len() as f64
    };

    // Mean per-sweep increment: the end-to-end displacement over N sweeps
    // has variance N * v, so the drift estimate is displacement / N with
    // standard error sqrt(v / N); v is estimated from the increments.
    let mut increments = Vec::with_capacity(config.n_measure_sweeps as usize);
    let mut prev = com(&state);
    for _ in 0..config.n_measure_sweeps {
        state.metropolis_sweep().unwrap();
        let next = com(&state);
        increments.push(next - prev);
        prev = next;
    }
    let n = increments.len() as f64;
    let mean = increments.iter().sum::<f64>() / n;
    let var = increments.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let t = mean / (var / n).sqrt();
    assert!(
        t.abs() < 3.0,
        "center-of-mass drift {mean:.3e} per sweep is {t:.2} sigma from zero"
    );
}

/// Cold and hot starts must agree on <q^2> after thermalization.
#[test]
fn cold_and_hot_starts_agree() {
    let base = RunConfig {
        model: ModelParams::new(1.0, 1.0, 0.1).unwrap(),
        lattice: LatticeParams::new(128, 0.125).unwrap(),
        seed: 31,
        n_therm_sweeps: 3000,
        n_measure_sweeps: 24_000,
        measure_every: 4,
        target_acceptance: 0.5,
        initial_path: InitialPath::Cold,
    };
    let cold = run_chain(&base).unwrap();
    let mut hot_cfg = base;
    hot_cfg.seed = 32;
    hot_cfg.initial_path = InitialPath::Hot { half_width: 2.0 };
    let hot = run_chain(&hot_cfg).unwrap();

    let ec = auto_binned_estimate(&cold.q2()).unwrap();
    let eh = auto_binned_estimate(&hot.q2()).unwrap();
    let sigma = (ec.std_error * ec.std_error + eh.std_error * eh.std_error).sqrt();
    assert!(
        (ec.mean - eh.mean).abs() < 3.0 * sigma,
        "cold {} +- {} vs hot {} +- {}",
        ec.mean,
        ec.std_error,
        eh.mean,
        eh.std_error
    );
    // Both must sit at a physically sensible bound-state width, well above
    // the collapse scale and well below the hot-start spread.
    assert!(ec.mean > 0.04 && ec.mean < 1.0, "q2 = {}", ec.mean);
}
