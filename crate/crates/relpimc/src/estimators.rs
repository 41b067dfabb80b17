//! Blocked (binned) statistics over the per-measurement records produced by
//! the sampler, and the non-relativistic virial residual.
//!
//! Consecutive Monte Carlo measurements are autocorrelated; naive standard
//! errors underestimate the true uncertainty. Binning averages `bin_size`
//! consecutive records first and treats the bin means as (nearly)
//! independent samples. The automatic variant doubles the bin size until
//! the error estimate stops growing.

use serde::Serialize;
use thiserror::Error;

use crate::sampler::RunConfig;

/// Errors from the statistics layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("bin size must be >= 1")]
    ZeroBinSize,
    #[error("need at least 2 full bins: {n} records with bin_size {bin_size}")]
    TooFewBins { n: usize, bin_size: usize },
    #[error("series is empty")]
    EmptySeries,
}

/// One measurement row: path-averaged observables after a given sweep.
///
/// `kinetic` is the relativistic estimator (rest mass included),
/// `potential` and `virial_d` are site averages of `V` and `D`, `q2` is the
/// site average of `q_i^2`, and `acceptance` is the Metropolis acceptance
/// rate over the window since the previous record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Record {
    pub sweep: u64,
    pub kinetic: f64,
    pub potential: f64,
    pub virial_d: f64,
    pub q2: f64,
    pub acceptance: f64,
}

/// Reproducibility metadata echoed into every output artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub config: RunConfig,
    pub rng_algorithm: String,
    pub version: String,
    /// Proposal half-width after thermalization (frozen during measurement).
    pub final_step_delta: f64,
}

/// The measurement stream of one chain, with its full provenance.
#[derive(Debug, Clone, Serialize)]
pub struct ObservableSeries {
    pub records: Vec<Record>,
    pub metadata: RunMetadata,
}

impl ObservableSeries {
    pub fn kinetic(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.kinetic).collect()
    }

    pub fn potential(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.potential).collect()
    }

    pub fn virial_d(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.virial_d).collect()
    }

    pub fn q2(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.q2).collect()
    }

    /// Per-record residual `2 (K - m) + V + D` of the non-relativistic
    /// virial relation. The rest mass is subtracted from the relativistic
    /// kinetic estimator because the non-relativistic Hamiltonian counts
    /// `m` separately from `p^2 / 2m`.
    pub fn virial_residual_series(&self) -> Vec<f64> {
        let m = self.metadata.config.model.mass;
        self.records
            .iter()
            .map(|r| 2.0 * (r.kinetic - m) + r.potential + r.virial_d)
            .collect()
    }
}

/// A binned mean with its blocked standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_bins: usize,
    pub bin_size: usize,
}

/// Partition `series` into consecutive bins of `bin_size`, average within
/// bins, and return the mean of bin means with its standard error
/// `std(bin means) / sqrt(n_bins)`. A trailing partial bin is dropped.
pub fn binned_estimate(series: &[f64], bin_size: usize) -> Result<Estimate, EstimatorError> {
    if bin_size == 0 {
        return Err(EstimatorError::ZeroBinSize);
    }
    let n_bins = series.len() / bin_size;
    if n_bins < 2 {
        return Err(EstimatorError::TooFewBins {
            n: series.len(),
            bin_size,
        });
    }
    let used = n_bins * bin_size;

    // Mean over all included records: identical to the mean of equal-size
    // bin means, and exactly independent of bin_size when it divides n.
    let mean = series[..used].iter().sum::<f64>() / used as f64;

    let mut var = 0.0;
    for b in 0..n_bins {
        let bin_mean =
            series[b * bin_size..(b + 1) * bin_size].iter().sum::<f64>() / bin_size as f64;
        var += (bin_mean - mean) * (bin_mean - mean);
    }
    var /= (n_bins - 1) as f64;

    Ok(Estimate {
        mean,
        std_error: (var / n_bins as f64).sqrt(),
        n_bins,
        bin_size,
    })
}

/// Binned estimate with the bin size chosen automatically: double until the
/// standard error changes by less than 5% (autocorrelation plateau) or
/// fewer than 16 bins would remain.
pub fn auto_binned_estimate(series: &[f64]) -> Result<Estimate, EstimatorError> {
    if series.is_empty() {
        return Err(EstimatorError::EmptySeries);
    }
    let mut current = binned_estimate(series, 1)?;
    let mut bin_size = 1;
    loop {
        let next_size = bin_size * 2;
        if series.len() / next_size < 16 {
            return Ok(current);
        }
        let next = binned_estimate(series, next_size)?;
        let reference = next.std_error.max(current.std_error).max(f64::MIN_POSITIVE);
        if (next.std_error - current.std_error).abs() < 0.05 * reference {
            return Ok(next);
        }
        current = next;
        bin_size = next_size;
    }
}

/// Binned estimate of the virial residual `2 <K - m> + <V + D>`.
///
/// Zero (within errors) signals the non-relativistic regime of a bound
/// state; for free or relativistic chains it is significantly nonzero.
pub fn virial_residual(
    series: &ObservableSeries,
    bin_size: usize,
) -> Result<Estimate, EstimatorError> {
    binned_estimate(&series.virial_residual_series(), bin_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn constant_series() {
        let xs = vec![3.25; 100];
        for bin in [1, 5, 10] {
            let e = binned_estimate(&xs, bin).unwrap();
            assert_eq!(e.mean, 3.25);
            assert_eq!(e.std_error, 0.0);
        }
    }

    #[test]
    fn alternating_series_bins_to_zero() {
        let xs: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e = binned_estimate(&xs, 2).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.n_bins, 32);
    }

    #[test]
    fn iid_normal_error_scale() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| {
                // Box-Muller from two uniforms.
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let e = binned_estimate(&xs, 10).unwrap();
        // True sampling std error of the mean is 1/sqrt(10000) = 0.01.
        assert!(e.std_error > 0.01 / 1.5 && e.std_error < 0.01 * 1.5, "{e:?}");
        assert!(e.mean.abs() < 5.0 * 0.01);
    }

    #[test]
    fn too_few_bins_is_an_error() {
        let xs = vec![1.0; 9];
        assert!(binned_estimate(&xs, 5).is_err());
        assert!(binned_estimate(&xs, 0).is_err());
        assert!(binned_estimate(&xs, 4).is_ok());
    }

    #[test]
    fn auto_binning_grows_under_autocorrelation() {
        // AR(1) with strong correlation: the naive error underestimates, so
        // the automatic bin size must end up well above 1.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rho = 0.95f64;
        let mut x = 0.0;
        let xs: Vec<f64> = (0..20_000)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                x = rho * x + (1.0 - rho * rho).sqrt() * g;
                x
            })
            .collect();
        let auto = auto_binned_estimate(&xs).unwrap();
        let naive = binned_estimate(&xs, 1).unwrap();
        assert!(auto.bin_size >= 8, "bin_size = {}", auto.bin_size);
        assert!(auto.std_error > 2.0 * naive.std_error);
    }

    proptest! {
        #[test]
        fn mean_independent_of_bin_size(
            values in proptest::collection::vec(-100.0f64..100.0, 64..256),
            k in 1usize..8,
        ) {
            // When bin_size divides n the included records are identical for
            // every k, so the mean is bit-for-bit the same.
            let n = (values.len() / k) * k;
            let xs = &values[..n];
            if n / k >= 2 {
                let a = binned_estimate(xs, 1).unwrap();
                let b = binned_estimate(xs, k).unwrap();
                prop_assert_eq!(a.mean, b.mean);
            }
        }
    }
}
