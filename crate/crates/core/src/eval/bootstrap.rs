//! Percentile bootstrap over records.
//!
//! Resample `i` draws from a ChaCha8 generator seeded with the master seed and
//! switched to stream `i`, so every resample is fixed by `(seed, i)` alone and
//! results do not depend on how many threads evaluate them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub seed: u64,
    /// Two-sided coverage, e.g. 0.95.
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { n_resamples: DEFAULT_RESAMPLES, seed: 0, level: 0.95 }
    }
}

/// A point estimate with an optional confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Estimate {
    pub fn point(value: f64) -> Self {
        Self { value, lo: None, hi: None }
    }

    pub fn with_ci(value: f64, ci: Option<(f64, f64)>) -> Self {
        Self { value, lo: ci.map(|c| c.0), hi: ci.map(|c| c.1) }
    }
}

/// Record indices for resample `index` of `n` records.
pub fn resample_indices(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Statistic values over all resamples, in resample order. Resamples where
/// the statistic is undefined are skipped.
pub fn bootstrap_distribution<F>(n: usize, n_resamples: usize, seed: u64, statistic: F) -> Vec<f64>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if n == 0 {
        return Vec::new();
    }
    (0..n_resamples as u64)
        .into_par_iter()
        .map(|i| statistic(&resample_indices(n, seed, i)))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Linear-interpolated quantile of sorted data, `q` in [0, 1].
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Central percentile interval of a bootstrap distribution.
pub fn percentile_interval(distribution: &[f64], level: f64) -> Option<(f64, f64)> {
    if distribution.is_empty() {
        return None;
    }
    let mut sorted = distribution.to_vec();
    sorted.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Some((quantile(&sorted, alpha), quantile(&sorted, 1.0 - alpha)))
}

/// Percentile bootstrap confidence interval of `statistic` over `n` records.
///
/// With `clip_unit` the interval is clamped to [0, 1] (rate statistics).
pub fn bootstrap_ci<F>(n: usize, config: &BootstrapConfig, clip_unit: bool, statistic: F) -> Option<(f64, f64)>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    let dist = bootstrap_distribution(n, config.n_resamples, config.seed, statistic);
    percentile_interval(&dist, config.level).map(
        |(lo, hi)| {
            if clip_unit {
                (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
            } else {
                (lo, hi)
            }
        },
    )
}

/// Intervals for several statistics computed together on each resample.
/// `statistics` returns one optional value per statistic.
pub fn bootstrap_cis<F>(n: usize, config: &BootstrapConfig, clip_unit: bool, statistics: F) -> Vec<Option<(f64, f64)>>
where
    F: Fn(&[usize]) -> Vec<Option<f64>> + Sync,
{
    if n == 0 {
        return Vec::new();
    }
    let per_resample: Vec<Vec<Option<f64>>> =
        (0..config.n_resamples as u64).into_par_iter().map(|i| statistics(&resample_indices(n, config.seed, i))).collect();
    let n_stats = per_resample.first().map_or(0, Vec::len);
    (0..n_stats)
        .map(|s| {
            let dist: Vec<f64> = per_resample.iter().filter_map(|r| r[s]).collect();
            percentile_interval(&dist, config.level).map(|(lo, hi)| {
                if clip_unit {
                    (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
                } else {
                    (lo, hi)
                }
            })
        })
        .collect()
}
