//! Percentile bootstrap intervals and coverage experiments.
//!
//! Resample `b` draws its rows from a stream seeded by `(seed, b)`, so the
//! interval does not depend on how resamples are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::methods::Estimator;
use crate::rng;
use crate::simgen::{generate, ScenarioSpec};

/// Largest tolerated fraction of failed resamples.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    SkipAndCount,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    pub failure_policy: FailurePolicy,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 2000,
            level: 0.95,
            seed: 0,
            failure_policy: FailurePolicy::SkipAndCount,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resamples < 2 {
            return Err(Error::InvalidConfig("bootstrap needs at least 2 resamples".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("level {} outside (0, 1)", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    pub n_failed: usize,
    pub resamples: usize,
}

impl BootstrapInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Linear-interpolation quantile of sorted data (`h = (n - 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

/// Row indices for resample `index`.
pub fn resample_rows(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut r = ChaCha8Rng::seed_from_u64(rng::indexed_seed(seed, "bootstrap", index));
    (0..n).map(|_| r.random_range(0..n)).collect()
}

/// Percentile interval at `(1 - level) / 2` and `1 - (1 - level) / 2`.
pub fn bootstrap_ci<E: Estimator + ?Sized>(data: &Dataset, estimator: &E, config: &BootstrapConfig) -> Result<BootstrapInterval> {
    config.validate()?;
    let point = estimator.estimate(data)?.ate;
    let n = data.n();
    let outcomes: Vec<Result<f64>> = (0..config.resamples as u64)
        .into_par_iter()
        .map(|b| {
            let rows = resample_rows(n, config.seed, b);
            estimator.estimate(&data.select_rows(&rows)).map(|r| r.ate)
        })
        .collect();
    let mut estimates = Vec::with_capacity(outcomes.len());
    let mut n_failed = 0;
    for o in outcomes {
        match o {
            Ok(v) if v.is_finite() => estimates.push(v),
            Ok(_) => n_failed += 1,
            Err(e) => {
                if config.failure_policy == FailurePolicy::Abort {
                    return Err(e.at_stage("bootstrap resample"));
                }
                n_failed += 1;
            }
        }
    }
    if n_failed as f64 > MAX_FAILURE_FRACTION * config.resamples as f64 || estimates.len() < 2 {
        return Err(Error::TooManyFailures {
            failed: n_failed,
            total: config.resamples,
        });
    }
    estimates.sort_by(f64::total_cmp);
    let tail = (1.0 - config.level) / 2.0;
    Ok(BootstrapInterval {
        lower: quantile_sorted(&estimates, tail),
        upper: quantile_sorted(&estimates, 1.0 - tail),
        point,
        n_failed,
        resamples: config.resamples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Fraction of completed replications whose interval contains the truth.
    pub coverage: f64,
    pub mean_width: f64,
    pub replications: usize,
    /// Replications whose point estimate or bootstrap failed.
    pub failed_replications: usize,
    /// Intervals that exclude their own point estimate.
    pub point_outside: usize,
    pub intervals: Vec<Option<BootstrapInterval>>,
}

/// Coverage over datasets produced by `generator(replicate)`, which returns
/// the data and its true estimand.
pub fn coverage_with<E, G>(generator: G, estimator: &E, config: &BootstrapConfig, replications: usize) -> Result<CoverageReport>
where
    E: Estimator + ?Sized,
    G: Fn(u64) -> Result<(Dataset, f64)> + Sync,
{
    if replications < 10 {
        return Err(Error::InvalidConfig("coverage needs at least 10 replications".into()));
    }
    config.validate()?;
    let runs: Vec<Result<(BootstrapInterval, f64)>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let (data, truth) = generator(r)?;
            let cfg = BootstrapConfig {
                seed: rng::indexed_seed(config.seed, "coverage", r),
                ..config.clone()
            };
            bootstrap_ci(&data, estimator, &cfg).map(|ci| (ci, truth))
        })
        .collect();
    let mut hits = 0usize;
    let mut widths = Vec::new();
    let mut failed = 0usize;
    let mut point_outside = 0usize;
    let mut intervals = Vec::with_capacity(replications);
    for run in runs {
        match run {
            Ok((ci, truth)) => {
                hits += usize::from(ci.contains(truth));
                point_outside += usize::from(!ci.contains(ci.point));
                widths.push(ci.width());
                intervals.push(Some(ci));
            }
            Err(e) => {
                if config.failure_policy == FailurePolicy::Abort {
                    return Err(e);
                }
                failed += 1;
                intervals.push(None);
            }
        }
    }
    if widths.is_empty() {
        return Err(Error::TooManyFailures {
            failed,
            total: replications,
        });
    }
    Ok(CoverageReport {
        coverage: hits as f64 / widths.len() as f64,
        mean_width: crate::regression::pairwise_sum(&widths) / widths.len() as f64,
        replications,
        failed_replications: failed,
        point_outside,
        intervals,
    })
}

/// Coverage of the scenario's analytic ATE; replicate `r` simulates with a
/// seed derived from `(spec.seed, r)`.
pub fn coverage_experiment<E: Estimator + ?Sized>(
    spec: &ScenarioSpec,
    estimator: &E,
    config: &BootstrapConfig,
    replications: usize,
) -> Result<CoverageReport> {
    let generator = |r: u64| {
        let sample = generate(&spec.with_seed(rng::indexed_seed(spec.seed, "replicate", r)))?;
        Ok((sample.dataset, sample.true_ate))
    };
    coverage_with(generator, estimator, config, replications)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.25), 2.0);
        assert_eq!(quantile_sorted(&v, 0.75), 4.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.25), 1.25);
        assert_eq!(quantile_sorted(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn resamples_depend_only_on_index() {
        assert_eq!(resample_rows(50, 3, 7), resample_rows(50, 3, 7));
        assert_ne!(resample_rows(50, 3, 7), resample_rows(50, 3, 8));
        assert!(resample_rows(50, 3, 7).iter().all(|&i| i < 50));
    }

    #[test]
    fn config_validation() {
        let mut c = BootstrapConfig::default();
        assert!(c.validate().is_ok());
        c.resamples = 1;
        assert!(c.validate().is_err());
        c.resamples = 10;
        c.level = 1.0;
        assert!(c.validate().is_err());
    }
}
