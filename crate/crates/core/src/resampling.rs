//! Percentile bootstrap intervals for the NPMLE, coverage studies, and
//! two-fold cross-validation.
//!
//! Replicate `i` always draws from its own random stream keyed by the
//! caller's seed, and results are gathered in replicate order, so outputs
//! are reproducible regardless of thread scheduling.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{checked, fit_estimate, Estimator};
use crate::kernels::KernelSpec;
use crate::metrics::{distances, EmpiricalPmf, Metric, DEFAULT_TOL};
use crate::mixtures::MixturePmf;
use crate::npmle::{fit_npmle_data, FitConfig, FitResult};
use crate::rng::{child_seed, stream};

/// Largest tolerated fraction of failed replicates.
const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMode {
    /// Resample the observations with replacement.
    Nonparametric,
    /// Sample from the fitted NPMLE mixture.
    Parametric,
}

impl fmt::Display for CiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CiMode::Nonparametric => "np",
            CiMode::Parametric => "param",
        })
    }
}

impl FromStr for CiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "np" | "nonparametric" => Ok(CiMode::Nonparametric),
            "param" | "parametric" => Ok(CiMode::Parametric),
            _ => Err(Error::InvalidArgument(format!("unknown bootstrap mode `{s}`; expected np or param"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiTable {
    pub k_values: Vec<u64>,
    /// NPMLE fitted to the original data.
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mode: CiMode,
    /// Requested number of bootstrap samples.
    pub b: usize,
    pub level: f64,
    /// Replicates dropped after a failed retry.
    pub dropped: usize,
}

/// One-based order-statistic indices `(lo, hi)` of the percentile interval
/// from `b` sorted replicates.
pub fn percentile_indices(b: usize, level: f64) -> (usize, usize) {
    // slack absorbs rounding in b·(1 − level)/2, e.g. 40 · 0.025
    let lo = ((b as f64 * (1.0 - level) / 2.0) - 1e-9).ceil().max(1.0) as usize;
    let lo = lo.min(b);
    (lo, b + 1 - lo)
}

/// Fit settings for a resampled dataset: the domain follows the data, the
/// tolerances come from `template` when given.
fn config_for(kernel: &KernelSpec, data: &EmpiricalPmf, template: Option<&FitConfig>) -> FitConfig {
    let mut config = FitConfig::for_data(kernel, data);
    if let Some(t) = template {
        config.grid_size = t.grid_size;
        config.grad_tol = t.grad_tol;
        config.obj_tol = t.obj_tol;
        config.prune_tol = t.prune_tol;
        config.merge_tol = t.merge_tol;
        config.max_iter = t.max_iter;
    }
    config
}

fn fit_checked(obs: &[u64], kernel: &KernelSpec, template: Option<&FitConfig>) -> Result<FitResult> {
    let data = EmpiricalPmf::from_observations(obs)?;
    checked(fit_npmle_data(&data, kernel, &config_for(kernel, &data, template))?)
}

#[allow(clippy::too_many_arguments)]
pub fn bootstrap_ci(
    observations: &[u64],
    kernel: &KernelSpec,
    mode: CiMode,
    b: usize,
    level: f64,
    k_range: RangeInclusive<u64>,
    template: Option<&FitConfig>,
    seed: u64,
) -> Result<CiTable> {
    if b < 20 {
        return Err(Error::InvalidArgument(format!("need at least 20 bootstrap samples, got {b}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    if k_range.is_empty() {
        return Err(Error::InvalidArgument("empty k range".into()));
    }
    let fit = fit_checked(observations, kernel, template)?;
    let fitted = fit.mixture(*kernel);
    let n = observations.len();
    let ks: Vec<u64> = k_range.collect();

    let draw = |rng: &mut crate::rng::SimRng| -> Vec<u64> {
        match mode {
            CiMode::Nonparametric => (0..n).map(|_| observations[rng.gen_range(0..n)]).collect(),
            CiMode::Parametric => fitted.sample_with(n, rng),
        }
    };
    let replicate = |i: usize| -> Option<Vec<f64>> {
        for attempt in 0..2u64 {
            let key = if attempt == 0 { seed } else { child_seed(seed, &[i as u64]) };
            let mut rng = stream(key, i as u64);
            let sample = draw(&mut rng);
            if let Ok(f) = fit_checked(&sample, kernel, template) {
                let m = f.mixture(*kernel);
                return Some(ks.iter().map(|&k| m.eval(k)).collect());
            }
        }
        None
    };
    let results: Vec<Option<Vec<f64>>> = (0..b).into_par_iter().map(replicate).collect();
    let kept: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let dropped = b - kept.len();
    if dropped as f64 > MAX_FAILURE_RATE * b as f64 || kept.is_empty() {
        return Err(Error::TooManyFailures { failed: dropped, total: b });
    }

    let (lo, hi) = percentile_indices(kept.len(), level);
    let mut lower = Vec::with_capacity(ks.len());
    let mut upper = Vec::with_capacity(ks.len());
    for c in 0..ks.len() {
        let mut col: Vec<f64> = kept.iter().map(|r| r[c]).collect();
        col.sort_by(f64::total_cmp);
        lower.push(col[lo - 1]);
        upper.push(col[hi - 1]);
    }
    Ok(CiTable {
        point: ks.iter().map(|&k| fitted.eval(k)).collect(),
        k_values: ks,
        lower,
        upper,
        mode,
        b,
        level,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub k: u64,
    pub coverage: f64,
    pub mean_length: f64,
}

/// Monte Carlo coverage of [`bootstrap_ci`] for data drawn from `truth`.
/// Replication `r` uses the same dataset for every `mode`.
#[allow(clippy::too_many_arguments)]
pub fn coverage_study(
    truth: &MixturePmf,
    n: usize,
    b: usize,
    reps: usize,
    level: f64,
    k_range: RangeInclusive<u64>,
    mode: CiMode,
    seed: u64,
) -> Result<Vec<CoverageRow>> {
    if reps < 20 {
        return Err(Error::InvalidArgument(format!("need at least 20 replications, got {reps}")));
    }
    if n == 0 {
        return Err(Error::NoObservations);
    }
    let data_seed = child_seed(seed, &[0]);
    let tables: Vec<CiTable> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let obs = truth.sample_with(n, &mut stream(data_seed, r as u64));
            bootstrap_ci(&obs, truth.kernel(), mode, b, level, k_range.clone(), None, child_seed(seed, &[1, r as u64]))
        })
        .collect::<Result<_>>()?;
    let ks: Vec<u64> = k_range.collect();
    Ok(ks
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            let p = truth.eval(k);
            let hits = tables.iter().filter(|t| t.lower[c] <= p && p <= t.upper[c]).count();
            let length: f64 = tables.iter().map(|t| t.upper[c] - t.lower[c]).sum();
            CoverageRow {
                k,
                coverage: hits as f64 / reps as f64,
                mean_length: length / reps as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub estimator: String,
    pub metric: Metric,
    pub mean: f64,
    pub se: f64,
    /// Runs that contributed.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub rows: Vec<CvRow>,
    /// Runs skipped because some estimator failed to fit.
    pub skipped: usize,
}

impl CvTable {
    pub fn get(&self, estimator: &str, metric: Metric) -> Option<&CvRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.metric == metric)
    }
}

/// Mean and standard error of the mean.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Distances from each estimator fitted on `train` to the empirical pmf of
/// `test`, in estimator order.
fn score_fold(
    train: &[u64],
    test: &[u64],
    kernel: &KernelSpec,
    estimators: &[Estimator],
) -> Result<Vec<crate::metrics::Distances>> {
    let train = EmpiricalPmf::from_observations(train)?;
    let test = EmpiricalPmf::from_observations(test)?;
    let npmle = if estimators.iter().any(|e| e.needs_npmle()) {
        Some(checked(fit_npmle_data(&train, kernel, &FitConfig::for_data(kernel, &train))?)?)
    } else {
        None
    };
    estimators
        .iter()
        .map(|&e| {
            let est = fit_estimate(e, &train, kernel, npmle.as_ref())?;
            distances(&est, &test, DEFAULT_TOL)
        })
        .collect()
}

/// Repeated two-fold cross-validation. Each run splits the data at random
/// into halves of sizes `⌊n/2⌋` and `⌈n/2⌉`, scores every estimator fitted on
/// one half against the empirical pmf of the other, then swaps the halves.
pub fn two_fold_cv(
    observations: &[u64],
    kernel: &KernelSpec,
    estimators: &[Estimator],
    runs: usize,
    seed: u64,
) -> Result<CvTable> {
    if observations.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least 4 observations, got {}",
            observations.len()
        )));
    }
    if runs == 0 || estimators.is_empty() {
        return Err(Error::InvalidArgument("need at least one run and one estimator".into()));
    }
    let half = observations.len() / 2;
    let per_run: Vec<Option<Vec<crate::metrics::Distances>>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut shuffled = observations.to_vec();
            shuffled.shuffle(&mut stream(seed, r as u64));
            let (a, b) = shuffled.split_at(half);
            let ab = score_fold(a, b, kernel, estimators).ok()?;
            let ba = score_fold(b, a, kernel, estimators).ok()?;
            Some(ab.into_iter().chain(ba).collect())
        })
        .collect();
    let kept: Vec<Vec<crate::metrics::Distances>> = per_run.into_iter().flatten().collect();
    let skipped = runs - kept.len();
    if skipped as f64 > MAX_FAILURE_RATE * runs as f64 || kept.is_empty() {
        return Err(Error::TooManyFailures { failed: skipped, total: runs });
    }
    let m = estimators.len();
    let mut rows = Vec::new();
    for (i, e) in estimators.iter().enumerate() {
        for metric in Metric::ALL {
            // one value per run: the two directions averaged
            let values: Vec<f64> = kept
                .iter()
                .map(|d| 0.5 * (d[i].get(metric) + d[m + i].get(metric)))
                .collect();
            let (mean, se) = mean_se(&values);
            rows.push(CvRow {
                estimator: e.to_string(),
                metric,
                mean,
                se,
                runs: kept.len(),
            });
        }
    }
    Ok(CvTable { rows, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::MixingDistribution;

    #[test]
    fn percentile_rule() {
        assert_eq!(percentile_indices(40, 0.95), (1, 40));
        assert_eq!(percentile_indices(200, 0.95), (5, 196));
        assert_eq!(percentile_indices(1000, 0.95), (25, 976));
        assert_eq!(percentile_indices(20, 0.999), (1, 20));
    }

    #[test]
    fn constant_data_gives_zero_width() {
        let k = KernelSpec::poisson();
        let t = bootstrap_ci(&[3; 30], &k, CiMode::Nonparametric, 20, 0.95, 0..=6, None, 1).unwrap();
        for c in 0..t.k_values.len() {
            assert_eq!(t.lower[c], t.upper[c]);
            assert!((t.lower[c] - t.point[c]).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_and_ordered() {
        let k = KernelSpec::poisson();
        let obs = MixturePmf::new(k, MixingDistribution::uniform(1.0, 4.0).unwrap())
            .unwrap()
            .sample(80, 2);
        let a = bootstrap_ci(&obs, &k, CiMode::Parametric, 30, 0.9, 0..=8, None, 9).unwrap();
        let b = bootstrap_ci(&obs, &k, CiMode::Parametric, 30, 0.9, 0..=8, None, 9).unwrap();
        assert_eq!(a, b);
        for c in 0..a.k_values.len() {
            assert!(0.0 <= a.lower[c] && a.lower[c] <= a.upper[c] && a.upper[c] <= 1.0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let k = KernelSpec::poisson();
        assert!(bootstrap_ci(&[1, 2], &k, CiMode::Parametric, 19, 0.95, 0..=3, None, 0).is_err());
        assert!(bootstrap_ci(&[1, 2], &k, CiMode::Parametric, 20, 1.0, 0..=3, None, 0).is_err());
        assert!(two_fold_cv(&[1, 2, 3], &k, &[Estimator::Mle], 1, 0).is_err());
    }

    #[test]
    fn cv_of_empirical_on_duplicated_data_is_zero() {
        // every value appears twice; a split that separates the copies gives identical folds
        let base = [0u64, 1, 1, 2, 5];
        let obs: Vec<u64> = base.iter().chain(base.iter()).copied().collect();
        let ab = score_fold(&base, &base, &KernelSpec::poisson(), &[Estimator::Empirical]).unwrap();
        assert_eq!(ab[0].h, 0.0);
        assert_eq!(ab[0].l1, 0.0);
        let t = two_fold_cv(&obs, &KernelSpec::poisson(), &[Estimator::Empirical], 3, 4).unwrap();
        assert!(t.rows.iter().all(|r| r.mean >= 0.0));
    }

    #[test]
    fn cv_is_deterministic() {
        let k = KernelSpec::poisson();
        let obs = MixturePmf::new(k, MixingDistribution::point(3.0)).unwrap().sample(41, 5);
        let est = [Estimator::Empirical, Estimator::Mle, Estimator::Hybrid];
        let a = two_fold_cv(&obs, &k, &est, 4, 12).unwrap();
        assert_eq!(a, two_fold_cv(&obs, &k, &est, 4, 12).unwrap());
        assert_eq!(a.rows.len(), 9);
        let emp = a.get("empirical", Metric::L1).unwrap().mean;
        let mle = a.get("mle", Metric::L1).unwrap().mean;
        assert!(mle < emp);
    }
}
