//! Scenario registry and Monte Carlo studies of estimator accuracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{checked, fit_estimate, Estimator};
use crate::kernels::KernelSpec;
use crate::metrics::{distances, EmpiricalPmf, Metric, DEFAULT_TOL};
use crate::mixtures::{MixingDistribution, MixturePmf, TabulatedPmf};
use crate::npmle::{fit_npmle_data, FitConfig};
use crate::resampling::mean_se;
use crate::rng::{child_seed, stream};

const MAX_FAILURE_RATE: f64 = 0.05;

pub const REGISTRY: [&str; 11] = [
    "poisson-finite-2",
    "poisson-finite-8",
    "ex1-as-printed",
    "ex2",
    "poisson-unif",
    "poisson-zero-unif",
    "poisson-unif-10-30",
    "geom-finite-7",
    "geom-beta",
    "nb-finite-7",
    "nb-beta",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub kernel: KernelSpec,
    pub mixing: MixingDistribution,
    pub description: String,
}

impl Scenario {
    pub fn truth(&self) -> MixturePmf {
        MixturePmf::new(self.kernel, self.mixing.clone()).expect("registry scenarios are admissible")
    }
}

/// Poisson means `1..=m` with weights proportional to `0.8^(θ−1)`.
fn geometric_weights(m: usize) -> MixingDistribution {
    let raw: Vec<f64> = (0..m).map(|j| 0.8f64.powi(j as i32)).collect();
    let total: f64 = raw.iter().sum();
    MixingDistribution::discrete((1..=m).map(|t| t as f64).collect(), raw.iter().map(|w| w / total).collect())
        .expect("valid weights")
}

fn seven_points() -> MixingDistribution {
    MixingDistribution::discrete((2..=8).map(|i| i as f64 / 10.0).collect(), vec![1.0 / 7.0; 7]).expect("valid weights")
}

fn beta_2_3() -> MixingDistribution {
    MixingDistribution::scaled_beta(2.0, 3.0, 0.1, 0.9).expect("valid beta law")
}

pub fn scenario(name: &str) -> Result<Scenario> {
    let nb = KernelSpec::negative_binomial(10)?;
    let (kernel, mixing, description) = match name {
        "poisson-finite-2" | "fig1-m2-rule" => (
            KernelSpec::poisson(),
            geometric_weights(2),
            "Poisson, means 1 and 2 with weights proportional to 0.8^(θ-1) (5/9, 4/9)",
        ),
        "poisson-finite-8" | "ex2" => (
            KernelSpec::poisson(),
            geometric_weights(8),
            "Poisson, means 1..8 with weights proportional to 0.8^(θ-1)",
        ),
        "ex1-as-printed" => (
            KernelSpec::poisson(),
            MixingDistribution::discrete(vec![1.0, 2.0], vec![4.0 / 9.0, 5.0 / 9.0])?,
            "Poisson, weight 4/9 at mean 1 and 5/9 at mean 2",
        ),
        "poisson-unif" => (
            KernelSpec::poisson(),
            MixingDistribution::uniform(0.2, 5.0)?,
            "Poisson, means uniform on [0.2, 5]",
        ),
        "poisson-zero-unif" => (
            KernelSpec::poisson(),
            MixingDistribution::point_mass_plus(1.0 / 3.0, MixingDistribution::uniform(0.2, 5.0)?)?,
            "Poisson, mass 1/3 at 0 and 2/3 uniform on [0.2, 5]",
        ),
        "poisson-unif-10-30" => (
            KernelSpec::poisson(),
            MixingDistribution::uniform(10.0, 30.0)?,
            "Poisson, means uniform on [10, 30]",
        ),
        "geom-finite-7" => (
            KernelSpec::geometric(),
            seven_points(),
            "geometric, θ = 0.2, 0.3, ..., 0.8 with weight 1/7 each",
        ),
        "geom-beta" => (
            KernelSpec::geometric(),
            beta_2_3(),
            "geometric, θ ~ Beta(2, 3) rescaled to [0.1, 0.9]",
        ),
        "nb-finite-7" => (nb, seven_points(), "negative binomial r = 10, θ = 0.2, ..., 0.8 with weight 1/7 each"),
        "nb-beta" => (nb, beta_2_3(), "negative binomial r = 10, θ ~ Beta(2, 3) rescaled to [0.1, 0.9]"),
        _ => {
            return Err(Error::UnknownScenario {
                name: name.to_string(),
                registry: REGISTRY.join(", "),
            })
        }
    };
    Ok(Scenario {
        name: name.to_string(),
        kernel,
        mixing,
        description: description.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub scenario: String,
    pub n: u64,
    pub estimator: String,
    pub metric: Metric,
    /// Mean of `√n · distance(estimate, truth)` over the successful replicates.
    pub scaled_mean: f64,
    pub std_error: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Distances of every estimator to the truth for one simulated dataset.
fn one_replicate(
    scenario: &Scenario,
    truth: &TabulatedPmf,
    n: usize,
    estimators: &[Estimator],
    seed: u64,
    rep: u64,
) -> Vec<Option<crate::metrics::Distances>> {
    let obs = truth.source().sample_with(n, &mut stream(seed, rep));
    let data = EmpiricalPmf::from_observations(&obs).expect("n > 0");
    let kernel = scenario.kernel;
    let npmle = if estimators.iter().any(|e| e.needs_npmle()) {
        fit_npmle_data(&data, &kernel, &FitConfig::for_data(&kernel, &data))
            .and_then(checked)
            .ok()
    } else {
        None
    };
    estimators
        .iter()
        .map(|&e| {
            if e.needs_npmle() && npmle.is_none() {
                return None;
            }
            let est = fit_estimate(e, &data, &kernel, npmle.as_ref()).ok()?;
            distances(&est, truth, DEFAULT_TOL).ok()
        })
        .collect()
}

/// `√n`-scaled mean distances to the truth for every `(n, estimator, metric)`.
pub fn run_convergence_study(
    scenario: &Scenario,
    ns: &[usize],
    estimators: &[Estimator],
    reps: usize,
    seed: u64,
) -> Result<Vec<SimRecord>> {
    if reps == 0 || ns.is_empty() || estimators.is_empty() {
        return Err(Error::InvalidArgument("need reps >= 1, sample sizes and estimators".into()));
    }
    if ns.contains(&0) {
        return Err(Error::NoObservations);
    }
    let truth = scenario.truth().tabulate();
    let mut records = Vec::new();
    for &n in ns {
        let n_seed = child_seed(seed, &[n as u64]);
        let results: Vec<Vec<Option<crate::metrics::Distances>>> = (0..reps)
            .into_par_iter()
            .map(|r| one_replicate(scenario, &truth, n, estimators, n_seed, r as u64))
            .collect();
        let scale = (n as f64).sqrt();
        for (i, e) in estimators.iter().enumerate() {
            let ok: Vec<&crate::metrics::Distances> = results.iter().filter_map(|r| r[i].as_ref()).collect();
            let failed = reps - ok.len();
            if failed as f64 > MAX_FAILURE_RATE * reps as f64 || ok.is_empty() {
                return Err(Error::TooManyFailures { failed, total: reps });
            }
            for metric in Metric::ALL {
                let scaled: Vec<f64> = ok.iter().map(|d| scale * d.get(metric)).collect();
                let (mean, se) = mean_se(&scaled);
                records.push(SimRecord {
                    scenario: scenario.name.clone(),
                    n: n as u64,
                    estimator: e.to_string(),
                    metric,
                    scaled_mean: mean,
                    std_error: se,
                    reps: ok.len(),
                    seed,
                });
            }
        }
    }
    Ok(records)
}

/// Ratio of the empirical estimator's tail error to the NPMLE's tail error
/// beyond the largest observation, for one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRatio {
    pub h: f64,
    pub l1: f64,
    pub l2: f64,
}

impl TailRatio {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::H => self.h,
            Metric::L1 => self.l1,
            Metric::L2 => self.l2,
        }
    }
}

/// Tail ratios for a fitted mixture against the truth over `{k > max_obs}`.
/// `None` when the fitted tail matches the truth exactly in some metric.
pub fn tail_ratio(truth: &MixturePmf, fitted: &MixturePmf, max_obs: u64) -> Option<TailRatio> {
    let truth_tail = truth.tail_mass(max_obs);
    let stop = truth_tail.min(fitted.tail_mass(max_obs)) * 1e-14;
    let (mut sq0, mut dh, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0);
    let mut k = max_obs + 1;
    loop {
        let (p, q) = (truth.eval(k), fitted.eval(k));
        sq0 += p * p;
        let s = q.sqrt() - p.sqrt();
        dh += s * s;
        d1 += (q - p).abs();
        d2 += (q - p) * (q - p);
        if truth.tail_mass(k) <= stop && fitted.tail_mass(k) <= stop {
            break;
        }
        k += 1;
    }
    // leftover mass beyond the loop is below the stop level for both pmfs
    if dh <= 0.0 || d1 <= 0.0 || d2 <= 0.0 {
        return None;
    }
    Some(TailRatio {
        h: (truth_tail / dh).sqrt(),
        l1: truth_tail / d1,
        l2: (sq0 / d2).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRatioStudy {
    pub h: RatioSummary,
    pub l1: RatioSummary,
    pub l2: RatioSummary,
    pub ratios: Vec<TailRatio>,
    /// Replicates dropped for a zero denominator or a failed fit.
    pub dropped: usize,
}

fn summarize(mut v: Vec<f64>) -> RatioSummary {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    let median = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
    RatioSummary {
        mean: v.iter().sum::<f64>() / m as f64,
        median,
    }
}

pub fn tail_error_ratios(scenario: &Scenario, n: usize, reps: usize, seed: u64) -> Result<TailRatioStudy> {
    if reps < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 replications, got {reps}")));
    }
    if n == 0 {
        return Err(Error::NoObservations);
    }
    let truth = scenario.truth();
    let kernel = scenario.kernel;
    let results: Vec<Option<TailRatio>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let obs = truth.sample_with(n, &mut stream(seed, r as u64));
            let data = EmpiricalPmf::from_observations(&obs).ok()?;
            let fit = checked(fit_npmle_data(&data, &kernel, &FitConfig::for_data(&kernel, &data)).ok()?).ok()?;
            tail_ratio(&truth, &fit.mixture(kernel), data.max_value())
        })
        .collect();
    let ratios: Vec<TailRatio> = results.into_iter().flatten().collect();
    let dropped = reps - ratios.len();
    if ratios.is_empty() {
        return Err(Error::TooManyFailures { failed: dropped, total: reps });
    }
    let pick = |m: Metric| summarize(ratios.iter().map(|r| r.get(m)).collect());
    Ok(TailRatioStudy {
        h: pick(Metric::H),
        l1: pick(Metric::L1),
        l2: pick(Metric::L2),
        ratios,
        dropped,
    })
}
