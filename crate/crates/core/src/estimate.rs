//! Estimators of the mixture pmf behind one interface.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::metrics::EmpiricalPmf;
use crate::mixtures::MixturePmf;
use crate::npmle::{fit_npmle_data, FitConfig, FitResult};
use crate::pmf::Pmf;
use crate::wlse::{fit_wlse_data, hybrid_estimate, HybridPmf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "lowercase")]
pub enum Estimator {
    Empirical,
    /// The NPMLE.
    Mle,
    Hybrid,
    Wlse { alpha: f64 },
}

impl Estimator {
    /// The WLSE weights used in the convergence-rate figures.
    pub const WLSE_ALPHAS: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

    pub fn wlse(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        Ok(Estimator::Wlse { alpha })
    }

    pub fn needs_npmle(&self) -> bool {
        !matches!(self, Estimator::Empirical)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Empirical => write!(f, "empirical"),
            Estimator::Mle => write!(f, "mle"),
            Estimator::Hybrid => write!(f, "hybrid"),
            Estimator::Wlse { alpha } => write!(f, "wlse:{alpha}"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "empirical" | "emp" => Ok(Estimator::Empirical),
            "mle" | "npmle" => Ok(Estimator::Mle),
            "hybrid" => Ok(Estimator::Hybrid),
            other => match other.strip_prefix("wlse:") {
                Some(a) => {
                    let alpha: f64 = a
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad WLSE alpha `{a}`")))?;
                    Estimator::wlse(alpha)
                }
                None => Err(Error::InvalidArgument(format!(
                    "unknown estimator `{s}`; expected empirical, mle, hybrid or wlse:<alpha>"
                ))),
            },
        }
    }
}

/// A fitted pmf estimate.
#[derive(Debug, Clone)]
pub enum Estimate {
    Empirical(EmpiricalPmf),
    Mixture(MixturePmf),
    Hybrid(HybridPmf),
}

impl Pmf for Estimate {
    fn prob(&self, k: u64) -> f64 {
        match self {
            Estimate::Empirical(e) => e.prob(k),
            Estimate::Mixture(m) => m.prob(k),
            Estimate::Hybrid(h) => h.prob(k),
        }
    }

    fn tail_above(&self, k: u64) -> f64 {
        match self {
            Estimate::Empirical(e) => e.tail_above(k),
            Estimate::Mixture(m) => m.tail_above(k),
            Estimate::Hybrid(h) => h.tail_above(k),
        }
    }

    fn horizon_hint(&self) -> u64 {
        match self {
            Estimate::Empirical(e) => e.horizon_hint(),
            Estimate::Mixture(m) => m.horizon_hint(),
            Estimate::Hybrid(h) => h.horizon_hint(),
        }
    }
}

/// Fits one estimator; `npmle` is reused if already available for the same
/// data. Fits that do not converge are reported as errors.
pub fn fit_estimate(
    estimator: Estimator,
    data: &EmpiricalPmf,
    kernel: &KernelSpec,
    npmle: Option<&FitResult>,
) -> Result<Estimate> {
    if estimator == Estimator::Empirical {
        return Ok(Estimate::Empirical(data.clone()));
    }
    let config = FitConfig::for_data(kernel, data);
    let owned;
    let npmle = match npmle {
        Some(f) => f,
        None => {
            owned = checked(fit_npmle_data(data, kernel, &config)?)?;
            &owned
        }
    };
    match estimator {
        Estimator::Empirical => unreachable!(),
        Estimator::Mle => Ok(Estimate::Mixture(npmle.mixture(*kernel))),
        Estimator::Hybrid => Ok(Estimate::Hybrid(hybrid_estimate(data, &npmle.mixture(*kernel), data.n())?)),
        Estimator::Wlse { alpha } => {
            let fit = checked(fit_wlse_data(data, kernel, alpha, npmle, &config)?)?;
            Ok(Estimate::Mixture(fit.mixture(*kernel)))
        }
    }
}

/// Turns a non-converged fit into an error.
pub fn checked(fit: FitResult) -> Result<FitResult> {
    if fit.converged {
        Ok(fit)
    } else {
        Err(Error::Precondition(format!(
            "fit did not converge after {} iterations (gradient violation {:e})",
            fit.iterations, fit.grad_sup
        )))
    }
}
