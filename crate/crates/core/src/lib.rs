//! Estimation of mixtures of power series distributions from count data.
//!
//! The crate covers the four classical power-series kernels (Poisson,
//! geometric, negative binomial, logarithmic), discrete and continuous mixing
//! laws, and three estimators of the mixture pmf built on the nonparametric
//! maximum likelihood estimator (NPMLE):
//!
//! * [`npmle::fit_npmle`] — support-expansion constrained Newton method,
//! * [`wlse::fit_wlse`] — weighted least squares with weights `π̂_n^{-α}`,
//! * [`wlse::hybrid_estimate`] — empirical pmf below a data-driven cutoff,
//!   NPMLE above it.
//!
//! [`resampling`] adds percentile bootstrap intervals and two-fold
//! cross-validation; [`simlab`] holds the scenario registry and Monte Carlo
//! convergence studies.

pub mod error;
pub mod estimate;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod mixtures;
pub mod npmle;

pub mod pmf;
pub mod resampling;
mod quadrature;
pub mod rng;
pub mod simlab;
pub mod simplex_ls;
pub mod wlse;

pub use error::{Error, Result};
pub use kernels::{Family, KernelSpec, TheoryConstants};
pub use metrics::EmpiricalPmf;
pub use mixtures::{MixingDistribution, MixturePmf};
pub use pmf::Pmf;
