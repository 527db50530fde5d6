//! Browser bindings for the `www/index.html` demo.
//!
//! Each exported function has a plain Rust twin returning `Result<_, String>`
//! so the logic runs and is tested on the host; the `#[wasm_bindgen]`
//! wrappers only convert errors.

use psmix::estimate::{fit_estimate, Estimator};
use psmix::io::{load_counts, parse_counts};
use psmix::npmle::{fit_npmle_data, FitConfig};
use psmix::resampling::{bootstrap_ci, CiMode};
use psmix::simlab::{scenario, REGISTRY};
use psmix::{EmpiricalPmf, KernelSpec, MixturePmf, Pmf};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest `k` shown in any chart.
pub const MAX_K: u64 = 400;

#[derive(Debug, Serialize)]
pub struct Curve {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct FitView {
    pub k_max: u64,
    pub n: u64,
    pub curves: Vec<Curve>,
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
    pub k_tilde: u64,
}

#[derive(Debug, Serialize)]
pub struct BandView {
    pub k_values: Vec<u64>,
    pub empirical: Vec<f64>,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub dropped: usize,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn parse_kernel(kernel: &str) -> Result<KernelSpec, String> {
    kernel.parse().map_err(err)
}

/// `builtin:<name>` loads a builtin dataset; anything else is count-file text.
fn observations(source: &str) -> Result<Vec<u64>, String> {
    match source.strip_prefix("builtin:") {
        Some(name) => load_counts(name).map(|d| d.observations).map_err(err),
        None => parse_counts(source).map_err(err),
    }
}

fn tabulate<P: Pmf + ?Sized>(p: &P, k_max: u64) -> Vec<f64> {
    (0..=k_max).map(|k| p.prob(k)).collect()
}

pub fn kernel_pmf_values(kernel: &str, theta: f64, k_max: u32) -> Result<Vec<f64>, String> {
    let kernel = parse_kernel(kernel)?;
    kernel.check_theta(theta).map_err(err)?;
    Ok((0..=u64::from(k_max).min(MAX_K)).map(|k| kernel.pmf_at(theta, k)).collect())
}

pub fn scenario_names() -> Vec<String> {
    REGISTRY.iter().map(|s| s.to_string()).collect()
}

/// Fits the empirical, NPMLE, hybrid and WLSE estimators to `observations`
/// and tabulates them next to `truth` when one is known.
fn fit_view(obs: &[u64], kernel: KernelSpec, alpha: f64, truth: Option<&MixturePmf>) -> Result<FitView, String> {
    let data = EmpiricalPmf::from_observations(obs).map_err(err)?;
    let npmle = fit_npmle_data(&data, &kernel, &FitConfig::for_data(&kernel, &data)).map_err(err)?;
    let k_max = (data.max_value() + data.max_value() / 2 + 5).min(MAX_K);
    let mut curves = Vec::new();
    if let Some(t) = truth {
        curves.push(Curve {
            label: "truth".into(),
            values: tabulate(t, k_max),
        });
    }
    let mut k_tilde = 0;
    for est in [Estimator::Empirical, Estimator::Mle, Estimator::Hybrid, Estimator::wlse(alpha).map_err(err)?] {
        let fitted = fit_estimate(est, &data, &kernel, Some(&npmle)).map_err(err)?;
        if let psmix::estimate::Estimate::Hybrid(h) = &fitted {
            k_tilde = h.k_tilde();
        }
        curves.push(Curve {
            label: est.to_string(),
            values: tabulate(&fitted, k_max),
        });
    }
    Ok(FitView {
        k_max,
        n: data.n(),
        curves,
        support: npmle.support().to_vec(),
        weights: npmle.weights().to_vec(),
        k_tilde,
    })
}

pub fn fit_scenario_view(name: &str, n: u32, seed: u64, alpha: f64) -> Result<FitView, String> {
    let sc = scenario(name).map_err(err)?;
    if n == 0 {
        return Err("sample size must be positive".into());
    }
    let truth = sc.truth();
    let obs = truth.sample(n as usize, seed);
    fit_view(&obs, sc.kernel, alpha, Some(&truth))
}

pub fn fit_counts_view(source: &str, kernel: &str, alpha: f64) -> Result<FitView, String> {
    fit_view(&observations(source)?, parse_kernel(kernel)?, alpha, None)
}

pub fn bootstrap_view(source: &str, kernel: &str, mode: &str, b: u32, seed: u64) -> Result<BandView, String> {
    let obs = observations(source)?;
    let kernel = parse_kernel(kernel)?;
    let mode: CiMode = mode.parse().map_err(err)?;
    let data = EmpiricalPmf::from_observations(&obs).map_err(err)?;
    let k_max = (data.max_value() + 5).min(MAX_K);
    let table = bootstrap_ci(&obs, &kernel, mode, b as usize, 0.95, 0..=k_max, None, seed).map_err(err)?;
    Ok(BandView {
        empirical: table.k_values.iter().map(|&k| data.prob(k)).collect(),
        k_values: table.k_values,
        point: table.point,
        lower: table.lower,
        upper: table.upper,
        dropped: table.dropped,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("plain data serializes"))
        .map_err(|e| JsError::new(&e))
}

/// Pmf of one kernel at `theta` for `k = 0..=k_max`.
#[wasm_bindgen]
pub fn kernel_pmf(kernel: &str, theta: f64, k_max: u32) -> Result<Vec<f64>, JsError> {
    kernel_pmf_values(kernel, theta, k_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn scenarios() -> String {
    serde_json::to_string(&scenario_names()).expect("strings serialize")
}

/// JSON [`FitView`] for a sample of size `n` drawn from a registry scenario.
#[wasm_bindgen]
pub fn fit_scenario(name: &str, n: u32, seed: u64, alpha: f64) -> Result<String, JsError> {
    to_js(fit_scenario_view(name, n, seed, alpha))
}

/// JSON [`FitView`] for pasted counts or `builtin:earthquakes`.
#[wasm_bindgen]
pub fn fit_counts(source: &str, kernel: &str, alpha: f64) -> Result<String, JsError> {
    to_js(fit_counts_view(source, kernel, alpha))
}

/// JSON [`BandView`]: 95% percentile bootstrap band of the NPMLE pmf.
#[wasm_bindgen]
pub fn bootstrap_band(source: &str, kernel: &str, mode: &str, b: u32, seed: u64) -> Result<String, JsError> {
    to_js(bootstrap_view(source, kernel, mode, b, seed))
}
