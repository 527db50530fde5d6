//! Weighted least-squares estimation of the mixture pmf and the hybrid
//! estimator.
//!
//! The WLSE minimizes `D_K(Q) = Σ_{k≤K} w(k) (π(k; Q) − π̄_n(k))²` with
//! weights `w(k) = π̂_n(k)^{−α}` taken from a fitted NPMLE. For a fixed support
//! the problem is exactly a simplex-constrained least squares problem, so
//! each outer iteration adds the local minimizers of the gradient function
//! and re-solves the weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::metrics::EmpiricalPmf;
use crate::mixtures::{MixingDistribution, MixturePmf};
use crate::npmle::{
    combine, fresh_candidates, into_mixing, retain_by, search_candidates, search_near, FitConfig, FitResult,
};
use crate::pmf::{horizon, Pmf};
use crate::simplex_ls::{solve_simplex_ls_from, LsProblem};

/// Tail level at which the NPMLE mixture is truncated.
const HORIZON_EPS: f64 = 1e-10;
/// Cells beyond the largest observation considered at most.
const HORIZON_EXTRA: u64 = 200;
const WEIGHT_FLOOR: f64 = 1e-300;
const WEIGHT_CAP: f64 = 1e15;
const MAX_HALVINGS: usize = 30;

/// Cell weights and empirical frequencies on `0..=K`.
#[derive(Debug, Clone)]
pub struct WlseSetup {
    pub horizon: u64,
    pub weights: Vec<f64>,
    pub empirical: Vec<f64>,
    /// Set when some weight hit the cap.
    pub capped: bool,
}

impl WlseSetup {
    pub fn new(data: &EmpiricalPmf, npmle: &MixturePmf, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        let max_obs = data.max_value();
        let k_max = horizon(npmle, HORIZON_EPS).min(max_obs + HORIZON_EXTRA).max(max_obs);
        let mut capped = false;
        let weights = (0..=k_max)
            .map(|k| {
                let w = npmle.eval(k).max(WEIGHT_FLOOR).powf(-alpha);
                if w > WEIGHT_CAP {
                    capped = true;
                    WEIGHT_CAP
                } else {
                    w
                }
            })
            .collect();
        let empirical = (0..=k_max).map(|k| data.prob(k)).collect();
        Ok(Self {
            horizon: k_max,
            weights,
            empirical,
            capped,
        })
    }

    fn column(&self, kernel: &KernelSpec, theta: f64) -> Vec<f64> {
        (0..=self.horizon).map(|k| kernel.pmf_at(theta, k)).collect()
    }

    fn objective(&self, pi: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.empirical)
            .zip(pi)
            .map(|((w, e), p)| w * (p - e) * (p - e))
            .sum()
    }

    fn gradient(&self, pi: &[f64], kernel: &KernelSpec, theta: f64) -> f64 {
        let mut s = 0.0;
        for (k, ((w, e), p)) in self.weights.iter().zip(&self.empirical).zip(pi).enumerate() {
            s += w * (p - e) * (kernel.pmf_at(theta, k as u64) - p);
        }
        2.0 * s
    }
}

/// Directional derivative of `D_K` at `Q` toward `δ_θ`, with the cell
/// weights `weights[k]` for `k ≤ K`.
pub fn wlse_gradient(
    theta: f64,
    mixing: &MixingDistribution,
    weights: &[f64],
    emp: &EmpiricalPmf,
    k_max: u64,
    kernel: &KernelSpec,
) -> Result<f64> {
    kernel.check_theta(theta)?;
    if weights.len() as u64 <= k_max {
        return Err(Error::InvalidArgument(format!(
            "need {} weights, got {}",
            k_max + 1,
            weights.len()
        )));
    }
    let mix = MixturePmf::new(*kernel, mixing.clone())?;
    let mut s = 0.0;
    for k in 0..=k_max {
        let p = mix.eval(k);
        s += weights[k as usize] * (p - emp.prob(k)) * (kernel.pmf_at(theta, k) - p);
    }
    Ok(2.0 * s)
}

/// Weighted squared distance `D_K(Q)` for an arbitrary mixing law.
pub fn wlse_objective(setup: &WlseSetup, kernel: &KernelSpec, mixing: &MixingDistribution) -> Result<f64> {
    let mix = MixturePmf::new(*kernel, mixing.clone())?;
    let pi: Vec<f64> = (0..=setup.horizon).map(|k| mix.eval(k)).collect();
    Ok(setup.objective(&pi))
}

/// Fits the WLSE with weights from `npmle`, which must be fitted on the
/// same observations.
pub fn fit_wlse(
    observations: &[u64],
    kernel: &KernelSpec,
    alpha: f64,
    npmle: &FitResult,
    config: &FitConfig,
) -> Result<FitResult> {
    let data = EmpiricalPmf::from_observations(observations)?;
    fit_wlse_data(&data, kernel, alpha, npmle, config)
}

pub fn fit_wlse_data(
    data: &EmpiricalPmf,
    kernel: &KernelSpec,
    alpha: f64,
    npmle: &FitResult,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate(kernel)?;
    let setup = WlseSetup::new(data, &npmle.mixture(*kernel), alpha)?;
    let rows = setup.horizon as usize + 1;
    let mut notes = Vec::new();
    if setup.capped {
        notes.push(format!("cell weights capped at {WEIGHT_CAP:e}"));
    }

    // start from the NPMLE restricted to the candidate domain
    let mut support: Vec<f64> = npmle
        .support()
        .iter()
        .map(|t| t.clamp(config.theta_lo, config.theta_hi))
        .collect();
    let mut weights = npmle.weights().to_vec();
    let mut columns: Vec<Vec<f64>> = support.iter().map(|&t| setup.column(kernel, t)).collect();
    let mut pi = combine(&columns, &weights, rows);
    let mut obj = setup.objective(&pi);
    let sq: Vec<f64> = setup.weights.iter().map(|w| w.sqrt()).collect();
    let target = DVector::from_iterator(rows, sq.iter().zip(&setup.empirical).map(|(s, e)| s * e));
    let gap = config.merge_tol * config.theta_hi.max(1.0);
    let tol = config.grad_tol;

    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_sup;
    loop {
        let grad = |t: f64| setup.gradient(&pi, kernel, t);
        let (mut candidates, mut sup) = search_candidates(&grad, config, config.grid_size, -1.0);
        let (near, near_sup) = search_near(&grad, config, &support, config.spacing(), -1.0);
        candidates.extend(near);
        sup = sup.max(near_sup);
        let at_support = support
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w > config.prune_tol)
            .map(|(&t, _)| grad(t).abs())
            .fold(0.0, f64::max);
        grad_sup = sup.max(at_support).max(0.0);
        if grad_sup <= tol {
            let (fine, fine_sup) = search_candidates(&grad, config, 10 * config.grid_size, -1.0);
            let (near, near_sup) = search_near(&grad, config, &support, 0.1 * config.spacing(), -1.0);
            sup = sup.max(fine_sup).max(near_sup);
            candidates.extend(near);
            grad_sup = sup.max(at_support).max(0.0);
            if grad_sup <= tol {
                converged = true;
                break;
            }
            candidates.extend(fine);
        }
        if iterations >= config.max_iter {
            break;
        }
        iterations += 1;

        let fresh = fresh_candidates(&support, candidates, gap);
        for &t in &fresh {
            support.push(t);
            columns.push(setup.column(kernel, t));
            weights.push(0.0);
        }
        let l = support.len();
        let design = DMatrix::from_fn(rows, l, |k, c| sq[k] * columns[c][k]);
        let problem = LsProblem::new(design, target.clone())?;
        let proposal = solve_simplex_ls_from(&problem, Some(&weights))?.weights;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = weights.iter().zip(&proposal).map(|(w, p)| w + t * (p - w)).collect();
            let trial_pi = combine(&columns, &trial, rows);
            let trial_obj = setup.objective(&trial_pi);
            if trial_obj <= obj {
                accepted = Some((trial, trial_pi, trial_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((new_w, new_pi, new_obj)) = accepted else {
            notes.push(format!("line search stalled at iteration {iterations}"));
            break;
        };
        let improvement = obj - new_obj;
        weights = new_w;
        pi = new_pi;
        obj = new_obj;

        let mut keep: Vec<bool> = weights.iter().map(|&w| w > config.prune_tol).collect();
        if keep.iter().any(|&k| !k) {
            let total: f64 = weights.iter().zip(&keep).filter(|(_, &k)| k).map(|(w, _)| w).sum();
            let pruned_w: Vec<f64> = weights.iter().zip(&keep).map(|(&w, &k)| if k { w / total } else { 0.0 }).collect();
            let pruned_pi = combine(&columns, &pruned_w, rows);
            let pruned_obj = setup.objective(&pruned_pi);
            if pruned_obj <= obj {
                weights = pruned_w;
                pi = pruned_pi;
                obj = pruned_obj;
            } else {
                keep = weights.iter().map(|&w| w > 0.0).collect();
            }
            retain_by(&mut columns, &keep);
            retain_by(&mut support, &keep);
            retain_by(&mut weights, &keep);
        }
        trace.push(obj);

        if fresh.is_empty() && improvement == 0.0 {
            notes.push(format!("no progress at iteration {iterations}"));
            break;
        }
    }

    let bound = data.max_value() as usize + 1;
    if support.len() > bound {
        notes.push(format!("support has {} points, above max observation + 1 = {bound}", support.len()));
    }
    Ok(FitResult {
        mixing: into_mixing(&support, &weights),
        objective: obj,
        grad_sup,
        iterations,
        converged,
        trace,
        notes,
    })
}

/// Empirical pmf up to a cutoff `K̃`, NPMLE beyond it. Not renormalized.
#[derive(Debug, Clone)]
pub struct HybridPmf {
    empirical: EmpiricalPmf,
    tail: MixturePmf,
    k_tilde: u64,
    total_mass: f64,
}

impl HybridPmf {
    pub fn k_tilde(&self) -> u64 {
        self.k_tilde
    }

    /// `Σ_{k ≤ K̃} π̄_n(k) + Σ_{k > K̃} π̂_n(k)`.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn empirical(&self) -> &EmpiricalPmf {
        &self.empirical
    }

    pub fn tail(&self) -> &MixturePmf {
        &self.tail
    }

    pub fn eval(&self, k: u64) -> f64 {
        self.prob(k)
    }
}

impl Pmf for HybridPmf {
    fn prob(&self, k: u64) -> f64 {
        if k <= self.k_tilde {
            self.empirical.prob(k)
        } else {
            self.tail.eval(k)
        }
    }

    fn tail_above(&self, k: u64) -> f64 {
        if k >= self.k_tilde {
            return self.tail.tail_mass(k);
        }
        let emp = self.empirical.tail_above(k) - self.empirical.tail_above(self.k_tilde);
        emp.max(0.0) + self.tail.tail_mass(self.k_tilde)
    }

    fn horizon_hint(&self) -> u64 {
        self.k_tilde.max(self.empirical.max_value()).max(self.tail.horizon_hint())
    }
}

/// Threshold `(ln n)^{-3}` on the NPMLE tail that fixes `K̃`.
pub fn hybrid_threshold(n: u64) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("hybrid estimator needs n >= 3, got {n}")));
    }
    Ok((n as f64).ln().powi(-3))
}

pub fn hybrid_estimate(emp: &EmpiricalPmf, npmle_mixture: &MixturePmf, n: u64) -> Result<HybridPmf> {
    let threshold = hybrid_threshold(n)?;
    // smallest K with tail ≤ threshold; tails are nonincreasing in K
    let mut hi = npmle_mixture.horizon_hint().max(1);
    while npmle_mixture.tail_mass(hi) > threshold {
        hi *= 2;
    }
    let mut lo = 0;
    if npmle_mixture.tail_mass(0) <= threshold {
        hi = 0;
    }
    while hi > lo + 1 {
        let mid = lo + (hi - lo) / 2;
        if npmle_mixture.tail_mass(mid) <= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let k_tilde = hi;
    let emp_mass = 1.0 - emp.tail_above(k_tilde);
    let total_mass = emp_mass + npmle_mixture.tail_mass(k_tilde);
    Ok(HybridPmf {
        empirical: emp.clone(),
        tail: npmle_mixture.clone(),
        k_tilde,
        total_mass,
    })
}
