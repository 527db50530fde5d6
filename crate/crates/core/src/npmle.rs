//! Nonparametric maximum likelihood estimation of the mixing law.
//!
//! The solver alternates between two steps until the gradient function
//! `d(θ; Q) = Σ_j n_j f_θ(k_j)/π(k_j; Q) − n` is nonpositive everywhere:
//!
//! 1. add every local maximizer of `d` with `d > 0` to the support;
//! 2. re-solve the weights on the enlarged support from the quadratic model
//!    of the log-likelihood, `min ‖A p − c‖²` over the simplex, followed by a
//!    backtracking line search that keeps the log-likelihood nondecreasing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Family, KernelSpec};
use crate::metrics::EmpiricalPmf;
use crate::mixtures::{MixingDistribution, MixturePmf};
use crate::simplex_ls::{solve_simplex_ls_from, LsProblem};

const GOLDEN_STEPS: usize = 40;
const MAX_HALVINGS: usize = 30;
/// Upper end of the default domain for finite-radius kernels is `R − GUARD`.
const GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub grid_size: usize,
    pub grad_tol: f64,
    pub obj_tol: f64,
    pub prune_tol: f64,
    pub merge_tol: f64,
    pub max_iter: usize,
}

impl FitConfig {
    /// Default settings on `[theta_lo, theta_hi]`.
    pub fn with_domain(theta_lo: f64, theta_hi: f64) -> Self {
        Self {
            theta_lo,
            theta_hi,
            grid_size: 100,
            grad_tol: 1e-6,
            obj_tol: 1e-8,
            prune_tol: 1e-10,
            merge_tol: 1e-6,
            max_iter: 500,
        }
    }

    /// Default settings with the domain `[0, max + 1]` for Poisson and
    /// `[0, R − 1e-6]` otherwise.
    pub fn for_data(kernel: &KernelSpec, data: &EmpiricalPmf) -> Self {
        let hi = match kernel.family() {
            Family::Poisson => data.max_value() as f64 + 1.0,
            _ => kernel.radius() - GUARD,
        };
        Self::with_domain(0.0, hi)
    }

    pub fn validate(&self, kernel: &KernelSpec) -> Result<()> {
        if !(self.theta_lo >= 0.0 && self.theta_lo < self.theta_hi && self.theta_hi < kernel.radius()) {
            return Err(Error::InvalidArgument(format!(
                "candidate domain [{}, {}] must satisfy 0 <= lo < hi < {}",
                self.theta_lo,
                self.theta_hi,
                kernel.radius()
            )));
        }
        if self.grid_size < 10 {
            return Err(Error::InvalidArgument(format!("grid_size must be >= 10, got {}", self.grid_size)));
        }
        let positive = [self.grad_tol, self.obj_tol, self.prune_tol, self.merge_tol];
        if positive.iter().any(|v| !(*v > 0.0)) || self.max_iter == 0 {
            return Err(Error::InvalidArgument("tolerances and max_iter must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn grid(&self, size: usize) -> Vec<f64> {
        let step = (self.theta_hi - self.theta_lo) / (size - 1) as f64;
        (0..size).map(|i| self.theta_lo + step * i as f64).collect()
    }

    /// Spacing of the default search grid.
    pub(crate) fn spacing(&self) -> f64 {
        (self.theta_hi - self.theta_lo) / (self.grid_size - 1) as f64
    }

    fn merge_gap(&self) -> f64 {
        self.merge_tol * self.theta_hi.max(1.0)
    }
}

/// Output of an NPMLE or WLSE fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Always [`MixingDistribution::Discrete`].
    pub mixing: MixingDistribution,
    /// Log-likelihood (NPMLE) or weighted sum of squares (WLSE).
    pub objective: f64,
    /// Largest violation of the optimality condition.
    pub grad_sup: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each outer iteration, starting from the initial point.
    pub trace: Vec<f64>,
    /// Diagnostics that do not invalidate the fit.
    pub notes: Vec<String>,
}

impl FitResult {
    pub fn support(&self) -> &[f64] {
        self.mixing.atoms().expect("fits are discrete").0
    }

    pub fn weights(&self) -> &[f64] {
        self.mixing.atoms().expect("fits are discrete").1
    }

    pub fn mixture(&self, kernel: KernelSpec) -> MixturePmf {
        MixturePmf::new(kernel, self.mixing.clone()).expect("fitted support lies inside the domain")
    }
}

/// Observed cells `(k_j, n_j)` in a form convenient for the solvers.
#[derive(Debug, Clone)]
pub(crate) struct Cells {
    pub ks: Vec<u64>,
    pub ns: Vec<f64>,
    pub n: f64,
}

impl Cells {
    pub fn new(data: &EmpiricalPmf) -> Self {
        let (ks, ns): (Vec<u64>, Vec<f64>) = data.cells().map(|(k, c)| (k, c as f64)).unzip();
        Self { ks, ns, n: data.n() as f64 }
    }

    pub fn column(&self, kernel: &KernelSpec, theta: f64) -> Vec<f64> {
        self.ks.iter().map(|&k| kernel.pmf_at(theta, k)).collect()
    }
}

/// `Σ_j n_j log π(k_j; Q)`; `−∞` if some observed cell has zero mass.
pub fn loglik(data: &EmpiricalPmf, kernel: &KernelSpec, mixing: &MixingDistribution) -> f64 {
    let mix = MixturePmf::new(*kernel, mixing.clone());
    let Ok(mix) = mix else { return f64::NAN };
    data.cells()
        .map(|(k, c)| {
            let p = mix.eval(k);
            if p > 0.0 {
                c as f64 * p.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .sum()
}

/// Directional derivative of the log-likelihood at `Q` toward `δ_θ`.
pub fn loglik_gradient(theta: f64, data: &EmpiricalPmf, kernel: &KernelSpec, mixing: &MixingDistribution) -> Result<f64> {
    kernel.check_theta(theta)?;
    let mix = MixturePmf::new(*kernel, mixing.clone())?;
    let mut s = 0.0;
    for (k, c) in data.cells() {
        let p = mix.eval(k);
        if p <= 0.0 {
            return Err(Error::Precondition(format!("mixture assigns zero mass to observed value {k}")));
        }
        s += c as f64 * kernel.pmf_at(theta, k) / p;
    }
    Ok(s - data.n() as f64)
}

/// Candidate search shared by both estimators: local maximizers of
/// `sign · g` on a uniform grid with `sign · g > 0`, each refined by golden
/// section. Returns the candidates and the largest value of `sign · g` seen.
pub(crate) fn search_candidates(
    g: &dyn Fn(f64) -> f64,
    config: &FitConfig,
    grid_size: usize,
    sign: f64,
) -> (Vec<f64>, f64) {
    let grid = config.grid(grid_size);
    let vals: Vec<f64> = grid.iter().map(|&t| sign * g(t)).collect();
    let m = grid.len();
    let mut best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut found = Vec::new();
    for i in 0..m {
        let v = vals[i];
        if !(v > 0.0) {
            continue;
        }
        let left = if i > 0 { vals[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < m { vals[i + 1] } else { f64::NEG_INFINITY };
        let is_peak = (v > left && v >= right) || (v >= left && v > right);
        if !is_peak {
            continue;
        }
        let a = grid[i.saturating_sub(1)];
        let b = grid[(i + 1).min(m - 1)];
        let (t, tv) = golden_max(&|t| sign * g(t), a, b, (grid[i], v));
        best = best.max(tv);
        found.push(t);
    }
    (found, best)
}

/// Golden-section search of `sign · g` within `radius` of each point in
/// `around`. The gradient can peak sharply between two close atoms, where a
/// uniform grid does not see it.
pub(crate) fn search_near(
    g: &dyn Fn(f64) -> f64,
    config: &FitConfig,
    around: &[f64],
    radius: f64,
    sign: f64,
) -> (Vec<f64>, f64) {
    let mut found = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for &s in around {
        let a = (s - radius).max(config.theta_lo);
        let b = (s + radius).min(config.theta_hi);
        let (t, v) = golden_max(&|t| sign * g(t), a, b, (s, sign * g(s)));
        best = best.max(v);
        if v > 0.0 {
            found.push(t);
        }
    }
    (found, best)
}

/// Golden-section maximization on `[a, b]`; `seed` is a known point whose
/// value is kept if refinement does not beat it.
fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, seed: (f64, f64)) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut best = seed;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_STEPS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    for (t, v) in [(c, fc), (d, fd), (a, f(a)), (b, f(b))] {
        if v > best.1 {
            best = (t, v);
        }
    }
    best
}

/// Drops candidates within `gap` of an existing point or of each other.
pub(crate) fn fresh_candidates(existing: &[f64], mut candidates: Vec<f64>, gap: f64) -> Vec<f64> {
    candidates.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for t in candidates {
        let near = existing.iter().chain(out.iter()).any(|&s| (s - t).abs() <= gap);
        if !near {
            out.push(t);
        }
    }
    out
}

/// Removes support points without changing the fitted cell probabilities
/// until the kernel columns (plus the row of ones) are affinely independent,
/// so the support has at most one point per row.
pub(crate) fn reduce_support(columns: &mut Vec<Vec<f64>>, support: &mut Vec<f64>, weights: &mut Vec<f64>, rows: usize) {
    while support.len() > rows {
        let m = support.len();
        // square (zero-padded) system so the SVD exposes the whole null space
        let size = m.max(rows + 1);
        let mat = DMatrix::from_fn(size, m, |i, l| match i {
            i if i < rows => columns[l][i],
            i if i == rows => 1.0,
            _ => 0.0,
        });
        let svd = mat.svd(false, true);
        let Some(v_t) = svd.v_t else { return };
        let sv = &svd.singular_values;
        let top = sv.iter().fold(0.0f64, |a, v| a.max(*v));
        let idx = (0..sv.len()).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).expect("nonempty");
        if sv[idx] > 1e-10 * top {
            return;
        }
        let mut z: Vec<f64> = (0..m).map(|l| v_t[(idx, l)]).collect();
        if !z.iter().any(|&v| v > 0.0) {
            z.iter_mut().for_each(|v| *v = -*v);
        }
        // move along the null direction until the first weight hits zero
        let mut step = f64::INFINITY;
        let mut hit = 0;
        for l in 0..m {
            if z[l] > 0.0 && weights[l] / z[l] < step {
                step = weights[l] / z[l];
                hit = l;
            }
        }
        for l in 0..m {
            weights[l] = (weights[l] - step * z[l]).max(0.0);
        }
        weights[hit] = 0.0;
        let keep: Vec<bool> = weights.iter().map(|&w| w > 0.0).collect();
        retain_by(columns, &keep);
        retain_by(support, &keep);
        retain_by(weights, &keep);
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }
}

pub(crate) fn retain_by<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut i = 0;
    v.retain(|_| {
        i += 1;
        keep[i - 1]
    });
}

/// Sorts the support and packages it as a discrete mixing law.
pub(crate) fn into_mixing(support: &[f64], weights: &[f64]) -> MixingDistribution {
    let mut pairs: Vec<(f64, f64)> = support.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (s, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    MixingDistribution::discrete(s, w).expect("fitted weights form a probability vector")
}

pub(crate) fn combine(columns: &[Vec<f64>], weights: &[f64], rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for (col, &w) in columns.iter().zip(weights) {
        if w != 0.0 {
            for (o, c) in out.iter_mut().zip(col) {
                *o += w * c;
            }
        }
    }
    out
}

fn cell_loglik(cells: &Cells, pi: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&n, &p) in cells.ns.iter().zip(pi) {
        if !(p > 0.0) {
            return f64::NEG_INFINITY;
        }
        s += n * p.ln();
    }
    s
}

fn cell_gradient(cells: &Cells, pi: &[f64], kernel: &KernelSpec, theta: f64) -> f64 {
    let mut s = 0.0;
    for ((&k, &n), &p) in cells.ks.iter().zip(&cells.ns).zip(pi) {
        s += n * kernel.pmf_at(theta, k) / p;
    }
    s - cells.n
}

/// Fits the NPMLE with default settings.
pub fn fit_npmle_default(observations: &[u64], kernel: &KernelSpec) -> Result<FitResult> {
    let data = EmpiricalPmf::from_observations(observations)?;
    let config = FitConfig::for_data(kernel, &data);
    fit_npmle_data(&data, kernel, &config)
}

pub fn fit_npmle(observations: &[u64], kernel: &KernelSpec, config: &FitConfig) -> Result<FitResult> {
    let data = EmpiricalPmf::from_observations(observations)?;
    fit_npmle_data(&data, kernel, config)
}

/// [`fit_npmle`] on data already tabulated.
pub fn fit_npmle_data(data: &EmpiricalPmf, kernel: &KernelSpec, config: &FitConfig) -> Result<FitResult> {
    config.validate(kernel)?;
    let cells = Cells::new(data);
    let rows = cells.ks.len();
    let tol = config.grad_tol * cells.n;
    let gap = config.merge_gap();
    let mut notes = Vec::new();
    let spacing = config.spacing();

    let span = config.theta_hi - config.theta_lo;
    let mut support = vec![config.theta_lo + 0.25 * span, config.theta_lo + 0.75 * span];
    let mut weights = vec![0.5, 0.5];
    let mut columns: Vec<Vec<f64>> = support.iter().map(|&t| cells.column(kernel, t)).collect();
    let mut pi = combine(&columns, &weights, rows);
    let mut ll = cell_loglik(&cells, &pi);
    if !ll.is_finite() {
        support = config.grid(config.grid_size);
        weights = vec![1.0 / support.len() as f64; support.len()];
        columns = support.iter().map(|&t| cells.column(kernel, t)).collect();
        pi = combine(&columns, &weights, rows);
        ll = cell_loglik(&cells, &pi);
        if !ll.is_finite() {
            return Err(Error::Precondition(
                "no mixing law on the candidate domain gives every observation positive mass".into(),
            ));
        }
    }

    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_sup;
    loop {
        let grad = |t: f64| cell_gradient(&cells, &pi, kernel, t);
        let (mut candidates, mut sup) = search_candidates(&grad, config, config.grid_size, 1.0);
        let (near, near_sup) = search_near(&grad, config, &support, spacing, 1.0);
        candidates.extend(near);
        sup = sup.max(near_sup);
        let at_support = support
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w > config.prune_tol)
            .map(|(&t, _)| grad(t).abs())
            .fold(0.0, f64::max);
        grad_sup = sup.max(at_support);
        if grad_sup <= tol {
            // confirm on a ten times finer grid before declaring optimality
            let (fine, fine_sup) = search_candidates(&grad, config, 10 * config.grid_size, 1.0);
            let (near, near_sup) = search_near(&grad, config, &support, 0.1 * spacing, 1.0);
            sup = sup.max(fine_sup).max(near_sup);
            candidates.extend(near);
            grad_sup = sup.max(at_support);
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
            columns.push(cells.column(kernel, t));
            weights.push(0.0);
        }

        // quadratic model of the log-likelihood around the current fit
        let l = support.len();
        let sq: Vec<f64> = cells.ns.iter().map(|v| v.sqrt()).collect();
        let design = DMatrix::from_fn(rows, l, |j, c| sq[j] * columns[c][j] / pi[j]);
        let target = DVector::from_iterator(rows, sq.iter().map(|v| 2.0 * v));
        let problem = LsProblem::new(design, target)?;
        let step = solve_simplex_ls_from(&problem, Some(&weights))?;

        // backtrack toward the current weights until the likelihood does not drop
        let proposal = step.weights;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = weights.iter().zip(&proposal).map(|(w, p)| w + t * (p - w)).collect();
            let trial_pi = combine(&columns, &trial, rows);
            let trial_ll = cell_loglik(&cells, &trial_pi);
            if trial_ll >= ll {
                accepted = Some((trial, trial_pi, trial_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((new_w, new_pi, new_ll)) = accepted else {
            notes.push(format!("line search stalled at iteration {iterations}"));
            break;
        };
        let improvement = new_ll - ll;
        weights = new_w;
        pi = new_pi;
        ll = new_ll;

        // drop exact zeros always, tiny weights only when that does not lower the likelihood
        let mut keep: Vec<bool> = weights.iter().map(|&w| w > config.prune_tol).collect();
        if keep.iter().any(|&k| !k) {
            let pruned_w: Vec<f64> = {
                let total: f64 = weights.iter().zip(&keep).filter(|(_, &k)| k).map(|(w, _)| w).sum();
                weights.iter().zip(&keep).map(|(&w, &k)| if k { w / total } else { 0.0 }).collect()
            };
            let pruned_pi = combine(&columns, &pruned_w, rows);
            let pruned_ll = cell_loglik(&cells, &pruned_pi);
            if pruned_ll >= ll {
                weights = pruned_w;
                pi = pruned_pi;
                ll = pruned_ll;
            } else {
                keep = weights.iter().map(|&w| w > 0.0).collect();
            }
            retain_by(&mut columns, &keep);
            retain_by(&mut support, &keep);
            retain_by(&mut weights, &keep);
        }
        trace.push(ll);

        if fresh.is_empty() && improvement <= config.obj_tol * ll.abs().max(1.0) && improvement == 0.0 {
            notes.push(format!("no progress at iteration {iterations}"));
            break;
        }
    }

    if support.len() > rows {
        reduce_support(&mut columns, &mut support, &mut weights, rows);
        pi = combine(&columns, &weights, rows);
        ll = cell_loglik(&cells, &pi);
    }
    Ok(FitResult {
        mixing: into_mixing(&support, &weights),
        objective: ll,
        grad_sup,
        iterations,
        converged,
        trace,
        notes,
    })
}
