//! `min ‖S p − b‖²` subject to `p ≥ 0` and `Σ p = 1`.
//!
//! Primal active-set method in the style of Lawson–Hanson. Each subproblem
//! solves the equality-constrained least squares problem on the current
//! passive set with the constraint eliminated by substitution
//! (`p_last = 1 − Σ p_rest`), so iterates stay exactly on the simplex.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LsProblem {
    design: DMatrix<f64>,
    target: DVector<f64>,
}

impl LsProblem {
    pub fn new(design: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        if design.ncols() == 0 || design.nrows() == 0 {
            return Err(Error::InvalidArgument("design must have at least one row and column".into()));
        }
        if design.nrows() != target.len() {
            return Err(Error::InvalidArgument(format!(
                "design has {} rows but target has {} entries",
                design.nrows(),
                target.len()
            )));
        }
        if design.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { design, target })
    }

    /// Row-major convenience constructor.
    pub fn from_rows(rows: &[Vec<f64>], target: &[f64]) -> Result<Self> {
        let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidArgument("ragged design rows".into()));
        }
        let design = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
        Self::new(design, DVector::from_column_slice(target))
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn objective(&self, p: &[f64]) -> f64 {
        let r = &self.design * DVector::from_column_slice(p) - &self.target;
        r.norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexLsSolution {
    pub weights: Vec<f64>,
    pub residual_norm: f64,
    pub kkt_gap: f64,
    /// `kkt_gap ≤ 1e-8 (1 + ‖b‖)` and the iteration cap was not hit.
    pub certified: bool,
    pub iterations: usize,
}

pub fn solve_simplex_ls(problem: &LsProblem) -> Result<SimplexLsSolution> {
    solve_simplex_ls_from(problem, None)
}

/// Same as [`solve_simplex_ls`], warm-started from a feasible point whose
/// positive entries form the initial passive set.
pub fn solve_simplex_ls_from(problem: &LsProblem, start: Option<&[f64]>) -> Result<SimplexLsSolution> {
    let s = &problem.design;
    let b = &problem.target;
    let n = s.ncols();
    let cap = (10 * n).max(100);

    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    match start {
        Some(p0) if p0.len() == n && p0.iter().all(|v| v.is_finite() && *v >= 0.0) && p0.iter().sum::<f64>() > 0.0 => {
            let total: f64 = p0.iter().sum();
            for j in 0..n {
                if p0[j] > 0.0 {
                    x[j] = p0[j] / total;
                    passive[j] = true;
                }
            }
        }
        _ => {
            let j = best_vertex(s, b);
            x[j] = 1.0;
            passive[j] = true;
        }
    }

    let b_norm = b.norm();
    let mut iterations = 0usize;
    let mut capped = false;
    let mut blocked = vec![false; n];

    'outer: loop {
        // inner loop: move toward the passive-set solution without leaving
        // the nonnegative orthant
        loop {
            let z = passive_solution(s, b, &passive);
            let mut step = f64::INFINITY;
            for j in 0..n {
                if passive[j] && z[j] <= 0.0 {
                    let denom = x[j] - z[j];
                    let t = if denom > 0.0 { x[j] / denom } else { 0.0 };
                    step = step.min(t);
                }
            }
            if step.is_infinite() {
                x = z;
                break;
            }
            let step = step.clamp(0.0, 1.0);
            for j in 0..n {
                if passive[j] {
                    x[j] += step * (z[j] - x[j]);
                }
            }
            // drop every coordinate that hit (or crossed) zero
            let mut dropped = false;
            for j in 0..n {
                if passive[j] && (x[j] <= 1e-15 || (z[j] <= 0.0 && x[j] <= 1e-12)) {
                    passive[j] = false;
                    x[j] = 0.0;
                    dropped = true;
                }
            }
            if !dropped {
                // numerical corner: remove the most negative target coordinate
                let j = (0..n)
                    .filter(|&j| passive[j])
                    .min_by(|&a, &c| z[a].total_cmp(&z[c]))
                    .expect("passive set nonempty");
                passive[j] = false;
                x[j] = 0.0;
            }
            if !passive.iter().any(|&p| p) {
                let j = best_vertex(s, b);
                x = vec![0.0; n];
                x[j] = 1.0;
                passive[j] = true;
            }
            renormalize(&mut x);
            iterations += 1;
            if iterations >= cap {
                capped = true;
                break 'outer;
            }
        }
        blocked.iter_mut().for_each(|v| *v = false);

        // pricing: enter the most attractive zero coordinate
        loop {
            let g = gradient(s, b, &x);
            let lambda = multiplier(&g, &passive);
            let scale = 1.0 + g.iter().fold(0.0f64, |m, v| m.max(v.abs())) + b_norm;
            let entering = (0..n)
                .filter(|&j| !passive[j] && !blocked[j])
                .filter(|&j| g[j] < lambda - 1e-11 * scale)
                .min_by(|&a, &c| g[a].total_cmp(&g[c]).then(a.cmp(&c)));
            let Some(j) = entering else {
                break 'outer;
            };
            passive[j] = true;
            let z = passive_solution(s, b, &passive);
            if z[j] > 0.0 {
                iterations += 1;
                if iterations >= cap {
                    capped = true;
                    break 'outer;
                }
                continue 'outer;
            }
            passive[j] = false;
            blocked[j] = true;
        }
    }

    let g = gradient(s, b, &x);
    let lambda = multiplier(&g, &passive);
    let mut gap = 0.0f64;
    for j in 0..n {
        if x[j] > 0.0 {
            gap = gap.max((g[j] - lambda).abs());
        } else {
            gap = gap.max(lambda - g[j]);
        }
    }
    let residual = (s * DVector::from_column_slice(&x) - b).norm();
    Ok(SimplexLsSolution {
        weights: x,
        residual_norm: residual,
        kkt_gap: gap,
        certified: !capped && gap <= 1e-8 * (1.0 + b_norm),
        iterations,
    })
}

fn best_vertex(s: &DMatrix<f64>, b: &DVector<f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for j in 0..s.ncols() {
        let r = (s.column(j) - b).norm_squared();
        if r < best.0 {
            best = (r, j);
        }
    }
    best.1
}

fn renormalize(x: &mut [f64]) {
    let total: f64 = x.iter().sum();
    if total > 0.0 {
        x.iter_mut().for_each(|v| *v /= total);
    }
}

/// Gradient of `‖Sx − b‖²`.
fn gradient(s: &DMatrix<f64>, b: &DVector<f64>, x: &[f64]) -> Vec<f64> {
    let r = s * DVector::from_column_slice(x) - b;
    (s.transpose() * r * 2.0).iter().copied().collect()
}

fn multiplier(g: &[f64], passive: &[bool]) -> f64 {
    let (sum, count) = g
        .iter()
        .zip(passive)
        .filter(|(_, &p)| p)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    sum / count.max(1) as f64
}

/// Minimizer of `‖Sx − b‖²` over `{x : Σx = 1, x_j = 0 off the passive set}`.
fn passive_solution(s: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> Vec<f64> {
    let n = s.ncols();
    let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
    let mut z = vec![0.0; n];
    let m = idx.len();
    if m == 1 {
        z[idx[0]] = 1.0;
        return z;
    }
    let last = idx[m - 1];
    let s_last = s.column(last);
    let reduced = DMatrix::from_fn(s.nrows(), m - 1, |i, c| s[(i, idx[c])] - s_last[i]);
    let rhs = b - s_last;
    let y = reduced_solution(&reduced, &rhs);
    let mut rest = 0.0;
    for (c, &j) in idx[..m - 1].iter().enumerate() {
        z[j] = y[c];
        rest += y[c];
    }
    z[last] = 1.0 - rest;
    z
}

/// Least squares `min ‖R y − r‖` by Householder QR, or a truncated SVD when
/// `R` is (nearly) rank deficient. nalgebra's SVD can lose several digits on
/// well-conditioned problems, so the SVD answer gets refinement steps.
fn reduced_solution(reduced: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let k = reduced.ncols();
    if reduced.nrows() >= k {
        let qr = reduced.clone().qr();
        let r = qr.r();
        let diag_max = (0..k).fold(0.0f64, |m, i| m.max(r[(i, i)].abs()));
        if (0..k).all(|i| r[(i, i)].abs() > 1e-10 * diag_max) {
            let qtb = qr.q().transpose() * rhs;
            if let Some(y) = r.solve_upper_triangular(&qtb) {
                return y;
            }
        }
    }
    let svd = reduced.clone().svd(true, true);
    let top = svd.singular_values.iter().fold(0.0f64, |a, v| a.max(*v));
    let eps = top * 1e-13;
    let mut y = svd.solve(rhs, eps).unwrap_or_else(|_| DVector::zeros(k));
    for _ in 0..3 {
        let resid = rhs - reduced * &y;
        match svd.solve(&resid, eps) {
            Ok(dy) => y += dy,
            Err(_) => break,
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(rows: &[Vec<f64>], b: &[f64]) -> LsProblem {
        LsProblem::from_rows(rows, b).unwrap()
    }

    #[test]
    fn identity_on_simplex() {
        let p = problem(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.3, 0.7]);
        let sol = solve_simplex_ls(&p).unwrap();
        assert!((sol.weights[0] - 0.3).abs() < 1e-14);
        assert!((sol.weights[1] - 0.7).abs() < 1e-14);
        assert!(sol.residual_norm < 1e-14);
        assert!(sol.certified);
    }

    #[test]
    fn single_column() {
        let p = problem(&[vec![3.0], vec![-2.0]], &[10.0, 4.0]);
        let sol = solve_simplex_ls(&p).unwrap();
        assert_eq!(sol.weights, vec![1.0]);
        assert!(sol.certified);
    }

    #[test]
    fn clipped_target() {
        let p = problem(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[-1.0, 0.2]);
        let sol = solve_simplex_ls(&p).unwrap();
        assert_eq!(sol.weights, vec![0.0, 1.0]);
        // brute force over a 1e-3 grid on the segment
        let best = (0..=1000)
            .map(|i| {
                let a = i as f64 / 1000.0;
                p.objective(&[a, 1.0 - a])
            })
            .fold(f64::INFINITY, f64::min);
        assert!(p.objective(&sol.weights) <= best + 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let d = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert_eq!(
            LsProblem::new(d, DVector::from_vec(vec![1.0])).unwrap_err(),
            Error::NonFinite
        );
    }

    #[test]
    fn duplicate_columns_do_not_stall() {
        let p = problem(
            &[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.5, 0.5, 0.5]],
            &[0.6, 0.4, 0.5],
        );
        let sol = solve_simplex_ls(&p).unwrap();
        let total: f64 = sol.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(sol.certified, "gap {}", sol.kkt_gap);
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let p = problem(
            &[vec![1.0, 0.2, 0.3], vec![0.1, 1.0, 0.4], vec![0.3, 0.2, 1.0], vec![0.5, 0.5, 0.5]],
            &[0.4, 0.5, 0.1, 0.2],
        );
        let cold = solve_simplex_ls(&p).unwrap();
        let warm = solve_simplex_ls_from(&p, Some(&[0.0, 0.0, 1.0])).unwrap();
        assert!((p.objective(&cold.weights) - p.objective(&warm.weights)).abs() < 1e-14);
    }
}
