//! Computable constants governing the tail of an admissible mixture.

use serde::{Deserialize, Serialize};

use super::KernelSpec;
use crate::error::{Error, Result};

/// Number of consecutive indices the coefficient growth condition must hold
/// for before `V` is accepted.
const V_RUN: u64 = 200;
const V_SCAN_LIMIT: u64 = 1_000_000;
const W_SCAN_LIMIT: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub t0: f64,
    pub theta_tilde: f64,
    pub u: u64,
    pub v: u64,
    pub w: u64,
    pub a: f64,
    /// Sample-size threshold; may exceed `u64` range, hence stored as a float.
    pub n0: f64,
}

/// Constants for a kernel whose mixing law is supported on `[0, support_bound]`.
///
/// `support_bound` is `q0·R` for finite radius and `M` for Poisson.
pub fn theory_constants(
    kernel: &KernelSpec,
    support_bound: f64,
    delta0: f64,
    eta0: f64,
) -> Result<TheoryConstants> {
    let radius = kernel.radius();
    if !(support_bound > 0.0 && support_bound < radius) {
        return Err(Error::Domain {
            family: kernel.name(),
            value: support_bound,
            radius,
        });
    }
    if !(delta0 > 0.0 && delta0 <= support_bound) {
        return Err(Error::InvalidArgument(format!(
            "delta0 must lie in (0, {support_bound}], got {delta0}"
        )));
    }
    if !(eta0 > 0.0 && eta0 < 1.0) {
        return Err(Error::InvalidArgument(format!("eta0 must lie in (0, 1), got {eta0}")));
    }

    let theta_tilde = support_bound;
    let t0 = if radius.is_finite() {
        let q0 = support_bound / radius;
        (q0 + 1.0) / 2.0
    } else {
        0.5
    };

    let u_raw = theta_tilde * kernel.sup_log_derivative(theta_tilde);
    // a hair of slack so products like 0.9 * 10 do not floor to 8
    let u = (u_raw * (1.0 + 1e-12)).floor() as u64 + 1;

    let threshold = t0 / theta_tilde;
    let mut w = 3u64;
    while kernel.sup_ratio_from(w) > threshold {
        w += 1;
        if w > W_SCAN_LIMIT {
            return Err(Error::Precondition("ratio bound never satisfied".into()));
        }
    }

    let v = scan_v(kernel)?;

    let ln_fw = kernel.ln_pmf_at(theta_tilde, w);
    let ln_scale = -((w - 1) as f64) * t0.ln() - (1.0 - t0).ln();
    let a = (ln_fw + ln_scale).exp();

    let b0 = kernel.ln_coeff(0).exp();
    let b_delta = kernel.ln_normalizer(delta0).exp();
    let exponent_arg = (u as f64)
        .max(v as f64)
        .max(w as f64)
        .max(b_delta / (b0 * eta0))
        .max(1.0 / delta0);
    let first = ((-0.5 * t0.ln()) * exponent_arg).exp();
    let second = ln_scale.exp();
    let n0 = first.max(second).floor() + 1.0;

    Ok(TheoryConstants {
        t0,
        theta_tilde,
        u,
        v,
        w,
        a,
        n0,
    })
}

/// Smallest `V ≥ 1` from which `b_k/b_0 ≥ k^{-k}` holds on a run of
/// [`V_RUN`] consecutive indices.
fn scan_v(kernel: &KernelSpec) -> Result<u64> {
    let ln_b0 = kernel.ln_coeff(0);
    let holds = |k: u64| {
        let kf = k as f64;
        kernel.ln_coeff(k) - ln_b0 >= -kf * kf.ln() - 1e-12
    };
    let mut start = 1u64;
    let mut k = 1u64;
    while k - start < V_RUN {
        if !holds(k) {
            start = k + 1;
        }
        k += 1;
        if k > V_SCAN_LIMIT {
            return Err(Error::Precondition("coefficient growth condition not found".into()));
        }
    }
    Ok(start)
}

/// `A · t0^K`, an upper bound on `Σ_{k>K} π0(k)` valid for `K ≥ max(U, W)`.
pub fn tail_bound(constants: &TheoryConstants, k: u64) -> Result<f64> {
    let min_k = constants.u.max(constants.w);
    if k < min_k {
        return Err(Error::Precondition(format!(
            "tail bound requires K >= max(U, W) = {min_k}, got {k}"
        )));
    }
    Ok((constants.a.ln() + k as f64 * constants.t0.ln()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_m5() {
        let c = theory_constants(&KernelSpec::poisson(), 5.0, 0.5, 0.5).unwrap();
        assert_eq!(c.t0, 0.5);
        assert_eq!(c.theta_tilde, 5.0);
        assert_eq!(c.u, 6);
        assert_eq!(c.w, 9);
        assert_eq!(c.v, 1);
    }

    #[test]
    fn geometric_q09() {
        let c = theory_constants(&KernelSpec::geometric(), 0.9, 0.1, 0.5).unwrap();
        assert!((c.theta_tilde - 0.9).abs() < 1e-15);
        assert!((c.t0 - 0.95).abs() < 1e-15);
        assert_eq!(c.u, 10);
        assert_eq!(c.w, 3);
    }

    #[test]
    fn a_matches_defining_formula() {
        let c = theory_constants(&KernelSpec::poisson(), 2.0, 1.0, 0.5).unwrap();
        // f_3(2) / (0.5^2 * 0.5)
        let f3 = (-2.0f64).exp() * 8.0 / 6.0;
        assert!((c.a - f3 / 0.125).abs() < 1e-13);
    }

    #[test]
    fn logarithmic_v_skips_first_index() {
        // b_k/b_0 = 1/(k+1) fails at k = 1 and holds from k = 2 on
        let c = theory_constants(&KernelSpec::logarithmic(), 0.5, 0.1, 0.5).unwrap();
        assert_eq!(c.v, 2);
        assert_eq!(c.w, 3);
    }

    #[test]
    fn negative_binomial_w() {
        // (w + 10)/(w + 1) <= t0/θ̃ = 0.75/0.5 = 1.5  ⇔  w >= 17
        let k = KernelSpec::negative_binomial(10).unwrap();
        let c = theory_constants(&k, 0.5, 0.1, 0.5).unwrap();
        assert_eq!(c.w, 17);
        assert_eq!(c.u, 11);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(theory_constants(&KernelSpec::geometric(), 1.0, 0.1, 0.5).is_err());
        assert!(theory_constants(&KernelSpec::poisson(), 5.0, 6.0, 0.5).is_err());
        assert!(theory_constants(&KernelSpec::poisson(), 5.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn tail_bound_precondition_and_decay() {
        let c = theory_constants(&KernelSpec::poisson(), 5.0, 0.5, 0.5).unwrap();
        assert!(tail_bound(&c, 8).is_err());
        let mut prev = f64::INFINITY;
        for k in 9..200 {
            let b = tail_bound(&c, k).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(prev < 1e-50);
    }

    #[test]
    fn unimodal_monotonicity_above_u() {
        for (kernel, bound) in [
            (KernelSpec::poisson(), 4.0),
            (KernelSpec::geometric(), 0.7),
            (KernelSpec::negative_binomial(10).unwrap(), 0.4),
            (KernelSpec::logarithmic(), 0.8),
        ] {
            let c = theory_constants(&kernel, bound, bound / 2.0, 0.5).unwrap();
            for k in c.u..c.u + 30 {
                let mut prev = 0.0;
                for i in 0..=200 {
                    let theta = c.theta_tilde * i as f64 / 200.0;
                    let p = kernel.pmf_at(theta, k);
                    assert!(p >= prev * (1.0 - 1e-12), "{kernel} k={k} θ={theta}");
                    prev = p;
                }
            }
        }
    }
}
