//! Power series kernels `f_θ(k) = b_k θ^k / b(θ)` on the support ℕ.
//!
//! Families whose natural support starts above zero (the logarithmic
//! distribution) are stored in shifted form, `b̃_k = b_{k+1}`, so every kernel
//! here lives on `{0, 1, 2, …}`. Observations for such kernels are expected in
//! shifted units (`x - support_offset`).
//!
//! Probabilities are evaluated in log space. Poisson and negative binomial
//! terms use Loader's saddle-point decomposition (`stirlerr` + `bd0`), which
//! keeps relative accuracy near machine precision even for `k` in the
//! thousands.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::seeded;

mod theory;

pub use theory::{tail_bound, theory_constants, TheoryConstants};

/// The four supported power-series families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Poisson,
    Geometric,
    #[serde(rename = "negbinomial")]
    NegativeBinomial {
        r: u32,
    },
    Logarithmic,
}

/// A power-series kernel. Radius and support offset are fixed by the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KernelSpec {
    family: Family,
}

impl KernelSpec {
    pub fn new(family: Family) -> Result<Self> {
        if let Family::NegativeBinomial { r } = family {
            if r == 0 {
                return Err(Error::InvalidArgument(
                    "negative binomial size must be a positive integer".into(),
                ));
            }
        }
        Ok(Self { family })
    }

    pub fn poisson() -> Self {
        Self { family: Family::Poisson }
    }

    pub fn geometric() -> Self {
        Self { family: Family::Geometric }
    }

    pub fn negative_binomial(r: u32) -> Result<Self> {
        Self::new(Family::NegativeBinomial { r })
    }

    pub fn logarithmic() -> Self {
        Self { family: Family::Logarithmic }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Poisson => "poisson",
            Family::Geometric => "geometric",
            Family::NegativeBinomial { .. } => "negbinomial",
            Family::Logarithmic => "logarithmic",
        }
    }

    /// Radius of convergence of `b(θ)`.
    pub fn radius(&self) -> f64 {
        match self.family {
            Family::Poisson => f64::INFINITY,
            _ => 1.0,
        }
    }

    /// Shift applied to the natural support so that it starts at zero.
    pub fn support_offset(&self) -> u64 {
        match self.family {
            Family::Logarithmic => 1,
            _ => 0,
        }
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        if theta.is_finite() && theta >= 0.0 && theta < self.radius() {
            Ok(())
        } else {
            Err(Error::Domain {
                family: self.name(),
                value: theta,
                radius: self.radius(),
            })
        }
    }

    /// `ln b_k` (after the offset shift).
    pub fn ln_coeff(&self, k: u64) -> f64 {
        let kf = k as f64;
        match self.family {
            Family::Poisson => -ln_gamma(kf + 1.0),
            Family::Geometric => 0.0,
            Family::NegativeBinomial { r } => {
                let r = r as f64;
                ln_gamma(kf + r) - ln_gamma(kf + 1.0) - ln_gamma(r)
            }
            Family::Logarithmic => -(kf + 1.0).ln(),
        }
    }

    /// `ln b(θ)` for `θ` in `[0, R)`.
    pub fn ln_normalizer(&self, theta: f64) -> f64 {
        match self.family {
            Family::Poisson => theta,
            Family::Geometric => -(-theta).ln_1p(),
            Family::NegativeBinomial { r } => -(r as f64) * (-theta).ln_1p(),
            Family::Logarithmic => {
                if theta == 0.0 {
                    0.0
                } else {
                    (-(-theta).ln_1p() / theta).ln()
                }
            }
        }
    }

    /// `b_{k+1} / b_k` in closed form.
    pub fn coeff_ratio(&self, k: u64) -> f64 {
        let kf = k as f64;
        match self.family {
            Family::Poisson => 1.0 / (kf + 1.0),
            Family::Geometric => 1.0,
            Family::NegativeBinomial { r } => (kf + r as f64) / (kf + 1.0),
            Family::Logarithmic => (kf + 1.0) / (kf + 2.0),
        }
    }

    /// `lim_k b_{k+1}/b_k`, equal to `1/R`.
    pub fn limit_ratio(&self) -> f64 {
        match self.family {
            Family::Poisson => 0.0,
            _ => 1.0,
        }
    }

    /// Log probability without domain checking. `θ` must lie in `[0, R)`.
    pub fn ln_pmf_at(&self, theta: f64, k: u64) -> f64 {
        if theta == 0.0 {
            return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        match self.family {
            Family::Poisson => ln_dpois(k as f64, theta),
            Family::NegativeBinomial { r } => ln_dnbinom(k as f64, r as f64, theta),
            Family::Geometric => k as f64 * theta.ln() + (-theta).ln_1p(),
            Family::Logarithmic => {
                let kp1 = k as f64 + 1.0;
                kp1 * theta.ln() - kp1.ln() - (-(-theta).ln_1p()).ln()
            }
        }
    }

    /// Probability without domain checking. `θ` must lie in `[0, R)`.
    #[inline]
    pub fn pmf_at(&self, theta: f64, k: u64) -> f64 {
        self.ln_pmf_at(theta, k).exp()
    }

    /// `f_θ(k)`.
    pub fn pmf(&self, theta: f64, k: u64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.pmf_at(theta, k))
    }

    /// Mass of `{k' > k}` under `f_θ`, without cancellation for small tails.
    pub fn tail_at(&self, theta: f64, k: u64) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Geometric => ((k as f64 + 1.0) * theta.ln()).exp(),
            _ => {
                let mut cdf = 0.0;
                let mut all_small = true;
                for j in 0..=k {
                    cdf += self.pmf_at(theta, j);
                    if cdf >= 0.5 {
                        all_small = false;
                        break;
                    }
                }
                if all_small {
                    return (1.0 - cdf).clamp(0.0, 1.0);
                }
                self.forward_tail(theta, k)
            }
        }
    }

    // Sum of f_θ(j) for j > k by forward recursion, stopped once the
    // geometric remainder bound drops below the working precision.
    fn forward_tail(&self, theta: f64, k: u64) -> f64 {
        let mut j = k + 1;
        let mut term = self.pmf_at(theta, j);
        if term == 0.0 {
            // Underflowed start: the tail is below the smallest normal anyway
            // unless the mode lies further right.
            let mode = self.approx_mode(theta);
            if (j as f64) >= mode {
                return 0.0;
            }
        }
        let limit = self.limit_ratio() * theta;
        let mut sum = 0.0;
        loop {
            sum += term;
            let step = self.coeff_ratio(j) * theta;
            let rho = step.max(limit);
            if rho < 1.0 {
                let bound = term * rho / (1.0 - rho);
                if bound <= 1e-17 * sum || bound < 1e-300 {
                    break;
                }
            }
            term *= step;
            j += 1;
            if j > k + 10_000_000 {
                break;
            }
        }
        sum.min(1.0)
    }

    fn approx_mode(&self, theta: f64) -> f64 {
        match self.family {
            Family::Poisson => theta,
            Family::NegativeBinomial { r } => (r as f64 - 1.0) * theta / (1.0 - theta),
            _ => 0.0,
        }
    }

    /// `sup_{θ ∈ (0, θ̃)} b'(θ)/b(θ)`.
    pub fn sup_log_derivative(&self, theta_tilde: f64) -> f64 {
        match self.family {
            Family::Poisson => 1.0,
            Family::Geometric => 1.0 / (1.0 - theta_tilde),
            Family::NegativeBinomial { r } => r as f64 / (1.0 - theta_tilde),
            Family::Logarithmic => {
                let deriv = |t: f64| {
                    let l = -(-t).ln_1p();
                    1.0 / ((1.0 - t) * l) - 1.0 / t
                };
                let steps = 4000;
                let mut best = 0.5_f64;
                for i in 1..=steps {
                    let t = theta_tilde * i as f64 / steps as f64;
                    best = best.max(deriv(t));
                }
                best
            }
        }
    }

    /// `sup_{k ≥ w} b_{k+1}/b_k`, using the monotone structure of each family.
    pub fn sup_ratio_from(&self, w: u64) -> f64 {
        match self.family {
            Family::Poisson | Family::NegativeBinomial { .. } => self.coeff_ratio(w),
            Family::Geometric | Family::Logarithmic => 1.0,
        }
    }

    /// Draws `count` variates from `f_θ` by sequential inversion.
    pub fn sample(&self, theta: f64, count: usize, seed: u64) -> Result<Vec<u64>> {
        self.check_theta(theta)?;
        let mut rng = seeded(seed);
        Ok((0..count).map(|_| self.draw(theta, &mut rng)).collect())
    }

    /// One inversion draw; `θ` must already be validated.
    pub fn draw<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> u64 {
        if theta == 0.0 {
            return 0;
        }
        let u: f64 = rng.gen();
        let f0 = self.pmf_at(theta, 0);
        let direct = f0 < 1e-290;
        let mut k = 0u64;
        let mut p = f0;
        let mut cum = p;
        while cum < u && cum <= 1.0 - 1e-15 {
            p = if direct {
                self.pmf_at(theta, k + 1)
            } else {
                p * self.coeff_ratio(k) * theta
            };
            k += 1;
            cum += p;
            if direct && p == 0.0 && (k as f64) > self.approx_mode(theta) + 1.0 {
                break;
            }
        }
        k
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::NegativeBinomial { r } => write!(f, "negbinomial:{r}"),
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "poisson" => Ok(Self::poisson()),
            "geometric" => Ok(Self::geometric()),
            "logarithmic" => Ok(Self::logarithmic()),
            other => {
                if let Some(r) = other.strip_prefix("negbinomial:") {
                    let r: u32 = r
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad negative binomial size `{r}`")))?;
                    Self::negative_binomial(r)
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unknown kernel `{s}` (expected poisson, geometric, negbinomial:<r>, logarithmic)"
                    )))
                }
            }
        }
    }
}

/// Stirling-series remainder `ln Γ(n+1) - (n + 1/2) ln n + n - ln √(2π)`.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - 0.5 * (2.0 * PI).ln();
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np - x`, accurate when `x ≈ np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

fn ln_dpois(x: f64, lambda: f64) -> f64 {
    if x == 0.0 {
        return -lambda;
    }
    -stirlerr(x) - bd0(x, lambda) - 0.5 * (2.0 * PI * x).ln()
}

/// `ln` of the binomial probability of `x` successes in `n` trials.
fn ln_dbinom_raw(x: f64, n: f64, p: f64, q: f64) -> f64 {
    if x == 0.0 {
        return n * ln_complement(p, q);
    }
    if x == n {
        return n * p.ln();
    }
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(x, n * p) - bd0(n - x, n * q);
    lc - 0.5 * (2.0 * PI * x * (n - x) / n).ln()
}

/// `C(k+r-1, k) θ^k (1-θ)^r` in log form.
fn ln_dnbinom(k: f64, r: f64, theta: f64) -> f64 {
    if k == 0.0 {
        return r * (-theta).ln_1p();
    }
    let n = k + r;
    ln_dbinom_raw(r, n, 1.0 - theta, theta) + (r / n).ln()
}

/// `ln q` for `q = 1 - p`.
fn ln_complement(p: f64, q: f64) -> f64 {
    if p < 0.5 {
        (-p).ln_1p()
    } else {
        q.ln()
    }
}
