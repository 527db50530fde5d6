//! Empirical pmfs and distances between pmfs on ℕ with certified truncation.
//!
//! Every distance walks a common horizon `K` chosen from the two tails so
//! that the neglected part cannot move the result by more than `tol`:
//!
//! * Hellinger: `h² = ½ Σ_{k≤K} (√p − √q)² + ½ (T_p + T_q) − Σ_{k>K} √(pq)`,
//!   and the last sum is at most `√(T_p T_q)` by Cauchy–Schwarz.
//! * ℓ_r: the tail vector has ℓ_r norm at most its ℓ_1 norm `T_p + T_q`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmf::{horizon, Pmf};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Relative frequencies of observed counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalPmf {
    counts: BTreeMap<u64, u64>,
    n: u64,
}

impl EmpiricalPmf {
    pub fn from_observations(observations: &[u64]) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::NoObservations);
        }
        let mut counts = BTreeMap::new();
        for &x in observations {
            *counts.entry(x).or_insert(0u64) += 1;
        }
        Ok(Self {
            counts,
            n: observations.len() as u64,
        })
    }

    /// Builds from `(value, count)` pairs; zero counts are dropped.
    pub fn from_counts<I: IntoIterator<Item = (u64, u64)>>(pairs: I) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (k, c) in pairs {
            if c > 0 {
                *counts.entry(k).or_insert(0) += c;
            }
        }
        let n = counts.values().sum();
        if n == 0 {
            return Err(Error::NoObservations);
        }
        Ok(Self { counts, n })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn count(&self, k: u64) -> u64 {
        self.counts.get(&k).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    /// Distinct observed values with their counts, in increasing order.
    pub fn cells(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&k, &c)| (k, c))
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn max_value(&self) -> u64 {
        *self.counts.keys().next_back().expect("nonempty")
    }

    /// Expands back into a sorted observation vector.
    pub fn observations(&self) -> Vec<u64> {
        self.cells()
            .flat_map(|(k, c)| std::iter::repeat_n(k, c as usize))
            .collect()
    }
}

impl Pmf for EmpiricalPmf {
    fn prob(&self, k: u64) -> f64 {
        self.count(k) as f64 / self.n as f64
    }

    fn tail_above(&self, k: u64) -> f64 {
        let above: u64 = self.counts.range(k + 1..).map(|(_, &c)| c).sum();
        above as f64 / self.n as f64
    }

    fn horizon_hint(&self) -> u64 {
        self.max_value()
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol <= 1e-3 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tolerance must lie in (0, 1e-3], got {tol}")))
    }
}

/// Smallest doubling step `K` at which `accept(T_p(K), T_q(K))` holds.
fn common_horizon<P: Pmf + ?Sized, Q: Pmf + ?Sized>(
    p: &P,
    q: &Q,
    accept: impl Fn(f64, f64) -> bool,
) -> (u64, f64, f64) {
    let mut k = p.horizon_hint().max(q.horizon_hint());
    loop {
        let (tp, tq) = (p.tail_above(k), q.tail_above(k));
        if accept(tp, tq) || k >= 1 << 40 {
            return (k, tp, tq);
        }
        k = 2 * k + 1;
    }
}

/// Hellinger distance `(1 − Σ √(p(k) q(k)))^{1/2}`, accurate to `tol`.
pub fn hellinger<P: Pmf + ?Sized, Q: Pmf + ?Sized>(p: &P, q: &Q, tol: f64) -> Result<f64> {
    check_tol(tol)?;
    let tol2 = tol * tol;
    let (k_max, tp, tq) = common_horizon(p, q, |a, b| (a * b).sqrt() < tol2);
    let mut s = 0.0;
    for k in 0..=k_max {
        let d = p.prob(k).sqrt() - q.prob(k).sqrt();
        s += d * d;
    }
    let h2 = 0.5 * s + 0.5 * (tp + tq);
    Ok(h2.clamp(0.0, 1.0).sqrt())
}

/// `ℓ_r` distance for `r ∈ [1, ∞]` (`f64::INFINITY` for the sup norm).
pub fn lp_distance<P: Pmf + ?Sized, Q: Pmf + ?Sized>(p: &P, q: &Q, order: f64, tol: f64) -> Result<f64> {
    if !(order >= 1.0) {
        return Err(Error::InvalidArgument(format!("order must be >= 1, got {order}")));
    }
    check_tol(tol)?;
    let (k_max, _, _) = common_horizon(p, q, |a, b| a + b < tol);
    if order.is_infinite() {
        // one index past the horizon as well
        let sup = (0..=k_max + 1)
            .map(|k| (p.prob(k) - q.prob(k)).abs())
            .fold(0.0, f64::max);
        return Ok(sup);
    }
    let s: f64 = (0..=k_max).map(|k| (p.prob(k) - q.prob(k)).abs().powf(order)).sum();
    Ok(s.powf(1.0 / order))
}

/// The three distances reported by the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    H,
    L1,
    L2,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::H, Metric::L2, Metric::L1];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::H => "h",
            Metric::L1 => "l1",
            Metric::L2 => "l2",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hellinger, ℓ1 and ℓ2 over one shared horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub h: f64,
    pub l1: f64,
    pub l2: f64,
}

impl Distances {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::H => self.h,
            Metric::L1 => self.l1,
            Metric::L2 => self.l2,
        }
    }
}

pub fn distances<P: Pmf + ?Sized, Q: Pmf + ?Sized>(p: &P, q: &Q, tol: f64) -> Result<Distances> {
    check_tol(tol)?;
    let tol2 = tol * tol;
    let (k_max, tp, tq) = common_horizon(p, q, |a, b| (a * b).sqrt() < tol2 && a + b < tol);
    let (mut sh, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for k in 0..=k_max {
        let (a, b) = (p.prob(k), q.prob(k));
        let d = a.sqrt() - b.sqrt();
        sh += d * d;
        s1 += (a - b).abs();
        s2 += (a - b) * (a - b);
    }
    Ok(Distances {
        h: (0.5 * sh + 0.5 * (tp + tq)).clamp(0.0, 1.0).sqrt(),
        l1: s1,
        l2: s2.sqrt(),
    })
}

/// `(Σ_k (emp(k) − ref(k))² / weight(k)^α)^{1/2}` over the observed values
/// and the reference's `1e-16` horizon.
pub fn weighted_chisq<R: Pmf + ?Sized, W: Pmf + ?Sized>(
    emp: &EmpiricalPmf,
    reference: &R,
    weight_ref: &W,
    alpha: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let k_max = emp.max_value().max(horizon(reference, DEFAULT_TOL * DEFAULT_TOL));
    let mut s = 0.0;
    for k in 0..=k_max {
        let (e, r) = (emp.prob(k), reference.prob(k));
        if e == 0.0 && r == 0.0 {
            continue;
        }
        let d = e - r;
        if alpha == 0.0 {
            s += d * d;
            continue;
        }
        let w = weight_ref.prob(k);
        if w <= 0.0 {
            return Err(Error::ZeroWeight(k));
        }
        s += d * d / w.powf(alpha);
    }
    Ok(s.sqrt())
}
