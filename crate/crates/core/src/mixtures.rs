//! Mixing distributions and the mixture pmfs `π(k; Q) = ∫ f_θ(k) dQ(θ)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::pmf::{horizon, Pmf};
use crate::quadrature::integrate;
use crate::rng::seeded;

/// Absolute tolerance of the mixing-law quadrature.
pub const QUAD_TOL: f64 = 1e-12;

/// Relative distance below which discrete support points are merged.
pub const MERGE_REL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingDistribution {
    Discrete { support: Vec<f64>, weights: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
    ScaledBeta { alpha: f64, beta: f64, lo: f64, hi: f64 },
    PointMassPlus { mass0: f64, rest: Box<MixingDistribution> },
}

impl MixingDistribution {
    /// Discrete law; points are sorted, near-duplicates merged, weights
    /// renormalized. Weights must be nonnegative and sum to one within `1e-9`.
    pub fn discrete(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "support and weights must be nonempty and of equal length".into(),
            ));
        }
        if support.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite support point or weight".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidArgument("negative mixing weight".into()));
        }
        if support.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidArgument("negative support point".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        let mut pairs: Vec<(f64, f64)> = support.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let scale = pairs.last().map(|p| p.0).unwrap_or(0.0);
        let gap = MERGE_REL * scale;
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (t, w) in pairs {
            match merged.last_mut() {
                Some(last) if t - last.0 <= gap => {
                    let mass = last.1 + w;
                    if mass > 0.0 {
                        last.0 = (last.0 * last.1 + t * w) / mass;
                    }
                    last.1 = mass;
                }
                _ => merged.push((t, w)),
            }
        }
        let (support, mut weights): (Vec<f64>, Vec<f64>) = merged.into_iter().unzip();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(MixingDistribution::Discrete { support, weights })
    }

    pub fn point(theta: f64) -> Self {
        MixingDistribution::Discrete {
            support: vec![theta],
            weights: vec![1.0],
        }
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let m = MixingDistribution::Uniform { lo, hi };
        m.validate()?;
        Ok(m)
    }

    pub fn scaled_beta(alpha: f64, beta: f64, lo: f64, hi: f64) -> Result<Self> {
        let m = MixingDistribution::ScaledBeta { alpha, beta, lo, hi };
        m.validate()?;
        Ok(m)
    }

    pub fn point_mass_plus(mass0: f64, rest: MixingDistribution) -> Result<Self> {
        let m = MixingDistribution::PointMassPlus {
            mass0,
            rest: Box::new(rest),
        };
        m.validate()?;
        Ok(m)
    }

    /// Checks the structural invariants (not the kernel radius).
    pub fn validate(&self) -> Result<()> {
        match self {
            MixingDistribution::Discrete { support, weights } => {
                if support.is_empty() || support.len() != weights.len() {
                    return Err(Error::InvalidArgument("malformed discrete mixing law".into()));
                }
                if weights.iter().any(|&w| !(w >= 0.0)) || support.iter().any(|&t| !(t >= 0.0)) {
                    return Err(Error::InvalidArgument("negative or NaN discrete entry".into()));
                }
                if support.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidArgument("support must be strictly increasing".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!("weights sum to {total}")));
                }
                Ok(())
            }
            MixingDistribution::Uniform { lo, hi } => check_interval(*lo, *hi),
            MixingDistribution::ScaledBeta { alpha, beta, lo, hi } => {
                if !(*alpha > 0.0 && *beta > 0.0) {
                    return Err(Error::InvalidArgument("beta shape parameters must be positive".into()));
                }
                check_interval(*lo, *hi)
            }
            MixingDistribution::PointMassPlus { mass0, rest } => {
                if !(*mass0 >= 0.0 && *mass0 < 1.0) {
                    return Err(Error::InvalidArgument("mass at zero must lie in [0, 1)".into()));
                }
                rest.validate()
            }
        }
    }

    /// Right end of the support.
    pub fn max_theta(&self) -> f64 {
        match self {
            MixingDistribution::Discrete { support, .. } => support.last().copied().unwrap_or(0.0),
            MixingDistribution::Uniform { hi, .. } | MixingDistribution::ScaledBeta { hi, .. } => *hi,
            MixingDistribution::PointMassPlus { rest, .. } => rest.max_theta(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, MixingDistribution::Discrete { .. })
    }

    /// Support points and weights of a discrete law.
    pub fn atoms(&self) -> Option<(&[f64], &[f64])> {
        match self {
            MixingDistribution::Discrete { support, weights } => Some((support, weights)),
            _ => None,
        }
    }

    /// `∫ g(θ) dQ(θ)`.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        self.expect_ref(&g)
    }

    fn expect_ref(&self, g: &dyn Fn(f64) -> f64) -> f64 {
        match self {
            MixingDistribution::Discrete { support, weights } => support
                .iter()
                .zip(weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(&t, &w)| w * g(t))
                .sum(),
            MixingDistribution::Uniform { lo, hi } => {
                let density = 1.0 / (hi - lo);
                integrate(|t| g(t) * density, *lo, *hi, QUAD_TOL)
            }
            MixingDistribution::ScaledBeta { alpha, beta, lo, hi } => {
                let width = hi - lo;
                let ln_norm = ln_beta(*alpha, *beta) + width.ln();
                let (a, b) = (*alpha, *beta);
                integrate(
                    |t| {
                        let x = ((t - lo) / width).clamp(0.0, 1.0);
                        if (x == 0.0 && a < 1.0) || (x == 1.0 && b < 1.0) {
                            return 0.0;
                        }
                        let ln_d = (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_norm;
                        let d = if (x == 0.0 && a == 1.0) || (x == 1.0 && b == 1.0) {
                            (-ln_norm).exp()
                        } else {
                            ln_d.exp()
                        };
                        g(t) * d
                    },
                    *lo,
                    *hi,
                    QUAD_TOL,
                )
            }
            MixingDistribution::PointMassPlus { mass0, rest } => mass0 * g(0.0) + (1.0 - mass0) * rest.expect_ref(g),
        }
    }

    /// Draws one `θ` by inversion (categorical for discrete laws).
    pub fn draw_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MixingDistribution::Discrete { support, weights } => {
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                for (t, w) in support.iter().zip(weights) {
                    cum += w;
                    if u < cum {
                        return *t;
                    }
                }
                *support.last().expect("nonempty support")
            }
            MixingDistribution::Uniform { lo, hi } => {
                let u: f64 = rng.gen();
                lo + u * (hi - lo)
            }
            MixingDistribution::ScaledBeta { alpha, beta, lo, hi } => {
                let u: f64 = rng.gen();
                let dist = Beta::new(*alpha, *beta).expect("validated shape");
                lo + dist.inverse_cdf(u) * (hi - lo)
            }
            MixingDistribution::PointMassPlus { mass0, rest } => {
                let u: f64 = rng.gen();
                if u < *mass0 {
                    0.0
                } else {
                    rest.draw_theta(rng)
                }
            }
        }
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("invalid mixing interval [{lo}, {hi}]")))
    }
}

/// The mixture pmf of a kernel under a mixing law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePmf {
    kernel: KernelSpec,
    mixing: MixingDistribution,
}

impl MixturePmf {
    pub fn new(kernel: KernelSpec, mixing: MixingDistribution) -> Result<Self> {
        mixing.validate()?;
        let top = mixing.max_theta();
        if top >= kernel.radius() {
            return Err(Error::Domain {
                family: kernel.name(),
                value: top,
                radius: kernel.radius(),
            });
        }
        Ok(Self { kernel, mixing })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn mixing(&self) -> &MixingDistribution {
        &self.mixing
    }

    /// `π(k; Q)`.
    pub fn eval(&self, k: u64) -> f64 {
        let kernel = self.kernel;
        self.mixing.expect(|t| kernel.pmf_at(t, k)).clamp(0.0, 1.0)
    }

    /// `1 - Σ_{j ≤ K} π(j; Q)`, evaluated from the component tails.
    pub fn tail_mass(&self, k: u64) -> f64 {
        let kernel = self.kernel;
        self.mixing.expect(|t| kernel.tail_at(t, k)).clamp(0.0, 1.0)
    }

    /// Smallest `K` with `tail_mass(K) < eps`.
    pub fn truncation_horizon(&self, eps: f64) -> Result<u64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")));
        }
        Ok(horizon(self, eps))
    }

    /// Two-stage sample: `θ ~ Q`, then `k ~ f_θ`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<u64> {
        let mut rng = seeded(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<u64> {
        (0..n)
            .map(|_| {
                let theta = self.mixing.draw_theta(rng);
                self.kernel.draw(theta, rng)
            })
            .collect()
    }

    /// Precomputes values and tails up to the `1e-14` horizon.
    pub fn tabulate(&self) -> TabulatedPmf {
        TabulatedPmf::new(self.clone(), 1e-14)
    }
}

impl Pmf for MixturePmf {
    fn prob(&self, k: u64) -> f64 {
        self.eval(k)
    }

    fn tail_above(&self, k: u64) -> f64 {
        self.tail_mass(k)
    }

    fn horizon_hint(&self) -> u64 {
        let top = self.mixing.max_theta();
        match self.kernel.radius() {
            r if r.is_infinite() => (top + 6.0 * top.sqrt() + 8.0) as u64,
            _ => (20.0 / (1.0 - top).max(1e-3)) as u64,
        }
    }
}

/// A mixture pmf with a cached table of values and tails; falls back to the
/// underlying mixture beyond the table.
#[derive(Debug, Clone)]
pub struct TabulatedPmf {
    source: MixturePmf,
    values: Vec<f64>,
    tails: Vec<f64>,
}

impl TabulatedPmf {
    pub fn new(source: MixturePmf, eps: f64) -> Self {
        let h = horizon(&source, eps);
        let values: Vec<f64> = (0..=h).map(|k| source.eval(k)).collect();
        let mut tails = vec![0.0; values.len()];
        tails[h as usize] = source.tail_mass(h);
        for k in (0..h as usize).rev() {
            tails[k] = tails[k + 1] + values[k + 1];
        }
        Self { source, values, tails }
    }

    pub fn source(&self) -> &MixturePmf {
        &self.source
    }

    pub fn table_len(&self) -> usize {
        self.values.len()
    }
}

impl Pmf for TabulatedPmf {
    fn prob(&self, k: u64) -> f64 {
        match self.values.get(k as usize) {
            Some(v) => *v,
            None => self.source.eval(k),
        }
    }

    fn tail_above(&self, k: u64) -> f64 {
        match self.tails.get(k as usize) {
            Some(v) => *v,
            None => self.source.tail_mass(k),
        }
    }

    fn horizon_hint(&self) -> u64 {
        self.values.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1() -> MixturePmf {
        let q = MixingDistribution::discrete(vec![1.0, 2.0], vec![4.0 / 9.0, 5.0 / 9.0]).unwrap();
        MixturePmf::new(KernelSpec::poisson(), q).unwrap()
    }

    #[test]
    fn point_mixture_equals_kernel() {
        let m = MixturePmf::new(KernelSpec::poisson(), MixingDistribution::point(2.5)).unwrap();
        for k in 0..20 {
            assert_eq!(m.eval(k), KernelSpec::poisson().pmf(2.5, k).unwrap());
        }
    }

    #[test]
    fn eval_examples() {
        let expected = 4.0 / 9.0 * (-1.0f64).exp() + 5.0 / 9.0 * (-2.0f64).exp();
        assert!((ex1().eval(0) - expected).abs() < 1e-15);
        assert!((ex1().eval(0) - 0.238_688_242_318_759).abs() < 1e-13);
        let g = MixturePmf::new(
            KernelSpec::geometric(),
            MixingDistribution::discrete(vec![0.2, 0.8], vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        assert!((g.eval(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tail_mass_examples() {
        let g = MixturePmf::new(KernelSpec::geometric(), MixingDistribution::point(0.5)).unwrap();
        assert!((g.tail_mass(1) - 0.25).abs() < 1e-15);
        let p = MixturePmf::new(KernelSpec::poisson(), MixingDistribution::point(1.0)).unwrap();
        assert!((p.tail_mass(0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let m = ex1();
        let partial: f64 = (0..=30).map(|k| m.eval(k)).sum();
        let far: f64 = (31..=200).map(|k| m.eval(k)).sum();
        assert!((m.tail_mass(30) - far).abs() < 1e-12);
        assert!((m.tail_mass(30) - (1.0 - partial)).abs() < 1e-12);
    }

    #[test]
    fn truncation_horizon_examples() {
        let g = MixturePmf::new(KernelSpec::geometric(), MixingDistribution::point(0.5)).unwrap();
        assert_eq!(g.truncation_horizon(0.3).unwrap(), 1);
        let m = ex1();
        let h = m.truncation_horizon(1e-10).unwrap();
        let linear = (0u64..).find(|&k| m.tail_mass(k) < 1e-10).unwrap();
        assert_eq!(h, linear);
        assert!(m.truncation_horizon(1e-12).unwrap() >= h);
        assert!(m.truncation_horizon(0.0).is_err());
    }

    #[test]
    fn continuous_mixing_integrates_to_one() {
        for (kernel, q) in [
            (KernelSpec::poisson(), MixingDistribution::uniform(0.2, 5.0).unwrap()),
            (
                KernelSpec::poisson(),
                MixingDistribution::point_mass_plus(1.0 / 3.0, MixingDistribution::uniform(0.2, 5.0).unwrap()).unwrap(),
            ),
            (KernelSpec::geometric(), MixingDistribution::scaled_beta(2.0, 3.0, 0.1, 0.9).unwrap()),
        ] {
            let m = MixturePmf::new(kernel, q).unwrap();
            let s: f64 = (0..=40).map(|k| m.eval(k)).sum();
            assert!((s + m.tail_mass(40) - 1.0).abs() < 1e-10, "{s}");
        }
    }

    #[test]
    fn uniform_poisson_closed_form() {
        // ∫_0^1 e^{-t} dt = 1 - e^{-1}
        let m = MixturePmf::new(KernelSpec::poisson(), MixingDistribution::uniform(0.0, 1.0).unwrap()).unwrap();
        assert!((m.eval(0) - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn merges_close_points_and_validates() {
        let q = MixingDistribution::discrete(vec![2.0, 1.0, 2.0 + 1e-12], vec![0.25, 0.5, 0.25]).unwrap();
        let (s, w) = q.atoms().unwrap();
        assert_eq!(s.len(), 2);
        assert!((w[1] - 0.5).abs() < 1e-15);
        assert!(MixingDistribution::discrete(vec![1.0], vec![0.5]).is_err());
        assert!(MixingDistribution::uniform(2.0, 1.0).is_err());
        assert!(MixingDistribution::point_mass_plus(1.0, MixingDistribution::point(1.0)).is_err());
        assert!(MixturePmf::new(KernelSpec::geometric(), MixingDistribution::point(1.0)).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = ex1();
        assert!(m.sample(0, 3).is_empty());
        assert_eq!(m.sample(100, 3), m.sample(100, 3));
    }

    #[test]
    fn serde_roundtrip() {
        let q = MixingDistribution::point_mass_plus(0.25, MixingDistribution::uniform(0.2, 5.0).unwrap()).unwrap();
        let s = serde_json::to_string(&q).unwrap();
        assert!(s.contains("\"kind\":\"point_mass_plus\""));
        let back: MixingDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn tabulated_matches_source() {
        let m = MixturePmf::new(KernelSpec::poisson(), MixingDistribution::uniform(0.2, 5.0).unwrap()).unwrap();
        let t = m.tabulate();
        for k in [0u64, 3, 10, 25] {
            assert!((t.prob(k) - m.eval(k)).abs() < 1e-13);
            assert!((t.tail_above(k) - m.tail_mass(k)).abs() < 1e-12);
        }
    }
}
