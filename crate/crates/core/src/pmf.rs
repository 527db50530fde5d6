/// A probability mass function on ℕ with exact tail accounting.
pub trait Pmf {
    /// Probability of `k`.
    fn prob(&self, k: u64) -> f64;

    /// Mass of `{k' > k}`, computed without cancellation where possible.
    fn tail_above(&self, k: u64) -> f64;

    /// An index past which the pmf is known to be negligible or zero, used
    /// as a starting point for horizon searches.
    fn horizon_hint(&self) -> u64 {
        0
    }
}

impl<T: Pmf + ?Sized> Pmf for &T {
    fn prob(&self, k: u64) -> f64 {
        (**self).prob(k)
    }

    fn tail_above(&self, k: u64) -> f64 {
        (**self).tail_above(k)
    }

    fn horizon_hint(&self) -> u64 {
        (**self).horizon_hint()
    }
}

/// Smallest `K` with `tail_above(K) < eps`, by doubling then bisection.
pub fn horizon<P: Pmf + ?Sized>(pmf: &P, eps: f64) -> u64 {
    if pmf.tail_above(0) < eps {
        return 0;
    }
    let mut lo = 0u64; // tail(lo) >= eps
    let mut hi = pmf.horizon_hint().max(1);
    while pmf.tail_above(hi) >= eps {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi >= 1 << 40 {
            return hi;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pmf.tail_above(mid) < eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
