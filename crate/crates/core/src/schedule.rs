//! Step-size schedules `γ_n = γ₀ (n + n₀)^{-a}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub gamma0: f64,
    pub a: f64,
    pub n0: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { gamma0: 1.0, a: 0.75, n0: 0.0 }
    }
}

impl Schedule {
    /// Requires `γ₀ > 0`, `a ∈ (1/2, 1]` and `n₀ >= 0`, which makes the
    /// sequence square-summable but not summable.
    pub fn new(gamma0: f64, a: f64, n0: f64) -> Result<Self> {
        let s = Schedule { gamma0, a, n0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0.is_finite() && self.gamma0 > 0.0) {
            return Err(Error::Precondition(format!("gamma0 must be positive, got {}", self.gamma0)));
        }
        if !(self.a > 0.5 && self.a <= 1.0) {
            return Err(Error::Precondition(format!("exponent a must lie in (1/2, 1], got {}", self.a)));
        }
        if !(self.n0.is_finite() && self.n0 >= 0.0) {
            return Err(Error::Precondition(format!("shift n0 must be >= 0, got {}", self.n0)));
        }
        Ok(())
    }

    /// `γ_n` for `n >= 1`.
    pub fn gamma(&self, n: usize) -> f64 {
        debug_assert!(n >= 1);
        self.gamma0 * (n as f64 + self.n0).powf(-self.a)
    }

    /// `τ_1, ..., τ_n` with `τ_k = Σ_{j<=k} γ_j`.
    pub fn taus(&self, n: usize) -> Vec<f64> {
        let mut acc = 0.0;
        (1..=n)
            .map(|k| {
                acc += self.gamma(k);
                acc
            })
            .collect()
    }

    /// Bound on `|γ_{n+1}/γ_n - 1|`, namely `a / (n + n₀)`.
    pub fn ratio_bound(&self, n: usize) -> f64 {
        self.a / (n as f64 + self.n0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_exponents_outside_range() {
        assert!(Schedule::new(1.0, 0.4, 0.0).is_err());
        assert!(Schedule::new(1.0, 0.5, 0.0).is_err());
        assert!(Schedule::new(1.0, 1.2, 0.0).is_err());
        assert!(Schedule::new(0.0, 0.75, 0.0).is_err());
        assert!(Schedule::new(1.0, 0.75, -1.0).is_err());
        assert!(Schedule::new(1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn default_schedule() {
        let s = Schedule::default();
        assert_eq!(s.gamma(1), 1.0);
        assert!((s.gamma(16) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn step_ratio_bound_holds() {
        for s in [Schedule::default(), Schedule::new(0.3, 0.6, 5.0).unwrap(), Schedule::new(2.0, 1.0, 0.0).unwrap()] {
            for n in 1..5000 {
                let r = s.gamma(n + 1) / s.gamma(n);
                assert!((r - 1.0).abs() <= s.ratio_bound(n) + 1e-15, "n={n}");
            }
        }
    }

    #[test]
    fn partial_sums_diverge_squares_converge() {
        let s = Schedule::default();
        let sum = |n: usize| (1..=n).map(|k| s.gamma(k)).sum::<f64>();
        let sq = |n: usize| (1..=n).map(|k| s.gamma(k).powi(2)).sum::<f64>();
        // Σγ grows like n^{1/4}; Σγ² tail beyond n is O(n^{-1/2}).
        assert!(sum(100_000) > 2.0 * sum(1_000));
        let (a, b, c) = (sq(10_000), sq(40_000), sq(160_000));
        assert!(c - b < 0.6 * (b - a));
        assert!(c < 2.7);
    }
}
