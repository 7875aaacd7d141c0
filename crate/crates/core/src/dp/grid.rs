use crate::error::{Error, Result};
use crate::risk::var_of_sorted_uniform;
use crate::scalar::Real;

/// Uniform grid `{0, 1/J, …, (J−1)/J}` of risk levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RiskGrid {
    j: usize,
}

impl RiskGrid {
    pub fn new(j: usize) -> Result<Self> {
        if j < 2 {
            return Err(Error::ParamOutOfRange(format!("risk grid needs J >= 2, got {j}")));
        }
        Ok(Self { j })
    }

    /// Number of levels `J`.
    #[inline]
    pub fn size(&self) -> usize {
        self.j
    }

    /// `j/J`.
    #[inline]
    pub fn level<F: Real>(&self, j: usize) -> F {
        F::from_usize_lossy(j) / F::from_usize_lossy(self.j)
    }

    /// Midpoint `(2j+1)/(2J)` of the cell of index `j`.
    #[inline]
    pub fn midpoint<F: Real>(&self, j: usize) -> F {
        F::from_usize_lossy(2 * j + 1) / F::from_usize_lossy(2 * self.j)
    }

    /// Largest `j` with `j/J ≤ α`, clamped to `J − 1`.
    ///
    /// The floor of `αJ` is corrected against the exact level test so that
    /// values like `α = 0.3` with `J = 10` land on `j = 3` despite rounding.
    pub fn index_of<F: Real>(&self, alpha: F) -> Result<usize> {
        if !(alpha >= F::zero() && alpha <= F::one()) {
            return Err(Error::AlphaOutOfRange(alpha.to_f64_lossy()));
        }
        let jf = F::from_usize_lossy(self.j);
        let mut k = (alpha * jf).floor().to_usize().unwrap_or(0).min(self.j - 1);
        while k > 0 && self.level::<F>(k) > alpha {
            k -= 1;
        }
        while k + 1 < self.j && self.level::<F>(k + 1) <= alpha {
            k += 1;
        }
        Ok(k)
    }

    /// `f̲(α) = max{j/J ≤ α}`.
    pub fn f_lower<F: Real>(&self, alpha: F) -> Result<F> {
        Ok(self.level(self.index_of(alpha)?))
    }

    /// `f̄(α) = max{(j+1)/J : j/J ≤ α}`; equals 1 at `α = 1`.
    pub fn f_upper<F: Real>(&self, alpha: F) -> Result<F> {
        Ok(self.level(self.index_of(alpha)? + 1))
    }

    /// `VaR_α` of the uniform law over `J` values sorted ascending.
    pub fn collapse<F: Real>(&self, sorted: &[F], alpha: F) -> F {
        debug_assert_eq!(sorted.len(), self.j);
        var_of_sorted_uniform(sorted, alpha)
    }
}
