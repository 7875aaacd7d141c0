//! Soft-quantile (shortfall) risk: the unique root of `m ↦ E[∂ℓ^κ_α(x − m)]`.
//!
//! The expected derivative is piecewise linear in `m` with kinks at
//! `{z − κ, z, z + κ}` for every atom `z`, and strictly decreasing. The root
//! is located by bisection over the sorted kinks, then solved exactly on the
//! bracketing linear piece. No iteration tolerance is involved, so the
//! result is a fixed function of the input bits.

use std::cmp::Ordering;

use super::dist::DiscreteDistribution;
use super::loss::SoftQuantileLoss;
use crate::error::Result;
use crate::scalar::Real;

/// Reusable root finder for one set of atoms and one `κ`; the level may vary.
#[derive(Debug, Clone)]
pub struct ShortfallSolver<F> {
    values: Vec<F>,
    probs: Vec<F>,
    kinks: Vec<F>,
    kappa: F,
}

impl<F: Real> ShortfallSolver<F> {
    /// `values` must be sorted ascending; `probs` are their masses.
    pub fn new(values: Vec<F>, probs: Vec<F>, kappa: F) -> Self {
        debug_assert_eq!(values.len(), probs.len());
        debug_assert!(!values.is_empty());
        let mut kinks = Vec::with_capacity(3 * values.len());
        kinks.extend(values.iter().map(|&v| v - kappa));
        kinks.extend(values.iter().copied());
        kinks.extend(values.iter().map(|&v| v + kappa));
        kinks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        kinks.dedup();
        Self { values, probs, kinks, kappa }
    }

    pub fn from_distribution(d: &DiscreteDistribution<F>, kappa: F) -> Self {
        let (values, probs) = d.atoms().iter().map(|a| (a.value, a.prob)).unzip();
        Self::new(values, probs, kappa)
    }

    /// `E[∂ℓ(x − m)]`, accumulated in ascending atom order.
    #[inline]
    pub fn expected_grad(&self, loss: &SoftQuantileLoss<F>, m: F) -> F {
        self.values
            .iter()
            .zip(&self.probs)
            .fold(F::zero(), |acc, (&x, &p)| acc + p * loss.grad(x - m))
    }

    /// Root at the level carried by `loss`. `loss.kappa()` must equal the
    /// solver's `κ`.
    pub fn solve(&self, loss: &SoftQuantileLoss<F>) -> F {
        debug_assert!(loss.kappa() == self.kappa);
        let kinks = &self.kinks;
        // Largest kink with non-negative expected derivative. The first kink
        // (min − κ) always qualifies and the last (max + κ) never does.
        let (mut lo, mut hi) = (0usize, kinks.len() - 1);
        let mut g_lo = self.expected_grad(loss, kinks[lo]);
        let mut g_hi = self.expected_grad(loss, kinks[hi]);
        if g_lo <= F::zero() {
            return kinks[lo];
        }
        if g_hi >= F::zero() {
            return kinks[hi];
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let g = self.expected_grad(loss, kinks[mid]);
            if g >= F::zero() {
                lo = mid;
                g_lo = g;
            } else {
                hi = mid;
                g_hi = g;
            }
        }
        if g_lo == F::zero() {
            return kinks[lo];
        }
        let (a, b) = (kinks[lo], kinks[hi]);
        let root = a + g_lo * (b - a) / (g_lo - g_hi);
        root.max(a).min(b)
    }
}

/// Shortfall risk `sup{m : E[∂ℓ^κ_α(x − m)] ≥ 0}`, the minimizer of
/// `E[ℓ^κ_α(x − m)]`.
pub fn shortfall_value<F: Real>(d: &DiscreteDistribution<F>, alpha: F, kappa: F) -> Result<F> {
    let loss = SoftQuantileLoss::new(alpha, kappa)?;
    Ok(ShortfallSolver::from_distribution(d, kappa).solve(&loss))
}
