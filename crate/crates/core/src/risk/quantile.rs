//! Lower/upper quantiles and Value-at-Risk.
//!
//! For a level `α`:
//!
//! * `q⁻_α = min{τ : P[x ≤ τ] ≥ α}` with `q⁻_0 = -∞`,
//! * `q⁺_α = max{τ : P[x < τ] ≤ α}` with `q⁺_1 = +∞`,
//! * `VaR_α = q⁺_α`.
//!
//! Cumulative sums are compared with [`Real::cdf_tol`] slack so rounding in
//! the running sum cannot move the selected atom.

use super::dist::{DiscreteDistribution, ExtendedReal};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) fn check_level<F: Real>(alpha: F) -> Result<()> {
    if !(alpha >= F::zero() && alpha <= F::one()) {
        return Err(Error::AlphaOutOfRange(alpha.to_f64_lossy()));
    }
    Ok(())
}

/// Index of the atom selected by `q⁻_α` given running sums `cum`
/// (`α > 0`). Returns the last index when rounding leaves `cum` short of `α`.
#[inline]
pub fn lower_index<F: Real>(cum: &[F], alpha: F) -> usize {
    let threshold = alpha - F::cdf_tol();
    let i = cum.partition_point(|&c| c < threshold);
    i.min(cum.len() - 1)
}

/// Index of the atom selected by `q⁺_α`, or `None` when it is `+∞`.
#[inline]
pub fn upper_index<F: Real>(cum: &[F], alpha: F) -> Option<usize> {
    // P[x < v_i] = cum[i-1]; the largest admissible i is the first index
    // whose own running sum already exceeds α.
    let threshold = alpha + F::cdf_tol();
    let i = cum.partition_point(|&c| c <= threshold);
    (i < cum.len()).then_some(i)
}

/// Lower quantile `q⁻_α`.
pub fn quantile_lower<F: Real>(d: &DiscreteDistribution<F>, alpha: F) -> Result<ExtendedReal<F>> {
    check_level(alpha)?;
    if alpha == F::zero() {
        return Ok(ExtendedReal::NegInf);
    }
    let cum = d.cumulative();
    Ok(ExtendedReal::Finite(d.atoms()[lower_index(&cum, alpha)].value))
}

/// Upper quantile `q⁺_α`.
pub fn quantile_upper<F: Real>(d: &DiscreteDistribution<F>, alpha: F) -> Result<ExtendedReal<F>> {
    check_level(alpha)?;
    if alpha == F::one() {
        return Ok(ExtendedReal::PosInf);
    }
    let cum = d.cumulative();
    Ok(match upper_index(&cum, alpha) {
        Some(i) => ExtendedReal::Finite(d.atoms()[i].value),
        None => ExtendedReal::PosInf,
    })
}

/// Value-at-Risk, the upper quantile.
pub fn var<F: Real>(d: &DiscreteDistribution<F>, alpha: F) -> Result<ExtendedReal<F>> {
    quantile_upper(d, alpha)
}

/// `VaR_α` of the uniform law over the non-decreasing `sorted` values.
///
/// Used for collapsing a risk-level axis; `alpha` must lie in `[0, 1)`.
#[inline]
pub fn var_of_sorted_uniform<F: Real>(sorted: &[F], alpha: F) -> F {
    let n = sorted.len();
    let scaled = (alpha + F::cdf_tol()) * F::from_usize_lossy(n);
    // P[x < sorted[i]] ≤ i/n, so the admissible index is floor(α n).
    let i = scaled.floor().to_usize().unwrap_or(0).min(n - 1);
    sorted[i]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin() -> DiscreteDistribution<f64> {
        DiscreteDistribution::new([(-1.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    // Quantiles by brute force over the CDF breakpoints, straight from the
    // definitions, with exact comparisons.
    fn brute_lower(d: &DiscreteDistribution<f64>, alpha: f64) -> ExtendedReal<f64> {
        if alpha == 0.0 {
            return ExtendedReal::NegInf;
        }
        let mut best = ExtendedReal::PosInf;
        for a in d.atoms() {
            let cdf: f64 = d.atoms().iter().filter(|b| b.value <= a.value).map(|b| b.prob).sum();
            if cdf >= alpha - 1e-12 {
                best = best.min(ExtendedReal::Finite(a.value));
            }
        }
        best
    }

    fn brute_upper(d: &DiscreteDistribution<f64>, alpha: f64) -> ExtendedReal<f64> {
        if alpha == 1.0 {
            return ExtendedReal::PosInf;
        }
        let mut best = ExtendedReal::NegInf;
        for a in d.atoms() {
            let below: f64 = d.atoms().iter().filter(|b| b.value < a.value).map(|b| b.prob).sum();
            if below <= alpha + 1e-12 {
                best = best.max(ExtendedReal::Finite(a.value));
            }
        }
        best
    }

    #[test]
    fn lower_quantile_examples() {
        assert_eq!(quantile_lower(&coin(), 0.5).unwrap(), ExtendedReal::Finite(-1.0));
        assert_eq!(brute_lower(&coin(), 0.5), ExtendedReal::Finite(-1.0));
        assert_eq!(quantile_lower(&coin(), 0.0).unwrap(), ExtendedReal::NegInf);
        let point = DiscreteDistribution::point(3.0);
        assert_eq!(quantile_lower(&point, 1.0).unwrap(), ExtendedReal::Finite(3.0));
    }

    #[test]
    fn upper_quantile_examples() {
        assert_eq!(quantile_upper(&coin(), 0.5).unwrap(), ExtendedReal::Finite(1.0));
        assert_eq!(brute_upper(&coin(), 0.5), ExtendedReal::Finite(1.0));
        assert_eq!(quantile_upper(&coin(), 1.0).unwrap(), ExtendedReal::PosInf);
        assert_eq!(quantile_upper(&coin(), 0.0).unwrap(), ExtendedReal::Finite(-1.0));
    }

    #[test]
    fn var_examples() {
        let zero = DiscreteDistribution::point(0.0);
        assert_eq!(var(&zero, 0.3).unwrap(), ExtendedReal::Finite(0.0));
        assert_eq!(var(&coin(), 0.25).unwrap(), ExtendedReal::Finite(-1.0));
        assert_eq!(brute_upper(&coin(), 0.25), ExtendedReal::Finite(-1.0));
        assert_eq!(var(&DiscreteDistribution::point(5.0), 1.0).unwrap(), ExtendedReal::PosInf);
    }

    #[test]
    fn level_out_of_range() {
        assert!(matches!(quantile_lower(&coin(), 1.5), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(quantile_upper(&coin(), -0.1), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(var(&coin(), f64::NAN), Err(Error::AlphaOutOfRange(_))));
    }

    #[test]
    fn matches_brute_force_on_a_grid() {
        let d = DiscreteDistribution::new([(0.0, 0.1), (2.0, 0.25), (3.0, 0.15), (7.0, 0.5)]).unwrap();
        for k in 0..=40 {
            let alpha = k as f64 / 40.0;
            assert_eq!(quantile_lower(&d, alpha).unwrap(), brute_lower(&d, alpha), "alpha {alpha}");
            assert_eq!(quantile_upper(&d, alpha).unwrap(), brute_upper(&d, alpha), "alpha {alpha}");
        }
    }

    #[test]
    fn sorted_uniform_var_matches_distribution() {
        let values = [0.0, 1.0, 1.0, 4.0, 9.0];
        let d = DiscreteDistribution::uniform(&values).unwrap();
        for k in 0..20 {
            let alpha = k as f64 / 20.0;
            assert_eq!(
                ExtendedReal::Finite(var_of_sorted_uniform(&values, alpha)),
                var(&d, alpha).unwrap(),
                "alpha {alpha}"
            );
        }
    }
}
