use crate::error::{Error, Result};
use crate::scalar::Real;

/// Wasserstein-1 distance between two quantile functions sampled on the
/// same uniform grid: the mean absolute difference of the vectors.
pub fn wasserstein1<F: Real>(u: &[F], v: &[F]) -> Result<F> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(Error::LengthMismatch(0, 0));
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let total = u.iter().zip(v).fold(F::zero(), |acc, (&a, &b)| acc + (a - b).abs());
    Ok(total / F::from_usize_lossy(u.len()))
}
