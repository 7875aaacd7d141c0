//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the solvers are generic over.
///
/// Implemented for `f32` and `f64`. Everything in the crate is written
/// against this trait; the crate root exposes `f64` aliases for the common
/// case.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + FromStr + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every finite `f64` is representable (possibly rounded).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Converts a count or index.
    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance applied to comparisons of cumulative probabilities.
    ///
    /// `1e-12` for `f64`; for narrower types it is widened to a few ulps of 1.
    #[inline]
    fn cdf_tol() -> Self {
        let floor = Self::epsilon() * Self::lit(64.0);
        let tol = Self::lit(1e-12);
        if tol > floor {
            tol
        } else {
            floor
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}
