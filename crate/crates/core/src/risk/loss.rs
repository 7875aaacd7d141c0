//! Quantile regression losses: pinball, soft-quantile and Huber.

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::quantile::check_level;

fn check_open_level<F: Real>(alpha: F) -> Result<()> {
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::AlphaOutOfRange(alpha.to_f64_lossy()));
    }
    Ok(())
}

fn check_kappa<F: Real>(kappa: F) -> Result<()> {
    if !(kappa > F::zero() && kappa <= F::one()) {
        return Err(Error::KappaOutOfRange(kappa.to_f64_lossy()));
    }
    Ok(())
}

/// Parameters shared by the loss families.
///
/// `kappa` is only read by the soft-quantile loss and `h` only by Huber's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams<F> {
    pub alpha: F,
    pub kappa: F,
    pub h: F,
}

impl<F: Real> LossParams<F> {
    pub fn new(alpha: F, kappa: F, h: F) -> Result<Self> {
        check_level(alpha)?;
        check_kappa(kappa)?;
        if !(h > F::zero()) || !h.is_finite() {
            return Err(Error::ParamOutOfRange(format!("huber width {h} must be positive")));
        }
        Ok(Self { alpha, kappa, h })
    }

    pub fn soft(&self) -> Result<SoftQuantileLoss<F>> {
        SoftQuantileLoss::new(self.alpha, self.kappa)
    }
}

/// Pinball loss `max(αδ, −(1−α)δ)`.
pub fn quantile_loss<F: Real>(alpha: F, delta: F) -> Result<F> {
    check_level(alpha)?;
    Ok((alpha * delta).max(-(F::one() - alpha) * delta))
}

/// Subgradient of the pinball loss, taking the value 0 at `δ = 0`.
#[inline]
pub fn pinball_subgradient<F: Real>(alpha: F, delta: F) -> F {
    if delta > F::zero() {
        alpha
    } else if delta < F::zero() {
        -(F::one() - alpha)
    } else {
        F::zero()
    }
}

/// Soft-quantile loss `ℓ^κ_α`: quadratic on `[-κ, κ)`, with shallow
/// quadratic tails beyond, strongly convex with a Lipschitz derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftQuantileLoss<F> {
    alpha: F,
    kappa: F,
}

impl<F: Real> SoftQuantileLoss<F> {
    /// Requires `α ∈ (0, 1)` and `κ ∈ (0, 1]`.
    pub fn new(alpha: F, kappa: F) -> Result<Self> {
        check_open_level(alpha)?;
        check_kappa(kappa)?;
        Ok(Self { alpha, kappa })
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn kappa(&self) -> F {
        self.kappa
    }

    #[inline]
    pub fn value(&self, delta: F) -> F {
        let (a, k) = (self.alpha, self.kappa);
        let one = F::one();
        let two = F::lit(2.0);
        if delta < -k {
            (one - a) * k / two * ((delta + k).powi(2) - two * delta / k - one)
        } else if delta < F::zero() {
            (one - a) * delta * delta / (two * k)
        } else if delta < k {
            a * delta * delta / (two * k)
        } else {
            a * k / two * ((delta - k).powi(2) + two * delta / k - one)
        }
    }

    #[inline]
    pub fn grad(&self, delta: F) -> F {
        let (a, k) = (self.alpha, self.kappa);
        let one = F::one();
        if delta < -k {
            (one - a) * (k * delta + k * k - one)
        } else if delta < F::zero() {
            (one - a) / k * delta
        } else if delta < k {
            a / k * delta
        } else {
            a * (k * delta - k * k + one)
        }
    }

    /// Strong-convexity modulus `min(α, 1−α)·κ`.
    pub fn strong_convexity(&self) -> F {
        strong_convexity(self.alpha, self.kappa)
    }

    /// Lipschitz constant of the derivative, `max(α, 1−α)/κ`.
    pub fn grad_lipschitz(&self) -> F {
        grad_lipschitz(self.alpha, self.kappa)
    }
}

/// Lower bound `μ = min(α, 1−α)·κ` on the slope of `∂ℓ^κ_α`.
pub fn strong_convexity<F: Real>(alpha: F, kappa: F) -> F {
    alpha.min(F::one() - alpha) * kappa
}

/// Upper bound `L = max(α, 1−α)/κ` on the slope of `∂ℓ^κ_α`.
pub fn grad_lipschitz<F: Real>(alpha: F, kappa: F) -> F {
    alpha.max(F::one() - alpha) / kappa
}

pub fn soft_loss<F: Real>(alpha: F, kappa: F, delta: F) -> Result<F> {
    Ok(SoftQuantileLoss::new(alpha, kappa)?.value(delta))
}

pub fn soft_loss_grad<F: Real>(alpha: F, kappa: F, delta: F) -> Result<F> {
    Ok(SoftQuantileLoss::new(alpha, kappa)?.grad(delta))
}

/// Huber quantile regression loss with transition width `h`.
pub fn huber_loss<F: Real>(alpha: F, h: F, delta: F) -> Result<F> {
    check_level(alpha)?;
    if !(h > F::zero()) || !h.is_finite() {
        return Err(Error::ParamOutOfRange(format!("huber width {h} must be positive")));
    }
    let one = F::one();
    let half = F::lit(0.5);
    Ok(if delta < -h {
        -(one - alpha) * (delta + h) + half * (one - alpha) * h
    } else if delta <= F::zero() {
        (one - alpha) * delta * delta / (F::lit(2.0) * h)
    } else if delta < h {
        alpha * delta * delta / (F::lit(2.0) * h)
    } else {
        alpha * (delta - h) + half * alpha * h
    })
}

/// Derivative used by the Q-learning update: soft-quantile for `κ > 0`,
/// pinball subgradient for `κ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossGradient<F> {
    Soft(SoftQuantileLoss<F>),
    Pinball(F),
}

impl<F: Real> LossGradient<F> {
    pub fn new(alpha: F, kappa: F) -> Result<Self> {
        if kappa == F::zero() {
            check_level(alpha)?;
            Ok(LossGradient::Pinball(alpha))
        } else {
            Ok(LossGradient::Soft(SoftQuantileLoss::new(alpha, kappa)?))
        }
    }

    #[inline]
    pub fn grad(&self, delta: F) -> F {
        match self {
            LossGradient::Soft(l) => l.grad(delta),
            LossGradient::Pinball(alpha) => pinball_subgradient(*alpha, delta),
        }
    }

    #[inline]
    pub fn value(&self, delta: F) -> F {
        match self {
            LossGradient::Soft(l) => l.value(delta),
            LossGradient::Pinball(alpha) => {
                (*alpha * delta).max(-(F::one() - *alpha) * delta)
            }
        }
    }
}
