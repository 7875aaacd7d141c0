//! Discrete-distribution algebra: quantiles, VaR, loss families, shortfall
//! risk and the Wasserstein-1 diagnostic.

mod dist;
mod loss;
mod quantile;
mod shortfall;
mod wasserstein;

pub use dist::{Atom, DiscreteDistribution, ExtendedReal, MASS_TOL};
pub use loss::{
    grad_lipschitz, huber_loss, pinball_subgradient, quantile_loss, soft_loss, soft_loss_grad,
    strong_convexity, LossGradient, LossParams, SoftQuantileLoss,
};
pub use quantile::{lower_index, quantile_lower, quantile_upper, upper_index, var, var_of_sorted_uniform};
pub use shortfall::{shortfall_value, ShortfallSolver};
pub use wasserstein::wasserstein1;
