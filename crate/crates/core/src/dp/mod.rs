//! Risk-level discretization and dynamic-programming solvers.

mod baselines;
mod grid;
mod sweep;
mod tensor;

pub use baselines::{solve_dvar_dp, solve_neutral_dp, solve_nvar_dp, MarkovPolicy, TimeTable};
pub use grid::RiskGrid;
pub use sweep::{bellman_lower_sweep, bellman_soft_sweep, bellman_upper_sweep, max_over_actions};
pub use tensor::{meta_path, weighted_norm_dist, QTensor, TensorKind, WeightedNorm};

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::scalar::Real;

/// Which bound [`solve_var_dp`] computes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DpKind<F> {
    Lower,
    Upper,
    Soft { kappa: F },
}

/// `T` applications of the chosen sweep starting from the all-zero slice.
pub fn solve_var_dp<F: Real>(mdp: &Mdp<F>, grid: &RiskGrid, horizon: usize, kind: DpKind<F>) -> Result<QTensor<F>> {
    if horizon < 1 {
        return Err(Error::ParamOutOfRange("horizon T must be at least 1".into()));
    }
    let tensor_kind = match kind {
        DpKind::Lower => TensorKind::Lower,
        DpKind::Upper => TensorKind::Upper,
        DpKind::Soft { kappa } => TensorKind::Soft { kappa },
    };
    let mut q = QTensor::zeros(tensor_kind, horizon, mdp.n_states(), mdp.n_actions(), *grid);
    for t in 1..=horizon {
        let prev = q.slice(t - 1);
        let next = match kind {
            DpKind::Lower => bellman_lower_sweep(mdp, grid, prev)?,
            DpKind::Upper => bellman_upper_sweep(mdp, grid, prev)?,
            DpKind::Soft { kappa } => bellman_soft_sweep(mdp, grid, kappa, prev, t)?,
        };
        q.slice_mut(t).copy_from_slice(&next);
    }
    Ok(q)
}

/// Soft operator applied to every time slice at once: slice `t` of the
/// result is the soft sweep of slice `t − 1` of `q`.
pub fn soft_operator<F: Real>(mdp: &Mdp<F>, kappa: F, q: &QTensor<F>) -> Result<QTensor<F>> {
    let horizon = q
        .horizon()
        .ok_or_else(|| Error::ShapeMismatch("soft operator needs a time-indexed tensor".into()))?;
    if q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions() {
        return Err(Error::ShapeMismatch(format!("{q} does not fit the MDP")));
    }
    let grid = q.grid();
    let mut out = QTensor::zeros(TensorKind::Soft { kappa }, horizon, q.n_states(), q.n_actions(), grid);
    let zero = bellman_soft_sweep(mdp, &grid, kappa, q.slice(0), 0)?;
    out.slice_mut(0).copy_from_slice(&zero);
    for t in 1..=horizon {
        let next = bellman_soft_sweep(mdp, &grid, kappa, q.slice(t - 1), t)?;
        out.slice_mut(t).copy_from_slice(&next);
    }
    Ok(out)
}

/// Stationary analog used as the target of time-free Q-learning.
///
/// Iterates the sweep (soft for `κ > 0`, `q⁺` for `κ = 0`) with the
/// `j = 0` entries pinned to `R̲/(1−γ)`, starting from `R̄/(1−γ)`, until the
/// largest change is at most `tol` or `max_iter` sweeps have run.
pub fn solve_time_free<F: Real>(
    mdp: &Mdp<F>,
    grid: &RiskGrid,
    kappa: F,
    tol: F,
    max_iter: usize,
) -> Result<QTensor<F>> {
    let gamma = mdp.gamma();
    if gamma >= F::one() {
        return Err(Error::GammaOne);
    }
    let scale = F::one() / (F::one() - gamma);
    let floor = mdp.r_min() * scale;
    let mut q = QTensor::zeros(TensorKind::TimeFree { kappa }, 0, mdp.n_states(), mdp.n_actions(), *grid);
    q.values_mut().iter_mut().for_each(|v| *v = mdp.r_max() * scale);
    for _ in 0..max_iter {
        let next = if kappa > F::zero() {
            sweep::soft_sweep_with_floor(mdp, grid, kappa, q.slice(0), None, floor)?
        } else {
            sweep::lower_sweep_with_floor(mdp, grid, q.slice(0), floor)?
        };
        let change = next.iter().zip(q.slice(0)).fold(F::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        q.slice_mut(0).copy_from_slice(&next);
        if change <= tol {
            break;
        }
    }
    Ok(q)
}
