//! One-step Bellman sweeps over a single time slice laid out `(s, j, a)`.
//!
//! For every `(s, a)` the target is the mixture of the `|succ|·J` atoms
//! `r(s,a,s') + γ·max_a' q(s', j', a')` with masses `p(s,a,s')/J`. It is
//! sorted once and then read at every level.

use rayon::prelude::*;

use super::grid::RiskGrid;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::risk::{lower_index, upper_index, ShortfallSolver, SoftQuantileLoss};
use crate::scalar::Real;

/// `max_a q(s, j, a)` laid out `(s, j)`.
pub fn max_over_actions<F: Real>(q: &[F], n_actions: usize) -> Vec<F> {
    q.chunks_exact(n_actions)
        .map(|c| c.iter().copied().fold(F::neg_infinity(), F::max))
        .collect()
}

/// Sorted atoms and running masses of one `(s, a)` mixture.
#[derive(Debug, Default)]
pub(crate) struct Mixture<F> {
    pub atoms: Vec<(F, F)>,
    pub cum: Vec<F>,
}

impl<F: Real> Mixture<F> {
    pub fn build(&mut self, mdp: &Mdp<F>, s: usize, a: usize, vmax: &[F], j_len: usize) {
        let gamma = mdp.gamma();
        let inv_j = F::one() / F::from_usize_lossy(j_len);
        self.atoms.clear();
        for tr in mdp.transitions(s, a) {
            let w = tr.prob * inv_j;
            let row = &vmax[tr.next * j_len..(tr.next + 1) * j_len];
            self.atoms.extend(row.iter().map(|&v| (tr.reward + gamma * v, w)));
        }
        // Runs from monotone inputs are already sorted, which the stable sort exploits.
        self.atoms.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite atoms"));
        self.cum.clear();
        let mut acc = F::zero();
        for &(_, w) in &self.atoms {
            acc = acc + w;
            self.cum.push(acc);
        }
    }

    /// `q⁺` at level `α < 1`.
    pub fn upper(&self, alpha: F) -> F {
        let i = upper_index(&self.cum, alpha).unwrap_or(self.atoms.len() - 1);
        self.atoms[i].0
    }

    /// `q⁻` at level `α > 0`.
    pub fn lower(&self, alpha: F) -> F {
        self.atoms[lower_index(&self.cum, alpha)].0
    }

    pub fn shortfall_solver(&self, kappa: F) -> ShortfallSolver<F> {
        let (values, probs) = self.atoms.iter().copied().unzip();
        ShortfallSolver::new(values, probs, kappa)
    }
}

fn check_input<F: Real>(mdp: &Mdp<F>, grid: &RiskGrid, q_prev: &[F], monotone: bool) -> Result<()> {
    let (na, nj) = (mdp.n_actions(), grid.size());
    if q_prev.len() != mdp.n_states() * nj * na {
        return Err(Error::ShapeMismatch(format!(
            "slice has {} values, expected {}",
            q_prev.len(),
            mdp.n_states() * nj * na
        )));
    }
    if !q_prev.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteValue);
    }
    if monotone {
        for s in 0..mdp.n_states() {
            for a in 0..na {
                for j in 1..nj {
                    if q_prev[(s * nj + j) * na + a] < q_prev[(s * nj + j - 1) * na + a] {
                        return Err(Error::MonotonicityViolation { s, a });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Runs `fill(s, a, mixture, out)` for every `(s, a)`, writing the `J`
/// entries of `(s, ·, a)` through `out[j]`.
fn mixture_sweep<F, G>(mdp: &Mdp<F>, grid: &RiskGrid, q_prev: &[F], fill: G) -> Result<Vec<F>>
where
    F: Real,
    G: Fn(&Mixture<F>, &mut [F]) + Sync,
{
    let (na, nj) = (mdp.n_actions(), grid.size());
    let vmax = max_over_actions(q_prev, na);
    let mut out = vec![F::zero(); q_prev.len()];
    out.par_chunks_mut(nj * na).enumerate().for_each_init(
        || (Mixture::default(), vec![F::zero(); nj]),
        |(mix, col), (s, block)| {
            for a in 0..na {
                mix.build(mdp, s, a, &vmax, nj);
                fill(mix, col);
                for (j, &v) in col.iter().enumerate() {
                    block[j * na + a] = v;
                }
            }
        },
    );
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFiniteValue)
    }
}

fn min_at<F: Real>(q: &[F], nj: usize, na: usize, j: usize) -> F {
    q.chunks_exact(nj * na)
        .flat_map(|block| block[j * na..(j + 1) * na].iter().copied())
        .fold(F::infinity(), F::min)
}

fn max_at<F: Real>(q: &[F], nj: usize, na: usize, j: usize) -> F {
    q.chunks_exact(nj * na)
        .flat_map(|block| block[j * na..(j + 1) * na].iter().copied())
        .fold(F::neg_infinity(), F::max)
}

/// Lower-bound sweep: `q⁺` at `j/J` for `j ≥ 1`, `R̲ + min q(·, 0, ·)` at `j = 0`.
pub fn bellman_lower_sweep<F: Real>(mdp: &Mdp<F>, grid: &RiskGrid, q_prev: &[F]) -> Result<Vec<F>> {
    check_input(mdp, grid, q_prev, true)?;
    let (na, nj) = (mdp.n_actions(), grid.size());
    let floor = mdp.r_min() + min_at(q_prev, nj, na, 0);
    mixture_sweep(mdp, grid, q_prev, |mix, col| {
        col[0] = floor;
        for (j, c) in col.iter_mut().enumerate().skip(1) {
            *c = mix.upper(grid.level(j));
        }
    })
}

/// Upper-bound sweep: `q⁻` at `(j+1)/J` for `j < J−1`, `R̄ + max q(·, J−1, ·)` at `j = J−1`.
pub fn bellman_upper_sweep<F: Real>(mdp: &Mdp<F>, grid: &RiskGrid, q_prev: &[F]) -> Result<Vec<F>> {
    check_input(mdp, grid, q_prev, true)?;
    let (na, nj) = (mdp.n_actions(), grid.size());
    let ceil = mdp.r_max() + max_at(q_prev, nj, na, nj - 1);
    mixture_sweep(mdp, grid, q_prev, |mix, col| {
        for (j, c) in col.iter_mut().enumerate().take(nj - 1) {
            *c = mix.lower(grid.level(j + 1));
        }
        col[nj - 1] = ceil;
    })
}

/// Soft-quantile sweep producing time step `t` from slice `t − 1`.
///
/// Entries with `j = 0`, and every entry when `t = 0`, are `t·R̲`.
pub fn bellman_soft_sweep<F: Real>(
    mdp: &Mdp<F>,
    grid: &RiskGrid,
    kappa: F,
    q_prev: &[F],
    t: usize,
) -> Result<Vec<F>> {
    let floor = F::from_usize_lossy(t) * mdp.r_min();
    soft_sweep_with_floor(mdp, grid, kappa, q_prev, (t == 0).then_some(floor), floor)
}

/// Shared body of the time-indexed and stationary soft sweeps. When
/// `constant` is set every entry takes that value.
pub(crate) fn soft_sweep_with_floor<F: Real>(
    mdp: &Mdp<F>,
    grid: &RiskGrid,
    kappa: F,
    q_prev: &[F],
    constant: Option<F>,
    floor: F,
) -> Result<Vec<F>> {
    SoftQuantileLoss::new(F::lit(0.5), kappa)?;
    check_input(mdp, grid, q_prev, false)?;
    if let Some(c) = constant {
        return Ok(vec![c; q_prev.len()]);
    }
    let nj = grid.size();
    let losses: Vec<SoftQuantileLoss<F>> =
        (1..nj).map(|j| SoftQuantileLoss::new(grid.level(j), kappa)).collect::<Result<_>>()?;
    mixture_sweep(mdp, grid, q_prev, |mix, col| {
        let solver = mix.shortfall_solver(kappa);
        col[0] = floor;
        for (c, loss) in col.iter_mut().skip(1).zip(&losses) {
            *c = solver.solve(loss);
        }
    })
}

/// Stationary hard sweep with the `j = 0` entries pinned to `floor`.
pub(crate) fn lower_sweep_with_floor<F: Real>(
    mdp: &Mdp<F>,
    grid: &RiskGrid,
    q_prev: &[F],
    floor: F,
) -> Result<Vec<F>> {
    check_input(mdp, grid, q_prev, false)?;
    mixture_sweep(mdp, grid, q_prev, |mix, col| {
        col[0] = floor;
        for (j, c) in col.iter_mut().enumerate().skip(1) {
            *c = mix.upper(grid.level(j));
        }
    })
}
