use rayon::prelude::*;

use super::grid::RiskGrid;
use super::tensor::{QTensor, TensorKind};
use crate::error::{Error, Result};
use crate::mdp::{argmax, Mdp};
use crate::risk::upper_index;
use crate::scalar::Real;

/// Per-`(t, s, a)` table with `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTable<F> {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    values: Vec<F>,
}

impl<F: Real> TimeTable<F> {
    fn zeros(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        Self { horizon, n_states, n_actions, values: vec![F::zero(); (horizon + 1) * n_states * n_actions] }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn get(&self, t: usize, s: usize, a: usize) -> F {
        self.values[(t * self.n_states + s) * self.n_actions + a]
    }

    pub fn actions(&self, t: usize, s: usize) -> &[F] {
        let i = (t * self.n_states + s) * self.n_actions;
        &self.values[i..i + self.n_actions]
    }

    pub fn max_over_actions(&self, t: usize, s: usize) -> F {
        self.actions(t, s).iter().copied().fold(F::neg_infinity(), F::max)
    }

    fn slice_mut(&mut self, t: usize) -> &mut [F] {
        let n = self.n_states * self.n_actions;
        &mut self.values[t * n..(t + 1) * n]
    }

    /// Greedy decision rule for every `t ≥ 1`, lowest index on ties.
    pub fn greedy_policy(&self) -> MarkovPolicy {
        let mut actions = vec![0; (self.horizon + 1) * self.n_states];
        for t in 1..=self.horizon {
            for s in 0..self.n_states {
                actions[t * self.n_states + s] = argmax(self.actions(t, s).iter().copied());
            }
        }
        MarkovPolicy { horizon: self.horizon, n_states: self.n_states, actions }
    }
}

/// Deterministic Markov policy indexed by the number of steps to go.
///
/// With `T` steps in total, the decision at step `k` uses `action(T − k, s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovPolicy {
    horizon: usize,
    n_states: usize,
    actions: Vec<usize>,
}

impl MarkovPolicy {
    pub fn new(horizon: usize, n_states: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != (horizon + 1) * n_states {
            return Err(Error::ShapeMismatch(format!(
                "policy needs {} entries, got {}",
                (horizon + 1) * n_states,
                actions.len()
            )));
        }
        Ok(Self { horizon, n_states, actions })
    }

    /// The same action in every state at every step.
    pub fn constant(horizon: usize, n_states: usize, action: usize) -> Self {
        Self { horizon, n_states, actions: vec![action; (horizon + 1) * n_states] }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn action(&self, to_go: usize, s: usize) -> usize {
        self.actions[to_go * self.n_states + s]
    }
}

fn check_horizon(t: usize) -> Result<()> {
    if t < 1 {
        return Err(Error::ParamOutOfRange("horizon T must be at least 1".into()));
    }
    Ok(())
}

fn check_alpha0<F: Real>(alpha0: F) -> Result<()> {
    if !(alpha0 > F::zero() && alpha0 < F::one()) {
        return Err(Error::AlphaOutOfRange(alpha0.to_f64_lossy()));
    }
    Ok(())
}

/// `VaR_α` of the atoms `(value, prob)`; sorts in place. `α < 1`.
fn var_of_atoms<F: Real>(atoms: &mut [(F, F)], alpha: F) -> F {
    atoms.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite atoms"));
    let mut acc = F::zero();
    let cum: Vec<F> = atoms
        .iter()
        .map(|&(_, p)| {
            acc = acc + p;
            acc
        })
        .collect();
    atoms[upper_index(&cum, alpha).unwrap_or(atoms.len() - 1)].0
}

fn finite_or_err<F: Real>(values: &[F]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteValue)
    }
}

/// Risk-neutral finite-horizon Q-values.
pub fn solve_neutral_dp<F: Real>(mdp: &Mdp<F>, horizon: usize) -> Result<TimeTable<F>> {
    check_horizon(horizon)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let mut table = TimeTable::zeros(horizon, ns, na);
    for t in 1..=horizon {
        let v: Vec<F> = (0..ns).map(|s| table.max_over_actions(t - 1, s)).collect();
        let next = table.slice_mut(t);
        for s in 0..ns {
            for a in 0..na {
                next[s * na + a] =
                    mdp.transitions(s, a).iter().fold(F::zero(), |acc, tr| acc + tr.prob * (tr.reward + gamma * v[tr.next]));
            }
        }
        finite_or_err(table.slice_mut(t))?;
    }
    Ok(table)
}

/// Nested VaR: `v_{t+1}(s) = max_a VaR_{α₀}[r + γ·v_t(s')]`.
///
/// Returns the Q-table `q_t(s, a)` (so `v_t = max_a q_t`) and its greedy rule.
pub fn solve_nvar_dp<F: Real>(mdp: &Mdp<F>, horizon: usize, alpha0: F) -> Result<(TimeTable<F>, MarkovPolicy)> {
    check_horizon(horizon)?;
    check_alpha0(alpha0)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let mut table = TimeTable::zeros(horizon, ns, na);
    let mut atoms = Vec::new();
    for t in 1..=horizon {
        let v: Vec<F> = (0..ns).map(|s| table.max_over_actions(t - 1, s)).collect();
        let next = table.slice_mut(t);
        for s in 0..ns {
            for a in 0..na {
                atoms.clear();
                atoms.extend(mdp.transitions(s, a).iter().map(|tr| (tr.reward + gamma * v[tr.next], tr.prob)));
                next[s * na + a] = var_of_atoms(&mut atoms, alpha0);
            }
        }
        finite_or_err(next)?;
    }
    let policy = table.greedy_policy();
    Ok((table, policy))
}

/// Distributional VaR baseline on the midpoint grid `(2j+1)/(2J)`.
///
/// Each successor's risk axis is collapsed to `VaR_{α₀}` of the uniform law
/// over its `J` entries, maximized over actions, and the outer `VaR` is taken
/// at the midpoint level of `j`. The decision rule maximizes the collapsed
/// value of the current state.
pub fn solve_dvar_dp<F: Real>(
    mdp: &Mdp<F>,
    grid: &RiskGrid,
    horizon: usize,
    alpha0: F,
) -> Result<(QTensor<F>, MarkovPolicy)> {
    check_horizon(horizon)?;
    check_alpha0(alpha0)?;
    let (ns, na, nj) = (mdp.n_states(), mdp.n_actions(), grid.size());
    let gamma = mdp.gamma();
    let mut q = QTensor::zeros(TensorKind::Distributional, horizon, ns, na, *grid);
    let mut actions = vec![0; (horizon + 1) * ns];
    let levels: Vec<F> = (0..nj).map(|j| grid.midpoint(j)).collect();

    let collapsed = |q: &QTensor<F>, t: usize| -> Vec<F> {
        // (s, a) -> VaR_{α₀} over the risk axis
        let mut out = vec![F::zero(); ns * na];
        let mut col = vec![F::zero(); nj];
        for s in 0..ns {
            for a in 0..na {
                for (j, c) in col.iter_mut().enumerate() {
                    *c = q.get(t, s, j, a);
                }
                col.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
                out[s * na + a] = grid.collapse(&col, alpha0);
            }
        }
        out
    };

    for t in 1..=horizon {
        let prev = collapsed(&q, t - 1);
        let w: Vec<F> = prev.chunks_exact(na).map(|c| c.iter().copied().fold(F::neg_infinity(), F::max)).collect();
        q.slice_mut(t).par_chunks_mut(nj * na).enumerate().for_each(|(s, block)| {
            let mut atoms = Vec::new();
            for a in 0..na {
                atoms.clear();
                atoms.extend(mdp.transitions(s, a).iter().map(|tr| (tr.reward + gamma * w[tr.next], tr.prob)));
                for (j, &level) in levels.iter().enumerate() {
                    block[j * na + a] = var_of_atoms(&mut atoms, level);
                }
            }
        });
        finite_or_err(q.slice(t))?;
        let cur = collapsed(&q, t);
        for s in 0..ns {
            actions[t * ns + s] = argmax(cur[s * na..(s + 1) * na].iter().copied());
        }
    }
    Ok((q, MarkovPolicy::new(horizon, ns, actions)?))
}
