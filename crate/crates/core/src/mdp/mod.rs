//! Tabular MDP model, CSV ingestion and seeded domain generators.

mod csv_io;
mod domains;

pub use csv_io::{load_mdp_csv, write_mdp_csv, CSV_HEADER};
pub use domains::{
    gen_cliffwalk, gen_gamblers_ruin, gen_inventory, gen_random_mdp, DomainKind, DomainSpec,
    InventoryPrices,
};

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Slack allowed on the per-(s, a) probability mass before renormalizing.
pub const STOCHASTICITY_TOL: f64 = 1e-6;
/// Two rows for the same `(s, a, s')` must carry rewards this close.
pub const REWARD_AGREEMENT_TOL: f64 = 1e-9;
/// Discount used when none is given.
pub const DEFAULT_GAMMA: f64 = 0.9;

/// One outcome of taking an action: successor, its probability, and the
/// reward collected on the way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<F> {
    pub next: usize,
    pub prob: F,
    pub reward: F,
}

/// Finite MDP with a sparse transition kernel.
///
/// Rewards are attached to transitions `(s, a, s')`, which covers the
/// state-action reward model as the special case of equal rewards across
/// successors. After validation every `(s, a)` row holds strictly positive
/// probabilities summing to one, sorted by successor index with no repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp<F> {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<Transition<F>>>,
    gamma: F,
    r_min: F,
    r_max: F,
}

impl<F: Real> Mdp<F> {
    /// Validates and normalizes a transition table given row-major in
    /// `(s, a)`. Reward bounds are taken from the table.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        rows: Vec<Vec<Transition<F>>>,
        gamma: F,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::ParamOutOfRange("an MDP needs at least one state and one action".into()));
        }
        if rows.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch(format!(
                "expected {} transition rows, got {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        check_gamma(gamma)?;
        let mut normalized = Vec::with_capacity(rows.len());
        for (idx, row) in rows.into_iter().enumerate() {
            let (s, a) = (idx / n_actions, idx % n_actions);
            normalized.push(normalize_row(s, a, n_states, row)?);
        }
        let (mut r_min, mut r_max) = (F::infinity(), F::neg_infinity());
        for tr in normalized.iter().flatten() {
            r_min = r_min.min(tr.reward);
            r_max = r_max.max(tr.reward);
        }
        Ok(Self { n_states, n_actions, rows: normalized, gamma, r_min, r_max })
    }

    /// Replaces the reward bounds by a declared range, which must contain
    /// every reward in the table.
    pub fn with_reward_bounds(mut self, r_min: F, r_max: F) -> Result<Self> {
        if !(r_min <= self.r_min && self.r_max <= r_max) {
            return Err(Error::ParamOutOfRange(format!(
                "reward bounds [{r_min}, {r_max}] do not contain [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        self.r_min = r_min;
        self.r_max = r_max;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: F) -> Result<Self> {
        check_gamma(gamma)?;
        self.gamma = gamma;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    /// Lower reward bound `R̲`.
    pub fn r_min(&self) -> F {
        self.r_min
    }

    /// Upper reward bound `R̄`.
    pub fn r_max(&self) -> F {
        self.r_max
    }

    #[inline]
    pub fn transitions(&self, s: usize, a: usize) -> &[Transition<F>] {
        &self.rows[s * self.n_actions + a]
    }

    /// Largest number of successors of any `(s, a)`.
    pub fn max_branching(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Picks the successor whose cumulative-probability bucket contains `u ∈ [0, 1)`.
    #[inline]
    pub fn sample(&self, s: usize, a: usize, u: F) -> &Transition<F> {
        let row = self.transitions(s, a);
        let mut acc = F::zero();
        for tr in row {
            acc = acc + tr.prob;
            if u < acc {
                return tr;
            }
        }
        &row[row.len() - 1]
    }

    /// Same dynamics with rewards mapped to `(r − R̲)/(R̄ − R̲)` and bounds `[0, 1]`.
    ///
    /// A constant reward table maps to all zeros.
    pub fn scaled_rewards(&self) -> Self {
        let span = self.r_max - self.r_min;
        let scale = if span > F::zero() { F::one() / span } else { F::zero() };
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|tr| Transition { reward: (tr.reward - self.r_min) * scale, ..*tr })
                    .collect()
            })
            .collect();
        Self {
            rows,
            r_min: F::zero(),
            r_max: if span > F::zero() { F::one() } else { F::zero() },
            ..*self
        }
    }
}

fn check_gamma<F: Real>(gamma: F) -> Result<()> {
    if !(gamma >= F::zero() && gamma <= F::one()) {
        return Err(Error::ParamOutOfRange(format!("discount {gamma} outside [0, 1]")));
    }
    Ok(())
}

fn normalize_row<F: Real>(
    s: usize,
    a: usize,
    n_states: usize,
    mut row: Vec<Transition<F>>,
) -> Result<Vec<Transition<F>>> {
    for tr in &row {
        if tr.next >= n_states {
            return Err(Error::DanglingIndex(format!(
                "successor {} of ({s}, {a}) outside 0..{n_states}",
                tr.next
            )));
        }
        if !tr.prob.is_finite() || !tr.reward.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        if tr.prob < F::zero() {
            return Err(Error::NegativeProbability(tr.prob.to_f64_lossy()));
        }
    }
    row.retain(|tr| tr.prob > F::zero());
    row.sort_by_key(|x| x.next);
    let mut merged: Vec<Transition<F>> = Vec::with_capacity(row.len());
    for tr in row {
        match merged.last_mut() {
            Some(last) if last.next == tr.next => {
                if (last.reward - tr.reward).abs() > F::lit(REWARD_AGREEMENT_TOL) {
                    return Err(Error::DuplicateRewardConflict { s, a, next: tr.next });
                }
                last.prob = last.prob + tr.prob;
            }
            _ => merged.push(tr),
        }
    }
    let sum = merged.iter().fold(F::zero(), |acc, tr| acc + tr.prob);
    if merged.is_empty() || (sum - F::one()).abs() > F::lit(STOCHASTICITY_TOL) {
        return Err(Error::StochasticityViolation { s, a, sum: sum.to_f64_lossy() });
    }
    // Rows already stochastic up to rounding keep their bits, so that a
    // written table reloads unchanged.
    if (sum - F::one()).abs() > F::lit(1e-12) {
        for tr in &mut merged {
            tr.prob = tr.prob / sum;
        }
    }
    Ok(merged)
}

/// Index of the maximal entry, lowest index on ties.
#[inline]
pub(crate) fn argmax<F: Real>(values: impl IntoIterator<Item = F>) -> usize {
    let mut best = 0;
    let mut best_v = F::neg_infinity();
    for (i, v) in values.into_iter().enumerate() {
        if v.partial_cmp(&best_v) == Some(Ordering::Greater) {
            best = i;
            best_v = v;
        }
    }
    best
}
