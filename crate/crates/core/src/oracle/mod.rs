//! Exact return distributions and brute-force optimal static VaR on tiny
//! MDPs, by enumeration of trajectories and history-dependent policies.

use std::collections::HashMap;

use crate::dp::MarkovPolicy;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::risk::{upper_index, DiscreteDistribution};
use crate::scalar::Real;

/// Default cap on the number of trajectories of one policy.
pub const ATOM_BUDGET: u64 = 1_000_000;
/// Default cap on the number of enumerated policies.
pub const POLICY_BUDGET: u64 = 1 << 22;
/// Returns closer than this are merged into one atom.
pub const MERGE_TOL: f64 = 1e-12;

/// Deterministic history-dependent policy.
///
/// `past` lists the `(state, action)` pairs taken so far and `s` is the
/// current state, so the step index is `past.len()`.
pub trait HistoryPolicy {
    fn action(&self, past: &[(usize, usize)], s: usize) -> Option<usize>;
}

/// Markov rule read as a history policy over a horizon of `T` steps.
#[derive(Debug, Clone)]
pub struct MarkovAdapter<'a> {
    pub policy: &'a MarkovPolicy,
    pub horizon: usize,
}

impl HistoryPolicy for MarkovAdapter<'_> {
    fn action(&self, past: &[(usize, usize)], s: usize) -> Option<usize> {
        let to_go = self.horizon.checked_sub(past.len())?;
        (to_go >= 1 && to_go <= self.policy.horizon()).then(|| self.policy.action(to_go, s))
    }
}

/// Explicit table keyed by the flattened history `s₀, a₀, …, s_k`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TablePolicy {
    pub table: HashMap<Vec<usize>, usize>,
}

impl TablePolicy {
    pub fn insert(&mut self, history: Vec<usize>, action: usize) {
        self.table.insert(history, action);
    }
}

impl HistoryPolicy for TablePolicy {
    fn action(&self, past: &[(usize, usize)], s: usize) -> Option<usize> {
        let mut key: Vec<usize> = past.iter().flat_map(|&(s, a)| [s, a]).collect();
        key.push(s);
        self.table.get(&key).copied()
    }
}

/// Any closure of the history.
pub struct FnPolicy<G>(pub G);

impl<G: Fn(&[(usize, usize)], usize) -> usize> HistoryPolicy for FnPolicy<G> {
    fn action(&self, past: &[(usize, usize)], s: usize) -> Option<usize> {
        Some((self.0)(past, s))
    }
}

/// Sorts `(value, prob)` pairs and merges values within [`MERGE_TOL`].
fn merge_atoms<F: Real>(mut atoms: Vec<(F, F)>) -> Result<DiscreteDistribution<F>> {
    atoms.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite returns"));
    let tol = F::lit(MERGE_TOL);
    let mut merged: Vec<(F, F)> = Vec::with_capacity(atoms.len());
    for (v, p) in atoms {
        match merged.last_mut() {
            Some(last) if v - last.0 <= tol => last.1 = last.1 + p,
            _ => merged.push((v, p)),
        }
    }
    DiscreteDistribution::new(merged)
}

fn check_state<F: Real>(mdp: &Mdp<F>, s: usize, what: &str) -> Result<()> {
    if s >= mdp.n_states() {
        return Err(Error::IndexOutOfRange(format!("{what} {s} outside 0..{}", mdp.n_states())));
    }
    Ok(())
}

/// Exact law of `Σ_{k<T} γ^k r_k` under `pi` from `s0`.
pub fn policy_return_distribution<F: Real, P: HistoryPolicy + ?Sized>(
    mdp: &Mdp<F>,
    pi: &P,
    s0: usize,
    horizon: usize,
    budget: u64,
) -> Result<DiscreteDistribution<F>> {
    check_state(mdp, s0, "initial state")?;
    struct Walk<'m, F, P: ?Sized> {
        mdp: &'m Mdp<F>,
        pi: &'m P,
        horizon: usize,
        budget: u64,
        past: Vec<(usize, usize)>,
        atoms: Vec<(F, F)>,
    }
    impl<F: Real, P: HistoryPolicy + ?Sized> Walk<'_, F, P> {
        fn go(&mut self, s: usize, prob: F, ret: F, disc: F) -> Result<()> {
            let k = self.past.len();
            if k == self.horizon {
                if self.atoms.len() as u64 >= self.budget {
                    return Err(Error::BudgetExceeded { needed: self.budget + 1, budget: self.budget });
                }
                self.atoms.push((ret, prob));
                return Ok(());
            }
            let a = self
                .pi
                .action(&self.past, s)
                .filter(|&a| a < self.mdp.n_actions())
                .ok_or_else(|| Error::DanglingIndex(format!("policy undefined at step {k}, state {s}")))?;
            self.past.push((s, a));
            for tr in self.mdp.transitions(s, a) {
                self.go(tr.next, prob * tr.prob, ret + disc * tr.reward, disc * self.mdp.gamma())?;
            }
            self.past.pop();
            Ok(())
        }
    }
    let mut walk = Walk { mdp, pi, horizon, budget, past: Vec::new(), atoms: Vec::new() };
    walk.go(s0, F::one(), F::zero(), F::one())?;
    merge_atoms(walk.atoms)
}

/// Number of history-dependent deterministic policies over reachable
/// histories with the first action fixed, saturating at `u64::MAX`.
pub fn count_policies<F: Real>(mdp: &Mdp<F>, horizon: usize, s0: usize, a0: usize) -> u64 {
    if horizon == 0 {
        return 1;
    }
    let ns = mdp.n_states();
    // n[s] at depth d counts the policies of the subtree rooted at a depth-d node in s.
    let mut n = vec![1u64; ns];
    let subtree = |n: &[u64], s: usize, a: usize| {
        mdp.transitions(s, a).iter().fold(1u64, |acc, tr| acc.saturating_mul(n[tr.next]))
    };
    for _ in 1..horizon {
        n = (0..ns)
            .map(|s| (0..mdp.n_actions()).fold(0u64, |acc, a| acc.saturating_add(subtree(&n, s, a))))
            .collect();
    }
    subtree(&n, s0, a0)
}

fn check_alphas<F: Real>(alphas: &[F]) -> Result<()> {
    for &a in alphas {
        if !(a > F::zero() && a < F::one()) {
            return Err(Error::AlphaOutOfRange(a.to_f64_lossy()));
        }
    }
    Ok(())
}

/// Maximal `VaR_α` over all history-dependent deterministic policies with
/// `π₀(s₀) = a₀`, for each requested `α ∈ (0, 1)`.
///
/// Every reachable decision node picks an action in turn, so each policy is
/// visited exactly once and its return law assembled along the way.
pub fn brute_force_qstar<F: Real>(
    mdp: &Mdp<F>,
    horizon: usize,
    s0: usize,
    a0: usize,
    alphas: &[F],
    budget: u64,
) -> Result<Vec<F>> {
    check_state(mdp, s0, "initial state")?;
    if a0 >= mdp.n_actions() {
        return Err(Error::IndexOutOfRange(format!("action {a0} outside 0..{}", mdp.n_actions())));
    }
    if horizon < 1 {
        return Err(Error::ParamOutOfRange("horizon T must be at least 1".into()));
    }
    check_alphas(alphas)?;
    let needed = count_policies(mdp, horizon, s0, a0);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }

    struct Node<F> {
        s: usize,
        depth: usize,
        prob: F,
        ret: F,
        disc: F,
    }
    struct Search<'m, F> {
        mdp: &'m Mdp<F>,
        horizon: usize,
        alphas: &'m [F],
        pending: Vec<Node<F>>,
        atoms: Vec<(F, F)>,
        best: Vec<F>,
        scratch: Vec<(F, F)>,
        cum: Vec<F>,
    }
    impl<F: Real> Search<'_, F> {
        fn expand(&mut self, node: &Node<F>, a: usize) -> usize {
            let row = self.mdp.transitions(node.s, a);
            for tr in row {
                let ret = node.ret + node.disc * tr.reward;
                let prob = node.prob * tr.prob;
                if node.depth + 1 == self.horizon {
                    self.atoms.push((ret, prob));
                } else {
                    self.pending.push(Node {
                        s: tr.next,
                        depth: node.depth + 1,
                        prob,
                        ret,
                        disc: node.disc * self.mdp.gamma(),
                    });
                }
            }
            row.len()
        }

        fn undo(&mut self, node: &Node<F>, n_children: usize) {
            if node.depth + 1 == self.horizon {
                self.atoms.truncate(self.atoms.len() - n_children);
            } else {
                self.pending.truncate(self.pending.len() - n_children);
            }
        }

        fn run(&mut self) {
            let Some(node) = self.pending.pop() else {
                self.score();
                return;
            };
            for a in 0..self.mdp.n_actions() {
                let n = self.expand(&node, a);
                self.run();
                self.undo(&node, n);
            }
            self.pending.push(node);
        }

        fn score(&mut self) {
            self.scratch.clear();
            self.scratch.extend_from_slice(&self.atoms);
            self.scratch.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite returns"));
            self.cum.clear();
            let mut acc = F::zero();
            for &(_, p) in &self.scratch {
                acc = acc + p;
                self.cum.push(acc);
            }
            for (best, &alpha) in self.best.iter_mut().zip(self.alphas) {
                let i = upper_index(&self.cum, alpha).unwrap_or(self.scratch.len() - 1);
                *best = best.max(self.scratch[i].0);
            }
        }
    }

    let mut search = Search {
        mdp,
        horizon,
        alphas,
        pending: Vec::new(),
        atoms: Vec::new(),
        best: vec![F::neg_infinity(); alphas.len()],
        scratch: Vec::new(),
        cum: Vec::new(),
    };
    let root = Node { s: s0, depth: 0, prob: F::one(), ret: F::zero(), disc: F::one() };
    search.expand(&root, a0);
    search.run();
    Ok(search.best)
}

/// Maximal `VaR_α` over deterministic Markov policies with `π₀(s₀) = a₀`.
///
/// Decisions are enumerated for every state reachable at each step; the
/// number of combinations must not exceed `budget`.
pub fn best_markov_var<F: Real>(
    mdp: &Mdp<F>,
    horizon: usize,
    s0: usize,
    a0: usize,
    alphas: &[F],
    budget: u64,
) -> Result<Vec<F>> {
    check_state(mdp, s0, "initial state")?;
    if horizon < 1 {
        return Err(Error::ParamOutOfRange("horizon T must be at least 1".into()));
    }
    check_alphas(alphas)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    // Decision slots (k, s) for k ≥ 1 with s reachable at step k.
    let mut reach = vec![false; ns];
    reach[s0] = true;
    let mut slots = Vec::new();
    for k in 1..horizon {
        let mut next = vec![false; ns];
        for s in (0..ns).filter(|&s| reach[s]) {
            for a in 0..na {
                for tr in mdp.transitions(s, a) {
                    next[tr.next] = true;
                }
            }
        }
        reach = next;
        slots.extend((0..ns).filter(|&s| reach[s]).map(|s| (k, s)));
    }
    let needed = (na as u64).checked_pow(slots.len() as u32).unwrap_or(u64::MAX);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let mut choice = vec![0usize; slots.len()];
    let mut table = vec![0usize; horizon * ns];
    let mut best = vec![F::neg_infinity(); alphas.len()];
    loop {
        for (&(k, s), &a) in slots.iter().zip(&choice) {
            table[k * ns + s] = a;
        }
        let pi = FnPolicy(|past: &[(usize, usize)], s: usize| if past.is_empty() { a0 } else { table[past.len() * ns + s] });
        let d = policy_return_distribution(mdp, &pi, s0, horizon, u64::MAX)?;
        let cum = d.cumulative();
        for (b, &alpha) in best.iter_mut().zip(alphas) {
            let i = upper_index(&cum, alpha).unwrap_or(d.len() - 1);
            *b = b.max(d.atoms()[i].value);
        }
        // odometer
        let mut i = 0;
        while i < choice.len() {
            choice[i] += 1;
            if choice[i] < na {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == choice.len() {
            break;
        }
    }
    Ok(best)
}
