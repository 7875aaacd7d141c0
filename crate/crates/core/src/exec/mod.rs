//! Policy execution against the sampled environment and Monte Carlo
//! quantile estimates with distribution-free confidence intervals.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::dp::{MarkovPolicy, QTensor, TensorKind};
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::scalar::Real;

/// Relative slack in the risk-level update.
pub const TAU_EPS: f64 = 1e-14;
/// Confidence level of the order-statistic interval.
pub const CI_LEVEL: f64 = 0.99;
pub const MIN_QUANTILE_SAMPLES: usize = 20;
pub const MIN_EPISODES: usize = 100;

/// One decision of an executed episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<F> {
    pub t: usize,
    pub s: usize,
    pub j: usize,
    pub a: usize,
    pub r: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult<F> {
    pub discounted_return: F,
    pub trace: Option<Vec<Step<F>>>,
}

/// Random stream of episode `episode` under `seed`.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

fn check_common<F: Real>(mdp: &Mdp<F>, s0: usize, horizon: usize) -> Result<()> {
    if s0 >= mdp.n_states() {
        return Err(Error::IndexOutOfRange(format!("initial state {s0} outside 0..{}", mdp.n_states())));
    }
    if horizon < 1 {
        return Err(Error::ParamOutOfRange("horizon T must be at least 1".into()));
    }
    Ok(())
}

/// Checks that `q` can drive [`exec_var_episode`] for `horizon` steps.
pub fn check_var_policy<F: Real>(mdp: &Mdp<F>, q: &QTensor<F>, s0: usize, alpha0: F, horizon: usize) -> Result<()> {
    check_common(mdp, s0, horizon)?;
    if !(alpha0 > F::zero() && alpha0 < F::one()) {
        return Err(Error::AlphaOutOfRange(alpha0.to_f64_lossy()));
    }
    if mdp.gamma() == F::zero() {
        return Err(Error::GammaZero);
    }
    if q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions() {
        return Err(Error::ShapeMismatch(format!("{q} does not fit the MDP")));
    }
    if let Some(available) = q.horizon() {
        if available < horizon {
            return Err(Error::HorizonMismatch { available, requested: horizon });
        }
    }
    Ok(())
}

/// Smallest `j` with `max_a q(t, s, j, a) ≥ threshold`, or `J − 1`.
fn next_risk_index<F: Real>(q: &QTensor<F>, t: usize, s: usize, threshold: F) -> usize {
    let nj = q.grid().size();
    let ok = |j: usize| q.max_over_actions(t, s, j) >= threshold;
    let j = if matches!(q.kind(), TensorKind::Lower | TensorKind::Upper) {
        // bounds are monotone in j
        first_index(nj, ok)
    } else {
        (0..nj).find(|&j| ok(j)).unwrap_or(nj)
    };
    j.min(nj - 1)
}

/// Runs the static VaR policy for `horizon` steps with the caller's stream.
///
/// The decision at step `k` reads slice `t = T − k`; after observing
/// `(r, s')` the risk index moves to the smallest `j'` whose continuation
/// value covers `τ = (q_t(s, j, a⋆) − r)/γ`.
pub fn exec_var_episode_with<F: Real, R: Rng>(
    mdp: &Mdp<F>,
    q: &QTensor<F>,
    s0: usize,
    alpha0: F,
    horizon: usize,
    rng: &mut R,
    record: bool,
) -> Result<EpisodeResult<F>> {
    check_var_policy(mdp, q, s0, alpha0, horizon)?;
    let gamma = mdp.gamma();
    let eps = F::lit(TAU_EPS);
    let mut j = q.grid().index_of(alpha0)?;
    let (mut s, mut ret, mut disc) = (s0, F::zero(), F::one());
    let mut trace = record.then(|| Vec::with_capacity(horizon));
    for k in 0..horizon {
        let t = horizon - k;
        let a = q.greedy_action(t, s, j);
        let v = q.get(t, s, j, a);
        let u = F::lit(rng.gen::<f64>());
        let step = *mdp.sample(s, a, u);
        if let Some(tr) = trace.as_mut() {
            tr.push(Step { t, s, j, a, r: step.reward });
        }
        ret = ret + disc * step.reward;
        disc = disc * gamma;
        let tau = (v - step.reward) / gamma;
        j = next_risk_index(q, t - 1, step.next, tau - eps * tau.abs());
        s = step.next;
    }
    Ok(EpisodeResult { discounted_return: ret, trace })
}

/// [`exec_var_episode_with`] on stream 0 of `seed`.
pub fn exec_var_episode<F: Real>(
    mdp: &Mdp<F>,
    q: &QTensor<F>,
    s0: usize,
    alpha0: F,
    horizon: usize,
    seed: u64,
    record: bool,
) -> Result<EpisodeResult<F>> {
    exec_var_episode_with(mdp, q, s0, alpha0, horizon, &mut episode_rng(seed, 0), record)
}

pub fn simulate_markov_with<F: Real, R: Rng>(
    mdp: &Mdp<F>,
    policy: &MarkovPolicy,
    s0: usize,
    horizon: usize,
    rng: &mut R,
    record: bool,
) -> Result<EpisodeResult<F>> {
    check_common(mdp, s0, horizon)?;
    if policy.horizon() < horizon {
        return Err(Error::HorizonMismatch { available: policy.horizon(), requested: horizon });
    }
    let (mut s, mut ret, mut disc) = (s0, F::zero(), F::one());
    let mut trace = record.then(|| Vec::with_capacity(horizon));
    for k in 0..horizon {
        let t = horizon - k;
        let a = policy.action(t, s);
        if a >= mdp.n_actions() {
            return Err(Error::IndexOutOfRange(format!("policy action {a} outside 0..{}", mdp.n_actions())));
        }
        let step = *mdp.sample(s, a, F::lit(rng.gen::<f64>()));
        if let Some(tr) = trace.as_mut() {
            tr.push(Step { t, s, j: 0, a, r: step.reward });
        }
        ret = ret + disc * step.reward;
        disc = disc * mdp.gamma();
        s = step.next;
    }
    Ok(EpisodeResult { discounted_return: ret, trace })
}

/// Seeded rollout of a Markov policy on stream 0 of `seed`.
pub fn simulate_markov<F: Real>(
    mdp: &Mdp<F>,
    policy: &MarkovPolicy,
    s0: usize,
    horizon: usize,
    seed: u64,
) -> Result<EpisodeResult<F>> {
    simulate_markov_with(mdp, policy, s0, horizon, &mut episode_rng(seed, 0), false)
}

/// Empirical quantile with a distribution-free confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate<F> {
    pub point: F,
    pub ci_lo: F,
    pub ci_hi: F,
}

impl<F: Real> QuantileEstimate<F> {
    pub fn half_width(&self) -> F {
        (self.ci_hi - self.ci_lo) / F::lit(2.0)
    }
}

/// Order statistic `⌊αn⌋` (0-based, ascending) with the 99% interval
/// between the order statistics whose ranks bound `Binomial(n, α)`.
pub fn mc_quantile<F: Real>(returns: &[F], alpha: F) -> Result<QuantileEstimate<F>> {
    let n = returns.len();
    if n < MIN_QUANTILE_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_QUANTILE_SAMPLES, got: n });
    }
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::AlphaOutOfRange(alpha.to_f64_lossy()));
    }
    if !returns.iter().all(|r| r.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite returns"));
    let a64 = alpha.to_f64_lossy();
    let idx = ((a64 * n as f64).floor() as usize).min(n - 1);
    let binom = Binomial::new(a64, n as u64).map_err(|e| Error::ParamOutOfRange(e.to_string()))?;
    let tail = (1.0 - CI_LEVEL) / 2.0;
    // The (i+1)-th order statistic exceeds the quantile with probability about P[B ≤ i].
    let below = first_index(n, |i| binom.cdf(i as u64) > tail);
    let lo = below.saturating_sub(1).min(idx);
    let hi = first_index(n, |i| binom.cdf(i as u64) >= 1.0 - tail).min(n - 1).max(idx);
    Ok(QuantileEstimate { point: sorted[idx], ci_lo: sorted[lo], ci_hi: sorted[hi] })
}

/// First `i < n` satisfying a monotone predicate, or `n`.
fn first_index(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Policy driven by [`evaluate_policy`].
#[derive(Debug, Clone, Copy)]
pub enum PolicyRef<'a, F> {
    /// Static VaR policy started at level `alpha0`.
    Var { q: &'a QTensor<F>, alpha0: F },
    Markov(&'a MarkovPolicy),
}

/// Discounted returns of `episodes` independent rollouts; episode `e` uses
/// stream `e` of `seed`, so the result does not depend on scheduling.
pub fn rollout_returns<F: Real>(
    mdp: &Mdp<F>,
    policy: PolicyRef<'_, F>,
    s0: usize,
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> Result<Vec<F>> {
    match policy {
        PolicyRef::Var { q, alpha0 } => check_var_policy(mdp, q, s0, alpha0, horizon)?,
        PolicyRef::Markov(p) => {
            check_common(mdp, s0, horizon)?;
            if p.horizon() < horizon {
                return Err(Error::HorizonMismatch { available: p.horizon(), requested: horizon });
            }
        }
    }
    (0..episodes as u64)
        .into_par_iter()
        .map(|e| {
            let mut rng = episode_rng(seed, e);
            let res = match policy {
                PolicyRef::Var { q, alpha0 } => exec_var_episode_with(mdp, q, s0, alpha0, horizon, &mut rng, false),
                PolicyRef::Markov(p) => simulate_markov_with(mdp, p, s0, horizon, &mut rng, false),
            };
            res.map(|r| r.discounted_return)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow<F> {
    pub alpha: F,
    pub estimate: QuantileEstimate<F>,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport<F> {
    pub rows: Vec<ReportRow<F>>,
}

impl<F: Real> EvalReport<F> {
    pub const HEADER: [&'static str; 6] = ["alpha", "point", "ci_lo", "ci_hi", "n", "seed"];

    pub fn push(&mut self, alpha: F, returns: &[F], seed: u64) -> Result<()> {
        let estimate = mc_quantile(returns, alpha)?;
        self.rows.push(ReportRow { alpha, estimate, n: returns.len(), seed });
        Ok(())
    }

    pub fn records(&self) -> Vec<[String; 6]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    r.alpha.to_string(),
                    r.estimate.point.to_string(),
                    r.estimate.ci_lo.to_string(),
                    r.estimate.ci_hi.to_string(),
                    r.n.to_string(),
                    r.seed.to_string(),
                ]
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let err = |e: csv::Error| Error::Io { path: "<report>".into(), message: e.to_string() };
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
        w.write_record(Self::HEADER).map_err(err)?;
        for rec in self.records() {
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Io { path: "<report>".into(), message: e.to_string() })
    }
}

/// Rolls out one policy and reports its empirical quantile at every `α`.
pub fn evaluate_policy<F: Real>(
    mdp: &Mdp<F>,
    policy: PolicyRef<'_, F>,
    s0: usize,
    horizon: usize,
    alphas: &[F],
    episodes: usize,
    seed: u64,
) -> Result<EvalReport<F>> {
    if episodes < MIN_EPISODES {
        return Err(Error::TooFewSamples { needed: MIN_EPISODES, got: episodes });
    }
    let returns = rollout_returns(mdp, policy, s0, horizon, episodes, seed)?;
    let mut report = EvalReport::default();
    for &alpha in alphas {
        report.push(alpha, &returns, seed)?;
    }
    Ok(report)
}
