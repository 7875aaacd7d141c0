//! VaR-Q-learning with the soft-quantile loss, in time-indexed and
//! time-free form, plus two sampled diagnostic losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dp::{QTensor, RiskGrid, TensorKind};
use crate::error::{Error, Result};
use crate::mdp::{argmax, Mdp};
use crate::risk::{huber_loss, wasserstein1, LossGradient};
use crate::scalar::Real;

/// Step-size family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule<F> {
    /// `scale · 0.1^(decay · i)`.
    Geometric { scale: F, decay: F },
    /// `c / (1 + i)`.
    RobbinsMonro { c: F },
}

/// What the occurrence counter `i` of the step size counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CounterKey {
    /// Sweeps in which the pair `(s, a)` was sampled.
    #[default]
    StateAction,
    /// Updates of the individual cell `(t, s, j, a)`.
    Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<F> {
    pub j: usize,
    /// `None` selects the time-free variant.
    pub horizon: Option<usize>,
    /// `0` selects the pinball subgradient.
    pub kappa: F,
    pub sweeps: usize,
    pub schedule: Schedule<F>,
    pub counter: CounterKey,
    pub seed: u64,
    /// Time-free only: learn on rewards mapped to `[0, 1]`.
    pub scale_rewards: bool,
    /// State whose risk profile feeds the `W1` diagnostic.
    pub s0: usize,
}

impl<F: Real> TrainConfig<F> {
    pub fn new(j: usize, horizon: Option<usize>, kappa: F, sweeps: usize, seed: u64) -> Self {
        Self {
            j,
            horizon,
            kappa,
            sweeps,
            schedule: Schedule::Geometric { scale: F::lit(100.0), decay: F::lit(0.0003) },
            counter: CounterKey::StateAction,
            seed,
            scale_rewards: true,
            s0: 0,
        }
    }

    pub fn validate(&self) -> Result<RiskGrid> {
        let grid = RiskGrid::new(self.j)?;
        if self.sweeps < 1 {
            return Err(Error::ParamOutOfRange("at least one sweep is required".into()));
        }
        if !(self.kappa >= F::zero() && self.kappa <= F::one()) {
            return Err(Error::KappaOutOfRange(self.kappa.to_f64_lossy()));
        }
        if self.horizon == Some(0) {
            return Err(Error::ParamOutOfRange("horizon T must be at least 1".into()));
        }
        let ok = match self.schedule {
            Schedule::Geometric { scale, decay } => scale > F::zero() && decay >= F::zero(),
            Schedule::RobbinsMonro { c } => c > F::zero(),
        };
        if !ok {
            return Err(Error::ParamOutOfRange("step-size schedule must be positive".into()));
        }
        Ok(grid)
    }

    fn time_free(&self) -> bool {
        self.horizon.is_none()
    }

    fn scaled(&self) -> bool {
        self.time_free() && self.scale_rewards
    }
}

/// `β_i` of the configured schedule.
pub fn step_size<F: Real>(i: u64, cfg: &TrainConfig<F>) -> F {
    let i = F::from_u64(i).unwrap_or_else(F::max_value);
    match cfg.schedule {
        Schedule::Geometric { scale, decay } => scale * F::lit(0.1).powf(decay * i),
        Schedule::RobbinsMonro { c } => c / (F::one() + i),
    }
}

/// Initial table: `t·R̲` per slice, or `1/(1−γ)` everywhere (scaled units)
/// for the time-free variant.
pub fn ql_init<F: Real>(mdp: &Mdp<F>, cfg: &TrainConfig<F>) -> Result<QTensor<F>> {
    let grid = cfg.validate()?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    match cfg.horizon {
        Some(horizon) => {
            let mut q = QTensor::zeros(TensorKind::Soft { kappa: cfg.kappa }, horizon, ns, na, grid);
            for t in 0..=horizon {
                let v = F::from_usize_lossy(t) * mdp.r_min();
                q.slice_mut(t).iter_mut().for_each(|x| *x = v);
            }
            Ok(q)
        }
        None => {
            if mdp.gamma() >= F::one() {
                return Err(Error::GammaOne);
            }
            let top = if cfg.scale_rewards { F::one() } else { mdp.r_max() };
            let mut q = QTensor::zeros(TensorKind::TimeFree { kappa: cfg.kappa }, 0, ns, na, grid);
            let v = top / (F::one() - mdp.gamma());
            q.values_mut().iter_mut().for_each(|x| *x = v);
            Ok(q)
        }
    }
}

/// One sampled transition of the update stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleEvent {
    /// `None` for time-free tables.
    pub t: Option<usize>,
    pub s: usize,
    pub j: usize,
    pub a: usize,
    pub s_next: usize,
}

/// Applies one update to the cell of `ev` and returns its new value.
///
/// Interior cells move by `(β/J)·Σ_{j'} ∂ℓ^κ_{j/J}(r + γ·max_a' q(t−1, s', j', a') − q)`;
/// cells with `j = 0` or `t = 0` relax toward `t·R̲` (time-free: `R̲/(1−γ)`).
pub fn ql_update<F: Real>(q: &mut QTensor<F>, ev: &SampleEvent, beta: F, kappa: F, mdp: &Mdp<F>) -> Result<F> {
    let nj = q.grid().size();
    let time_free = q.is_time_free();
    let t = ev.t.unwrap_or(0);
    if ev.s >= q.n_states() || ev.s_next >= q.n_states() || ev.a >= q.n_actions() || ev.j >= nj {
        return Err(Error::IndexOutOfRange(format!("sample {ev:?}")));
    }
    if !time_free && (ev.t.is_none() || t > q.horizon().unwrap_or(0)) {
        return Err(Error::IndexOutOfRange(format!("time index of {ev:?}")));
    }
    if !(beta > F::zero() && beta.is_finite()) {
        return Err(Error::BetaOutOfRange(beta.to_f64_lossy()));
    }
    let old = q.get(t, ev.s, ev.j, ev.a);
    let interior = ev.j > 0 && (time_free || t > 0);
    let new = if interior {
        let row = mdp.transitions(ev.s, ev.a);
        let k = row
            .binary_search_by(|tr| tr.next.cmp(&ev.s_next))
            .map_err(|_| Error::IndexOutOfRange(format!("{} is not a successor of ({}, {})", ev.s_next, ev.s, ev.a)))?;
        let r = row[k].reward;
        let loss = LossGradient::new(q.grid().level(ev.j), kappa)?;
        let prev = if time_free { 0 } else { t - 1 };
        let gamma = mdp.gamma();
        let mut sum = F::zero();
        for jp in 0..nj {
            sum = sum + loss.grad(r + gamma * q.max_over_actions(prev, ev.s_next, jp) - old);
        }
        old + beta / F::from_usize_lossy(nj) * sum
    } else {
        if beta > F::one() {
            return Err(Error::BetaOutOfRange(beta.to_f64_lossy()));
        }
        let target = if time_free {
            mdp.r_min() / (F::one() - mdp.gamma())
        } else {
            F::from_usize_lossy(t) * mdp.r_min()
        };
        old + beta * (target - old)
    };
    if !new.is_finite() {
        return Err(Error::NonFiniteValue);
    }
    q.set(t, ev.s, ev.j, ev.a, new);
    Ok(new)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput<F> {
    /// Final table, in the original reward units.
    pub q: QTensor<F>,
    /// `(sweep, W1)` after every sweep when a target was given.
    pub diagnostics: Vec<(usize, F)>,
}

/// Risk profile `j ↦ max_a q(t, s, j, a)`.
pub fn risk_profile<F: Real>(q: &QTensor<F>, t: usize, s: usize) -> Vec<F> {
    (0..q.grid().size()).map(|j| q.max_over_actions(t, s, j)).collect()
}

/// Synchronous training: every sweep visits all cells in lexicographic
/// `(t, s, j, a)` order, drawing one successor per cell from a single
/// ChaCha8 stream.
///
/// In the else branch the step is clamped to 1. With a target, the
/// Wasserstein-1 distance between the risk profiles at `s₀` (last slice)
/// is recorded after each sweep.
pub fn train<F: Real>(mdp: &Mdp<F>, cfg: &TrainConfig<F>, target: Option<&QTensor<F>>) -> Result<TrainOutput<F>> {
    let grid = cfg.validate()?;
    let (ns, na, nj) = (mdp.n_states(), mdp.n_actions(), grid.size());
    if cfg.s0 >= ns {
        return Err(Error::IndexOutOfRange(format!("initial state {} outside 0..{ns}", cfg.s0)));
    }
    if let Some(tg) = target {
        let fits = tg.grid() == grid
            && tg.n_states() == ns
            && tg.n_actions() == na
            && match (cfg.horizon, tg.horizon()) {
                (Some(h), Some(th)) => th >= h,
                (None, _) => true,
                _ => false,
            };
        if !fits {
            return Err(Error::ShapeMismatch(format!("target {tg} does not fit the training run")));
        }
    }
    let learner_mdp = if cfg.scaled() { mdp.scaled_rewards() } else { mdp.clone() };
    let mut q = ql_init(&learner_mdp, cfg)?;
    let (span, offset) = if cfg.scaled() {
        (mdp.r_max() - mdp.r_min(), mdp.r_min() / (F::one() - mdp.gamma()))
    } else {
        (F::one(), F::zero())
    };
    let unscale = |v: F| v * span + offset;
    let last = cfg.horizon.unwrap_or(0);
    let target_profile = target.map(|tg| risk_profile(tg, cfg.horizon.unwrap_or(0), cfg.s0));

    let times: Vec<Option<usize>> = match cfg.horizon {
        Some(h) => (0..=h).map(Some).collect(),
        None => vec![None],
    };
    let mut cell_counts = vec![0u64; q.values().len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut diagnostics = Vec::new();
    for sweep in 0..cfg.sweeps {
        for &t in &times {
            for s in 0..ns {
                for j in 0..nj {
                    for a in 0..na {
                        let u = F::lit(rng.gen::<f64>());
                        let s_next = learner_mdp.sample(s, a, u).next;
                        let i = match cfg.counter {
                            CounterKey::StateAction => sweep as u64,
                            CounterKey::Cell => {
                                let k = q.index(t.unwrap_or(0), s, j, a);
                                cell_counts[k] += 1;
                                cell_counts[k] - 1
                            }
                        };
                        let mut beta = step_size(i, cfg);
                        let interior = j > 0 && t != Some(0);
                        if !interior {
                            beta = beta.min(F::one());
                        }
                        ql_update(&mut q, &SampleEvent { t, s, j, a, s_next }, beta, cfg.kappa, &learner_mdp)?;
                    }
                }
            }
        }
        if let Some(tp) = &target_profile {
            let est: Vec<F> = risk_profile(&q, last, cfg.s0).into_iter().map(unscale).collect();
            diagnostics.push((sweep + 1, wasserstein1(&est, tp)?));
        }
    }
    if cfg.scaled() {
        q.values_mut().iter_mut().for_each(|v| *v = unscale(*v));
    }
    Ok(TrainOutput { q, diagnostics })
}

/// Input of the sampled losses: a transition `(s, a) → s'` at time `t ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossSample {
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
}

fn check_loss_input<F: Real>(q: &QTensor<F>, mdp: &Mdp<F>, x: &LossSample, k: usize, kp: usize) -> Result<F> {
    if k < 1 || kp < 1 {
        return Err(Error::ParamOutOfRange("K and K' must be at least 1".into()));
    }
    if x.s >= q.n_states() || x.s_next >= q.n_states() || x.a >= q.n_actions() {
        return Err(Error::IndexOutOfRange(format!("{x:?}")));
    }
    if !q.is_time_free() && (x.t < 1 || x.t > q.horizon().unwrap_or(0)) {
        return Err(Error::IndexOutOfRange(format!("time index {} needs 1..=T", x.t)));
    }
    let row = mdp.transitions(x.s, x.a);
    row.binary_search_by(|tr| tr.next.cmp(&x.s_next))
        .map(|k| row[k].reward)
        .map_err(|_| Error::IndexOutOfRange(format!("{} is not a successor of ({}, {})", x.s_next, x.s, x.a)))
}

/// Current and previous slot; a time-free table reads its only slice for both.
fn slots<F: Real>(q: &QTensor<F>, x: &LossSample) -> (usize, usize) {
    if q.is_time_free() {
        (0, 0)
    } else {
        (x.t, x.t - 1)
    }
}

fn grid_index<F: Real>(tau: F, nj: usize) -> usize {
    (tau * F::from_usize_lossy(nj)).floor().to_usize().unwrap_or(0).min(nj - 1)
}

fn draw<F: Real, R: Rng>(rng: &mut R, n: usize) -> Vec<F> {
    (0..n).map(|_| F::lit(rng.gen::<f64>())).collect()
}

/// Risk-sampled soft-quantile loss.
///
/// Draws `K` current and `K'` next levels; each next level gets its own
/// greedy action. Draws with `τ_k < 1/J` contribute
/// `(q(t, s, 0, a) − t·R̲)²` instead of the quantile terms. Averaged over `K`.
pub fn risk_sampled_loss<F: Real, R: Rng>(
    q: &QTensor<F>,
    mdp: &Mdp<F>,
    x: &LossSample,
    k: usize,
    kp: usize,
    kappa: F,
    rng: &mut R,
) -> Result<F> {
    let r = check_loss_input(q, mdp, x, k, kp)?;
    let nj = q.grid().size();
    let (t, prev) = slots(q, x);
    let taus: Vec<F> = draw(rng, k);
    let next: Vec<F> = draw(rng, kp);
    let next_vals: Vec<F> = next
        .iter()
        .map(|&tp| {
            let jp = grid_index(tp, nj);
            let a_star = q.greedy_action(prev, x.s_next, jp);
            q.get(prev, x.s_next, jp, a_star)
        })
        .collect();
    let floor = if q.is_time_free() {
        mdp.r_min() / (F::one() - mdp.gamma())
    } else {
        F::from_usize_lossy(t) * mdp.r_min()
    };
    let inv_k = F::one() / F::from_usize_lossy(k);
    let mut total = F::zero();
    for &tau in &taus {
        let j = grid_index(tau, nj);
        if j == 0 {
            let d = q.get(t, x.s, 0, x.a) - floor;
            total = total + inv_k * d * d;
        } else {
            let loss = LossGradient::new(q.grid().level(j), kappa)?;
            let cur = q.get(t, x.s, j, x.a);
            let inner = next_vals.iter().fold(F::zero(), |acc, &v| acc + loss.value(r + mdp.gamma() * v - cur));
            total = total + inv_k * inner;
        }
    }
    Ok(total)
}

/// IQN-style Huber quantile loss.
///
/// One greedy action maximizes the distortion-weighted mean
/// `(1/J)·Σ_{j'} Γ(j')·q(t−1, s', j', a')`; the Huber terms at the raw levels
/// `τ_k` are averaged over `K'`.
#[allow(clippy::too_many_arguments)]
pub fn iqn_loss<F: Real, R: Rng>(
    q: &QTensor<F>,
    mdp: &Mdp<F>,
    x: &LossSample,
    k: usize,
    kp: usize,
    h: F,
    distortion: &[F],
    rng: &mut R,
) -> Result<F> {
    let r = check_loss_input(q, mdp, x, k, kp)?;
    let nj = q.grid().size();
    if distortion.len() != nj {
        return Err(Error::LengthMismatch(distortion.len(), nj));
    }
    let (t, prev) = slots(q, x);
    let taus: Vec<F> = draw(rng, k);
    let next: Vec<F> = draw(rng, kp);
    let inv_j = F::one() / F::from_usize_lossy(nj);
    let a_star = argmax((0..q.n_actions()).map(|ap| {
        (0..nj).fold(F::zero(), |acc, jp| acc + distortion[jp] * q.get(prev, x.s_next, jp, ap)) * inv_j
    }));
    let inv_kp = F::one() / F::from_usize_lossy(kp);
    let mut total = F::zero();
    for &tau in &taus {
        let cur = q.get(t, x.s, grid_index(tau, nj), x.a);
        for &tp in &next {
            let delta = r + mdp.gamma() * q.get(prev, x.s_next, grid_index(tp, nj), a_star) - cur;
            total = total + inv_kp * huber_loss(tau, h, delta)?;
        }
    }
    Ok(total)
}
