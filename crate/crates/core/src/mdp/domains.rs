use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{load_mdp_csv, Mdp, Transition, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::risk::DiscreteDistribution;
use crate::scalar::Real;

const CLIFF_REWARD: f64 = -100.0;
const STEP_REWARD: f64 = -1.0;

/// Cliffwalk grid.
///
/// Cells are numbered row-major from the bottom row up, `state = row·cols + col`.
/// The start is the bottom-left cell, the goal the bottom-right one and the
/// cells between them form the cliff. Actions are up, down, left, right.
///
/// Falling off the cliff costs −100 and puts the agent back at the start. A
/// cliff cell is never occupied in its own right, so it is used as an alias
/// of the start: its outgoing transitions copy those of the start. This keeps
/// "reach the start by walking" (reward −1) and "reach it by falling"
/// (reward −100) as distinct successors.
pub fn gen_cliffwalk<F: Real>(rows: usize, cols: usize, slip: F) -> Result<Mdp<F>> {
    if rows < 2 || cols < 2 {
        return Err(Error::ParamOutOfRange(format!("cliffwalk needs at least 2x2 cells, got {rows}x{cols}")));
    }
    if !(slip >= F::zero() && slip <= F::one() / F::lit(3.0)) {
        return Err(Error::ParamOutOfRange(format!("slip {slip} outside [0, 1/3]")));
    }
    let n = rows * cols;
    let goal = cols - 1;
    let is_cliff = |s: usize| s > 0 && s < goal;
    let step = |s: usize, dir: usize| -> (usize, F) {
        let (r, c) = (s / cols, s % cols);
        let (nr, nc) = match dir {
            0 if r + 1 < rows => (r + 1, c),
            1 if r > 0 => (r - 1, c),
            2 if c > 0 => (r, c - 1),
            3 if c + 1 < cols => (r, c + 1),
            _ => (r, c),
        };
        let next = nr * cols + nc;
        (next, F::lit(if is_cliff(next) { CLIFF_REWARD } else { STEP_REWARD }))
    };
    let keep = F::one() - F::lit(3.0) * slip;
    let mut table = Vec::with_capacity(n * 4);
    for s in 0..n {
        for a in 0..4 {
            let row = if s == goal {
                vec![Transition { next: goal, prob: F::one(), reward: F::zero() }]
            } else {
                let origin = if is_cliff(s) { 0 } else { s };
                (0..4)
                    .map(|dir| {
                        let (next, reward) = step(origin, dir);
                        Transition { next, prob: if dir == a { keep } else { slip }, reward }
                    })
                    .collect()
            };
            table.push(row);
        }
    }
    Mdp::new(n, 4, table, F::lit(DEFAULT_GAMMA))
}

/// Gambler's ruin on capitals `0..=capital_max`.
///
/// Action `b` stakes `min(b, c, capital_max − c)`; there are
/// `capital_max/2 + 1` actions so every state shares one action set. Reaching
/// `capital_max` pays 1 once; both ends are absorbing with reward 0.
pub fn gen_gamblers_ruin<F: Real>(capital_max: usize, win_prob: F) -> Result<Mdp<F>> {
    if capital_max < 2 {
        return Err(Error::ParamOutOfRange(format!("capital_max {capital_max} < 2")));
    }
    if !(win_prob > F::zero() && win_prob < F::one()) {
        return Err(Error::ParamOutOfRange(format!("win probability {win_prob} outside (0, 1)")));
    }
    let n_actions = capital_max / 2 + 1;
    let mut table = Vec::with_capacity((capital_max + 1) * n_actions);
    for c in 0..=capital_max {
        for b in 0..n_actions {
            let stake = b.min(c).min(capital_max - c);
            let row = if stake == 0 {
                vec![Transition { next: c, prob: F::one(), reward: F::zero() }]
            } else {
                let win = c + stake;
                vec![
                    Transition { next: c - stake, prob: F::one() - win_prob, reward: F::zero() },
                    Transition {
                        next: win,
                        prob: win_prob,
                        reward: if win == capital_max { F::one() } else { F::zero() },
                    },
                ]
            };
            table.push(row);
        }
    }
    Mdp::new(capital_max + 1, n_actions, table, F::lit(DEFAULT_GAMMA))
}

/// Unit economics of the inventory domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InventoryPrices<F> {
    pub revenue: F,
    pub cost: F,
    pub holding: F,
}

impl<F: Real> InventoryPrices<F> {
    /// Reads the `revenue`, `cost` and `holding` entries of a price map.
    pub fn from_map(map: &BTreeMap<String, F>) -> Result<Self> {
        let get = |k: &str| {
            map.get(k).copied().ok_or_else(|| Error::ParamOutOfRange(format!("missing price {k:?}")))
        };
        if let Some(k) = map.keys().find(|k| !matches!(k.as_str(), "revenue" | "cost" | "holding")) {
            return Err(Error::ParamOutOfRange(format!("unknown price {k:?}")));
        }
        Ok(Self { revenue: get("revenue")?, cost: get("cost")?, holding: get("holding")? })
    }
}

/// Single-item stock control with lost sales.
///
/// State is the stock on hand, the action the order size. The order is
/// capped by the free capacity, demand is met from the replenished stock and
/// the leftover is charged a holding cost.
pub fn gen_inventory<F: Real>(
    capacity: usize,
    demand: &DiscreteDistribution<F>,
    prices: &InventoryPrices<F>,
) -> Result<Mdp<F>> {
    if capacity < 1 {
        return Err(Error::ParamOutOfRange("inventory capacity must be at least 1".into()));
    }
    if ![prices.revenue, prices.cost, prices.holding].iter().all(|p| p.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut demands = Vec::with_capacity(demand.len());
    for atom in demand.atoms() {
        let d = atom.value;
        if d < F::zero() || d != d.floor() {
            return Err(Error::ParamOutOfRange(format!("demand atom {d} is not a non-negative integer")));
        }
        // Demand beyond capacity behaves like demand equal to capacity.
        let d = d.min(F::from_usize_lossy(capacity)).to_usize().unwrap_or(capacity);
        demands.push((d, atom.prob));
    }
    let n = capacity + 1;
    let mut table = Vec::with_capacity(n * n);
    for stock in 0..n {
        for order in 0..n {
            let level = (stock + order).min(capacity);
            let ordered = F::from_usize_lossy(level - stock);
            let row = demands
                .iter()
                .map(|&(d, prob)| {
                    let sales = level.min(d);
                    let next = level - sales;
                    let reward = prices.revenue * F::from_usize_lossy(sales)
                        - prices.cost * ordered
                        - prices.holding * F::from_usize_lossy(next);
                    Transition { next, prob, reward }
                })
                .collect();
            table.push(row);
        }
    }
    Mdp::new(n, n, table, F::lit(DEFAULT_GAMMA))
}

/// Seeded random MDP.
///
/// For each `(s, a)` in row-major order the generator draws the reward, then
/// `branching` distinct successors by a partial Fisher-Yates shuffle, then
/// their weights uniformly on `(0, 1]` before normalizing. All draws are done
/// in `f64` from a ChaCha8 stream, so the result does not depend on the
/// platform. The declared reward bounds are the ends of `reward_range`.
pub fn gen_random_mdp<F: Real>(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    branching: usize,
    reward_range: (F, F),
) -> Result<Mdp<F>> {
    if n_states < 1 || n_actions < 1 {
        return Err(Error::ParamOutOfRange("random MDP needs S, A >= 1".into()));
    }
    if branching < 1 || branching > n_states {
        return Err(Error::ParamOutOfRange(format!("branching {branching} outside 1..={n_states}")));
    }
    let (lo, hi) = reward_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::ParamOutOfRange(format!("reward range ({lo}, {hi})")));
    }
    let (lo64, hi64) = (lo.to_f64_lossy(), hi.to_f64_lossy());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n_states).collect();
    let mut table = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states * n_actions {
        let u: f64 = rng.gen();
        let reward = F::lit(lo64 + (hi64 - lo64) * u).max(lo).min(hi);
        for k in 0..branching {
            let pick = rng.gen_range(k..n_states);
            perm.swap(k, pick);
        }
        let weights: Vec<f64> = (0..branching).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        table.push(
            perm[..branching]
                .iter()
                .zip(&weights)
                .map(|(&next, &w)| Transition { next, prob: F::lit(w / total), reward })
                .collect(),
        );
    }
    Mdp::new(n_states, n_actions, table, F::lit(DEFAULT_GAMMA))?.with_reward_bounds(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DomainKind {
    Cliffwalk,
    GamblersRuin,
    Inventory,
    Random,
    Csv,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cliffwalk => "cliffwalk",
            Self::GamblersRuin => "gamblers_ruin",
            Self::Inventory => "inventory",
            Self::Random => "random",
            Self::Csv => "csv",
        }
    }

    fn defaults(self) -> &'static [(&'static str, Option<&'static str>)] {
        match self {
            Self::Cliffwalk => &[("rows", Some("4")), ("cols", Some("12")), ("slip", Some("0.1"))],
            Self::GamblersRuin => &[("capital_max", Some("7")), ("win_prob", Some("0.7"))],
            Self::Inventory => &[
                ("capacity", Some("10")),
                ("demand", Some("0:0.1 1:0.2 2:0.3 3:0.2 4:0.2")),
                ("revenue", Some("5")),
                ("cost", Some("2")),
                ("holding", Some("0.5")),
            ],
            Self::Random => &[
                ("states", Some("5")),
                ("actions", Some("2")),
                ("branching", Some("2")),
                ("reward_lo", Some("-1")),
                ("reward_hi", Some("1")),
            ],
            Self::Csv => &[("path", None)],
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cliffwalk" => Self::Cliffwalk,
            "gamblers_ruin" => Self::GamblersRuin,
            "inventory" => Self::Inventory,
            "random" => Self::Random,
            "csv" => Self::Csv,
            _ => return Err(Error::ParamOutOfRange(format!("unknown domain {s:?}"))),
        })
    }
}

/// A domain together with its complete parameter set.
///
/// Missing parameters are filled with the kind's defaults at construction;
/// unknown keys are rejected. `gamma` is accepted by every kind.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, params: BTreeMap<String, String>, seed: u64) -> Result<Self> {
        let defaults = kind.defaults();
        if let Some(k) = params.keys().find(|k| *k != "gamma" && !defaults.iter().any(|(d, _)| d == k)) {
            return Err(Error::ParamOutOfRange(format!("unknown parameter {k:?} for domain {kind}")));
        }
        let mut full = params;
        for &(key, default) in defaults {
            if !full.contains_key(key) {
                match default {
                    Some(v) => {
                        full.insert(key.to_string(), v.to_string());
                    }
                    None => return Err(Error::ParamOutOfRange(format!("domain {kind} requires {key:?}"))),
                }
            }
        }
        full.entry("gamma".into()).or_insert_with(|| DEFAULT_GAMMA.to_string());
        let spec = Self { kind, params: full, seed };
        spec.initial_state()?;
        Ok(spec)
    }

    pub fn with_defaults(kind: DomainKind) -> Result<Self> {
        Self::new(kind, BTreeMap::new(), 0)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.params.get(key).ok_or_else(|| Error::ParamOutOfRange(format!("missing {key:?}")))?;
        raw.trim()
            .parse()
            .map_err(|_| Error::ParamOutOfRange(format!("cannot parse {key} = {raw:?}")))
    }

    /// Parses `value:prob` pairs separated by whitespace or `;`.
    fn demand<F: Real>(&self) -> Result<DiscreteDistribution<F>> {
        let raw: String = self.get("demand")?;
        let mut pairs = Vec::new();
        for item in raw.split(|c: char| c.is_whitespace() || c == ';').filter(|t| !t.is_empty()) {
            let bad = || Error::ParamOutOfRange(format!("bad demand atom {item:?}"));
            let (v, p) = item.split_once(':').ok_or_else(bad)?;
            pairs.push((v.parse::<F>().map_err(|_| bad())?, p.parse::<F>().map_err(|_| bad())?));
        }
        DiscreteDistribution::new(pairs)
    }

    /// Starting state used by policy evaluation when none is configured.
    pub fn initial_state(&self) -> Result<usize> {
        Ok(match self.kind {
            DomainKind::Cliffwalk => {
                let (rows, cols): (usize, usize) = (self.get("rows")?, self.get("cols")?);
                (rows.max(1) - 1) * cols + 1.min(cols.saturating_sub(1))
            }
            DomainKind::GamblersRuin => {
                let cmax: usize = self.get("capital_max")?;
                5.min(cmax.saturating_sub(1))
            }
            _ => 0,
        })
    }

    pub fn build<F: Real>(&self) -> Result<Mdp<F>> {
        let mdp = match self.kind {
            DomainKind::Cliffwalk => gen_cliffwalk(self.get("rows")?, self.get("cols")?, self.get::<F>("slip")?)?,
            DomainKind::GamblersRuin => gen_gamblers_ruin(self.get("capital_max")?, self.get::<F>("win_prob")?)?,
            DomainKind::Inventory => {
                let prices = InventoryPrices {
                    revenue: self.get("revenue")?,
                    cost: self.get("cost")?,
                    holding: self.get("holding")?,
                };
                gen_inventory(self.get("capacity")?, &self.demand()?, &prices)?
            }
            DomainKind::Random => gen_random_mdp(
                self.seed,
                self.get("states")?,
                self.get("actions")?,
                self.get("branching")?,
                (self.get::<F>("reward_lo")?, self.get::<F>("reward_hi")?),
            )?,
            DomainKind::Csv => {
                let path: String = self.get("path")?;
                let file = std::fs::File::open(&path)
                    .map_err(|e| Error::Io { path: path.clone(), message: e.to_string() })?;
                load_mdp_csv(std::io::BufReader::new(file), None)?
            }
        };
        mdp.with_gamma(self.get("gamma")?)
    }
}
