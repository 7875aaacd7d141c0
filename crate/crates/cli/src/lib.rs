//! Batch front-end: configuration parsing, subcommands and CSV reports.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qmdp::dp::{
    solve_dvar_dp, solve_neutral_dp, solve_nvar_dp, solve_time_free, solve_var_dp, DpKind, QTensor, RiskGrid,
};
use qmdp::exec::{evaluate_policy, EvalReport, PolicyRef};
use qmdp::mdp::{DomainKind, DomainSpec, Mdp};
use qmdp::oracle::{brute_force_qstar, POLICY_BUDGET};
use qmdp::qlearn::{train, TrainConfig};
use qmdp::ErrorClass;

/// Risk levels of evaluation sweeps: 0.05, 0.10, …, 0.95.
pub fn alpha_sweep() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

/// Grid sizes compared by `gap`.
pub const GAP_GRIDS: [usize; 3] = [16, 256, 4096];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CliError {
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {message}")]
    TypeMismatch { key: String, message: String },
    #[error("missing required key {0:?}")]
    MissingRequired(String),
    #[error("malformed argument {0:?}")]
    Malformed(String),
    #[error(transparent)]
    Core(#[from] qmdp::Error),
}

impl CliError {
    /// 1 = configuration, 2 = data, 3 = numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            },
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Train,
    Eval,
    Oracle,
    Gap,
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Ok(match s {
            "solve" => Command::Solve,
            "train" => Command::Train,
            "eval" => Command::Eval,
            "oracle" => Command::Oracle,
            "gap" => Command::Gap,
            _ => return Err(CliError::Malformed(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Var,
    Neutral,
    Nvar,
    Dvar,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Var => "var",
            PolicyKind::Neutral => "neutral",
            PolicyKind::Nvar => "nvar",
            PolicyKind::Dvar => "dvar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveKind {
    Lower,
    Upper,
    Soft,
}

impl SolveKind {
    pub fn name(self) -> &'static str {
        match self {
            SolveKind::Lower => "lower",
            SolveKind::Upper => "upper",
            SolveKind::Soft => "soft",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub alpha0: f64,
    /// Defaults to the domain's initial state.
    pub s0: usize,
    /// First action for `oracle`.
    pub a0: usize,
    pub horizon: usize,
    pub gamma: Option<f64>,
    pub j: usize,
    pub kappa: f64,
    pub seed: u64,
    pub episodes: usize,
    pub sweeps: usize,
    pub time_free: bool,
    pub solve: Vec<SolveKind>,
    pub policies: Vec<PolicyKind>,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn mdp(&self) -> CliResult<Mdp<f64>> {
        Ok(self.domain.build::<f64>()?)
    }
}

const KEYS: [&str; 15] = [
    "domain", "alpha0", "s0", "a0", "T", "gamma", "J", "kappa", "seed", "episodes", "sweeps", "time_free", "solve",
    "policies", "out",
];

fn parse_value<T: FromStr>(key: &str, raw: &str) -> CliResult<T>
where
    T::Err: Display,
{
    raw.trim()
        .parse()
        .map_err(|e: T::Err| CliError::TypeMismatch { key: key.to_string(), message: format!("{raw:?}: {e}") })
}

fn mismatch(key: &str, message: impl Into<String>) -> CliError {
    CliError::TypeMismatch { key: key.to_string(), message: message.into() }
}

fn parse_list<T>(key: &str, raw: &str, table: &[(&str, T)]) -> CliResult<Vec<T>>
where
    T: Copy,
{
    raw.split(',')
        .map(|item| {
            let item = item.trim();
            table
                .iter()
                .find(|(name, _)| *name == item)
                .map(|(_, v)| *v)
                .ok_or_else(|| mismatch(key, format!("unknown entry {item:?}")))
        })
        .collect()
}

/// Reads flat `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Malformed(line.to_string()))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Splits `--key value` and `--key=value` overrides.
pub fn parse_flags(args: &[String]) -> CliResult<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let body = arg.strip_prefix("--").ok_or_else(|| CliError::Malformed(arg.clone()))?;
        match body.split_once('=') {
            Some((k, v)) => pairs.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| CliError::Malformed(arg.clone()))?;
                pairs.push((body.to_string(), v.clone()));
            }
        }
    }
    Ok(pairs)
}

/// Builds a validated configuration. Flag values override file values.
///
/// Domain parameters use a `domain.` prefix, e.g. `--domain.rows 4`.
pub fn parse_config(args: &[String], file: Option<&str>) -> CliResult<ExperimentConfig> {
    let mut merged: BTreeMap<String, String> = BTreeMap::new();
    if let Some(text) = file {
        merged.extend(parse_config_file(text)?);
    }
    merged.extend(parse_flags(args)?);

    let mut domain_params = BTreeMap::new();
    let mut plain = BTreeMap::new();
    for (k, v) in merged {
        if let Some(p) = k.strip_prefix("domain.") {
            domain_params.insert(p.to_string(), v);
        } else if KEYS.contains(&k.as_str()) {
            plain.insert(k, v);
        } else {
            return Err(CliError::UnknownKey(k));
        }
    }
    let get = |k: &str| plain.get(k).map(String::as_str);

    let kind_raw = get("domain").ok_or_else(|| CliError::MissingRequired("domain".into()))?;
    let kind: DomainKind = kind_raw.parse().map_err(|e: qmdp::Error| mismatch("domain", e.to_string()))?;
    let gamma: Option<f64> = get("gamma").map(|v| parse_value("gamma", v)).transpose()?;
    if let Some(g) = gamma {
        if !(g > 0.0 && g <= 1.0) {
            return Err(mismatch("gamma", format!("{g} outside (0, 1]")));
        }
        domain_params.insert("gamma".into(), g.to_string());
    }
    let seed: u64 = get("seed").map(|v| parse_value("seed", v)).transpose()?.unwrap_or(0);
    let domain = DomainSpec::new(kind, domain_params, seed).map_err(|e| match e {
        qmdp::Error::ParamOutOfRange(m) if m.contains("unknown") => CliError::UnknownKey(m),
        other => mismatch("domain", other.to_string()),
    })?;
    if kind == DomainKind::Csv {
        let path = domain.params.get("path").map(String::as_str).unwrap_or("");
        if !Path::new(path).is_file() {
            return Err(mismatch("domain.path", format!("{path:?} is not a readable file")));
        }
    }

    let alpha0: f64 = get("alpha0").map(|v| parse_value("alpha0", v)).transpose()?.unwrap_or(0.25);
    if !(alpha0 > 0.0 && alpha0 < 1.0) {
        return Err(mismatch("alpha0", format!("{alpha0} outside (0, 1)")));
    }
    let horizon: usize = get("T").map(|v| parse_value("T", v)).transpose()?.unwrap_or(100);
    if horizon < 1 {
        return Err(mismatch("T", "horizon must be at least 1"));
    }
    let j: usize = get("J").map(|v| parse_value("J", v)).transpose()?.unwrap_or(256);
    if j < 2 {
        return Err(mismatch("J", "need at least two risk levels"));
    }
    let kappa: f64 = get("kappa").map(|v| parse_value("kappa", v)).transpose()?.unwrap_or(1e-4);
    if !(0.0..=1.0).contains(&kappa) {
        return Err(mismatch("kappa", format!("{kappa} outside [0, 1]")));
    }
    let episodes: usize = get("episodes").map(|v| parse_value("episodes", v)).transpose()?.unwrap_or(10_000);
    let sweeps: usize = get("sweeps").map(|v| parse_value("sweeps", v)).transpose()?.unwrap_or(20_000);
    if sweeps < 1 {
        return Err(mismatch("sweeps", "need at least one sweep"));
    }
    let time_free: bool = get("time_free").map(|v| parse_value("time_free", v)).transpose()?.unwrap_or(false);
    let s0 = match get("s0") {
        Some(v) => parse_value("s0", v)?,
        None => domain.initial_state()?,
    };
    let a0: usize = get("a0").map(|v| parse_value("a0", v)).transpose()?.unwrap_or(0);
    let solve = parse_list(
        "solve",
        get("solve").unwrap_or("lower,upper"),
        &[("lower", SolveKind::Lower), ("upper", SolveKind::Upper), ("soft", SolveKind::Soft)],
    )?;
    let policies = parse_list(
        "policies",
        get("policies").unwrap_or("var,neutral,nvar,dvar"),
        &[
            ("var", PolicyKind::Var),
            ("neutral", PolicyKind::Neutral),
            ("nvar", PolicyKind::Nvar),
            ("dvar", PolicyKind::Dvar),
        ],
    )?;
    let out = PathBuf::from(get("out").unwrap_or("."));

    Ok(ExperimentConfig {
        domain,
        alpha0,
        s0,
        a0,
        horizon,
        gamma,
        j,
        kappa,
        seed,
        episodes,
        sweeps,
        time_free,
        solve,
        policies,
        out,
    })
}

fn io_error(path: &Path, e: impl Display) -> CliError {
    CliError::Core(qmdp::Error::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Writes a header and rows as comma-separated lines.
pub fn write_report<S: AsRef<str>, R: AsRef<[S]>>(header: &[&str], rows: &[R], path: &Path) -> CliResult<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let cells: Vec<&str> = row.as_ref().iter().map(AsRef::as_ref).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn save_tensor(q: &QTensor<f64>, path: &Path) -> CliResult<()> {
    q.save(path).map_err(|e| match e {
        qmdp::Error::Io { message, .. } => io_error(path, message),
        other => other.into(),
    })
}

/// Runs one subcommand and returns the files it wrote.
pub fn run_command(cmd: Command, cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    ensure_dir(&cfg.out)?;
    let mdp = cfg.mdp()?;
    if cfg.s0 >= mdp.n_states() {
        return Err(mismatch("s0", format!("state {} outside 0..{}", cfg.s0, mdp.n_states())));
    }
    match cmd {
        Command::Solve => solve(cfg, &mdp),
        Command::Train => train_cmd(cfg, &mdp),
        Command::Eval => eval(cfg, &mdp),
        Command::Oracle => oracle(cfg, &mdp),
        Command::Gap => gap(cfg, &mdp),
    }
}

fn solve(cfg: &ExperimentConfig, mdp: &Mdp<f64>) -> CliResult<Vec<PathBuf>> {
    let grid = RiskGrid::new(cfg.j)?;
    let mut written = Vec::new();
    for &kind in &cfg.solve {
        let dp_kind = match kind {
            SolveKind::Lower => DpKind::Lower,
            SolveKind::Upper => DpKind::Upper,
            SolveKind::Soft => DpKind::Soft { kappa: cfg.kappa },
        };
        let q = solve_var_dp(mdp, &grid, cfg.horizon, dp_kind)?;
        let path = cfg.out.join(format!("q_{}.csv", kind.name()));
        save_tensor(&q, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn train_cmd(cfg: &ExperimentConfig, mdp: &Mdp<f64>) -> CliResult<Vec<PathBuf>> {
    let grid = RiskGrid::new(cfg.j)?;
    let horizon = (!cfg.time_free).then_some(cfg.horizon);
    let target = match horizon {
        Some(t) if cfg.kappa > 0.0 => solve_var_dp(mdp, &grid, t, DpKind::Soft { kappa: cfg.kappa })?,
        Some(t) => solve_var_dp(mdp, &grid, t, DpKind::Lower)?,
        None => solve_time_free(mdp, &grid, cfg.kappa, 1e-10, 100_000)?,
    };
    let tc = TrainConfig { s0: cfg.s0, ..TrainConfig::new(cfg.j, horizon, cfg.kappa, cfg.sweeps, cfg.seed) };
    let out = train(mdp, &tc, Some(&target))?;
    let q_path = cfg.out.join("q_trained.csv");
    save_tensor(&out.q, &q_path)?;
    let rows: Vec<Vec<String>> = out.diagnostics.iter().map(|(s, w)| vec![s.to_string(), w.to_string()]).collect();
    let w_path = cfg.out.join("w1.csv");
    write_report(&["sweep", "w1"], &rows, &w_path)?;
    Ok(vec![q_path, w_path])
}

fn eval(cfg: &ExperimentConfig, mdp: &Mdp<f64>) -> CliResult<Vec<PathBuf>> {
    let alphas = alpha_sweep();
    let grid = RiskGrid::new(cfg.j)?;
    let mut written = Vec::new();
    for &kind in &cfg.policies {
        let report: EvalReport<f64> = match kind {
            PolicyKind::Var => {
                let q = solve_var_dp(mdp, &grid, cfg.horizon, DpKind::Lower)?;
                let policy = PolicyRef::Var { q: &q, alpha0: cfg.alpha0 };
                evaluate_policy(mdp, policy, cfg.s0, cfg.horizon, &alphas, cfg.episodes, cfg.seed)?
            }
            PolicyKind::Neutral => {
                let pi = solve_neutral_dp(mdp, cfg.horizon)?.greedy_policy();
                evaluate_policy(mdp, PolicyRef::Markov(&pi), cfg.s0, cfg.horizon, &alphas, cfg.episodes, cfg.seed)?
            }
            PolicyKind::Nvar => {
                let (_, pi) = solve_nvar_dp(mdp, cfg.horizon, cfg.alpha0)?;
                evaluate_policy(mdp, PolicyRef::Markov(&pi), cfg.s0, cfg.horizon, &alphas, cfg.episodes, cfg.seed)?
            }
            PolicyKind::Dvar => {
                let (_, pi) = solve_dvar_dp(mdp, &grid, cfg.horizon, cfg.alpha0)?;
                evaluate_policy(mdp, PolicyRef::Markov(&pi), cfg.s0, cfg.horizon, &alphas, cfg.episodes, cfg.seed)?
            }
        };
        let path = cfg.out.join(format!("eval_{}.csv", kind.name()));
        write_report(&EvalReport::<f64>::HEADER, &report.records(), &path)?;
        written.push(path);
    }
    Ok(written)
}

fn oracle(cfg: &ExperimentConfig, mdp: &Mdp<f64>) -> CliResult<Vec<PathBuf>> {
    if cfg.a0 >= mdp.n_actions() {
        return Err(mismatch("a0", format!("action {} outside 0..{}", cfg.a0, mdp.n_actions())));
    }
    let grid = RiskGrid::new(cfg.j)?;
    let alphas = alpha_sweep();
    let lower = solve_var_dp(mdp, &grid, cfg.horizon, DpKind::Lower)?;
    let upper = solve_var_dp(mdp, &grid, cfg.horizon, DpKind::Upper)?;
    let qstar = brute_force_qstar(mdp, cfg.horizon, cfg.s0, cfg.a0, &alphas, POLICY_BUDGET)?;
    let mut rows = Vec::with_capacity(alphas.len());
    for (&alpha, &q) in alphas.iter().zip(&qstar) {
        let j = grid.index_of(alpha)?;
        let lo = lower.get(cfg.horizon, cfg.s0, j, cfg.a0);
        let hi = upper.get(cfg.horizon, cfg.s0, j, cfg.a0);
        let ok = lo <= q + 1e-9 && q <= hi + 1e-9;
        rows.push(vec![
            alpha.to_string(),
            cfg.a0.to_string(),
            lo.to_string(),
            q.to_string(),
            hi.to_string(),
            if ok { "PASS" } else { "FAIL" }.to_string(),
        ]);
    }
    let path = cfg.out.join("oracle.csv");
    write_report(&["alpha", "action", "lower", "qstar", "upper", "verdict"], &rows, &path)?;
    Ok(vec![path])
}

/// Rows at the levels `k/16`, shared by every grid in [`GAP_GRIDS`].
fn gap(cfg: &ExperimentConfig, mdp: &Mdp<f64>) -> CliResult<Vec<PathBuf>> {
    let coarse = GAP_GRIDS[0];
    let mut written = Vec::new();
    for &nj in &GAP_GRIDS {
        let grid = RiskGrid::new(nj)?;
        let lower = solve_var_dp(mdp, &grid, cfg.horizon, DpKind::Lower)?;
        let upper = solve_var_dp(mdp, &grid, cfg.horizon, DpKind::Upper)?;
        let rows: Vec<Vec<String>> = (1..coarse)
            .map(|k| {
                let j = k * nj / coarse;
                let lo = lower.max_over_actions(cfg.horizon, cfg.s0, j);
                let hi = upper.max_over_actions(cfg.horizon, cfg.s0, j);
                let alpha = k as f64 / coarse as f64;
                vec![alpha.to_string(), lo.to_string(), hi.to_string(), (hi - lo).to_string()]
            })
            .collect();
        let path = cfg.out.join(format!("gap_J{nj}.csv"));
        write_report(&["alpha", "lower", "upper", "gap"], &rows, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Sizes the global worker pool from `QMDP_THREADS` (unset or 0 = automatic).
pub fn init_threads(var: Option<&str>) -> CliResult<()> {
    let n: usize = match var {
        Some(v) => parse_value("QMDP_THREADS", v)?,
        None => 0,
    };
    // A second initialization is harmless: the first pool stays in place.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
