use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{Mdp, Transition, DEFAULT_GAMMA, REWARD_AGREEMENT_TOL, STOCHASTICITY_TOL};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const CSV_HEADER: [&str; 5] = ["idstatefrom", "idaction", "idstateto", "probability", "reward"];

/// Parses the five-column transition format.
///
/// Rows are numbered from 1 for the first data row. Duplicate
/// `(s, a, s')` rows are merged by summing probabilities; zero-probability
/// rows are kept out of the kernel but still size the index space.
pub fn load_mdp_csv<F: Real, R: Read>(source: R, gamma: Option<F>) -> Result<Mdp<F>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(source);
    let mut records = reader.records();
    match records.next() {
        None => return Err(Error::BadHeader(String::new())),
        Some(Err(e)) => return Err(Error::BadHeader(e.to_string())),
        Some(Ok(rec)) => {
            if rec.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(Error::BadHeader(rec.iter().collect::<Vec<_>>().join(",")));
            }
        }
    }

    // (s, a) -> s' -> (prob, reward)
    let mut table: BTreeMap<(usize, usize), BTreeMap<usize, (F, F)>> = BTreeMap::new();
    let (mut max_state, mut max_action) = (0usize, 0usize);
    let mut n_rows = 0usize;
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::NonNumericField { row, field: e.to_string() })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::NonNumericField { row, field: rec.iter().collect::<Vec<_>>().join(",") });
        }
        let s = parse_index(&rec[0], row)?;
        let a = parse_index(&rec[1], row)?;
        let next = parse_index(&rec[2], row)?;
        let prob: F = parse_real(&rec[3], row)?;
        let reward: F = parse_real(&rec[4], row)?;
        if prob < F::zero() {
            return Err(Error::RowProbabilityNegative(row));
        }
        n_rows += 1;
        max_state = max_state.max(s).max(next);
        max_action = max_action.max(a);
        let entry = table.entry((s, a)).or_default();
        match entry.get_mut(&next) {
            Some((p, r)) => {
                if (*r - reward).abs() > F::lit(REWARD_AGREEMENT_TOL) {
                    return Err(Error::DuplicateRewardConflict { s, a, next });
                }
                *p = *p + prob;
            }
            None => {
                entry.insert(next, (prob, reward));
            }
        }
    }
    if n_rows == 0 {
        return Err(Error::DanglingIndex("no transition rows".into()));
    }

    let n_states = max_state + 1;
    let n_actions = max_action + 1;
    // Every (s, a) needs at least one row, so a larger index space is necessarily incomplete.
    if n_states.checked_mul(n_actions).is_none_or(|n| n > n_rows) {
        return Err(first_missing(&table, n_states, n_actions));
    }
    let mut rows = Vec::with_capacity(n_states * n_actions);
    for s in 0..n_states {
        for a in 0..n_actions {
            let entry = table
                .get(&(s, a))
                .ok_or_else(|| Error::DanglingIndex(format!("state {s} action {a} has no transitions")))?;
            let sum = entry.values().fold(F::zero(), |acc, &(p, _)| acc + p);
            if (sum - F::one()).abs() > F::lit(STOCHASTICITY_TOL) {
                return Err(Error::StochasticityViolation { s, a, sum: sum.to_f64_lossy() });
            }
            rows.push(
                entry
                    .iter()
                    .map(|(&next, &(prob, reward))| Transition { next, prob, reward })
                    .collect(),
            );
        }
    }
    Mdp::new(n_states, n_actions, rows, gamma.unwrap_or_else(|| F::lit(DEFAULT_GAMMA)))
}

fn first_missing<F>(
    table: &BTreeMap<(usize, usize), BTreeMap<usize, (F, F)>>,
    n_states: usize,
    n_actions: usize,
) -> Error {
    for s in 0..n_states {
        for a in 0..n_actions {
            if !table.contains_key(&(s, a)) {
                return Error::DanglingIndex(format!("state {s} action {a} has no transitions"));
            }
        }
    }
    Error::DanglingIndex("index space larger than the number of rows".into())
}

fn parse_index(field: &str, row: usize) -> Result<usize> {
    field.parse().map_err(|_| Error::NonNumericField { row, field: field.to_string() })
}

fn parse_real<F: Real>(field: &str, row: usize) -> Result<F> {
    match field.parse::<F>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumericField { row, field: field.to_string() }),
    }
}

/// Writes the kernel in the format read by [`load_mdp_csv`], ordered by
/// `(s, a, s')`. Floats use the shortest representation that round-trips.
pub fn write_mdp_csv<F: Real, W: Write>(mdp: &Mdp<F>, sink: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io { path: "<mdp csv>".into(), message: e.to_string() };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    w.write_record(CSV_HEADER).map_err(io)?;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            for tr in mdp.transitions(s, a) {
                w.write_record([
                    s.to_string(),
                    a.to_string(),
                    tr.next.to_string(),
                    tr.prob.to_string(),
                    tr.reward.to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Io { path: "<mdp csv>".into(), message: e.to_string() })
}
