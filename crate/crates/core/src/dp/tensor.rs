use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::grid::RiskGrid;
use crate::error::{Error, Result};
use crate::mdp::argmax;
use crate::scalar::Real;

/// Which object a [`QTensor`] holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TensorKind<F> {
    /// Lower bound, index `j` reads level `j/J`.
    Lower,
    /// Upper bound, index `j` covers `[j/J, (j+1)/J)`.
    Upper,
    /// Soft-quantile fixed point (or its Q-learning estimate).
    Soft { kappa: F },
    /// Stationary table shared by every time step.
    TimeFree { kappa: F },
    /// Distributional-VaR baseline, index `j` reads the cell midpoint.
    Distributional,
}

impl<F: Real> TensorKind<F> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Lower => "lower",
            Self::Upper => "upper",
            Self::Soft { .. } => "soft",
            Self::TimeFree { .. } => "time_free",
            Self::Distributional => "distributional",
        }
    }

    pub fn kappa(&self) -> Option<F> {
        match *self {
            Self::Soft { kappa } | Self::TimeFree { kappa } => Some(kappa),
            _ => None,
        }
    }

    fn parse(name: &str, kappa: Option<F>) -> Result<Self> {
        let need = || kappa.ok_or_else(|| Error::ShapeMismatch(format!("tensor kind {name} needs kappa")));
        Ok(match name {
            "lower" => Self::Lower,
            "upper" => Self::Upper,
            "soft" => Self::Soft { kappa: need()? },
            "time_free" => Self::TimeFree { kappa: need()? },
            "distributional" => Self::Distributional,
            _ => return Err(Error::ShapeMismatch(format!("unknown tensor kind {name:?}"))),
        })
    }
}

/// Value table `q(t, s, j, a)`.
///
/// Time-indexed kinds hold `T + 1` slices `t = 0..=T`; the time-free kind
/// holds one slice that every `t` reads. Within a slice values are laid out
/// as `(s·J + j)·A + a`, so the actions of one `(s, j)` are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor<F> {
    kind: TensorKind<F>,
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    grid: RiskGrid,
    values: Vec<F>,
}

impl<F: Real> QTensor<F> {
    pub fn zeros(kind: TensorKind<F>, horizon: usize, n_states: usize, n_actions: usize, grid: RiskGrid) -> Self {
        let horizon = if matches!(kind, TensorKind::TimeFree { .. }) { 0 } else { horizon };
        let len = (horizon + 1) * n_states * grid.size() * n_actions;
        Self { kind, horizon, n_states, n_actions, grid, values: vec![F::zero(); len] }
    }

    /// Builds a tensor from raw slices; `values.len()` must match the shape.
    pub fn from_values(
        kind: TensorKind<F>,
        horizon: usize,
        n_states: usize,
        n_actions: usize,
        grid: RiskGrid,
        values: Vec<F>,
    ) -> Result<Self> {
        let mut q = Self::zeros(kind, horizon, n_states, n_actions, grid);
        if values.len() != q.values.len() {
            return Err(Error::ShapeMismatch(format!("expected {} values, got {}", q.values.len(), values.len())));
        }
        q.values = values;
        Ok(q)
    }

    pub fn kind(&self) -> TensorKind<F> {
        self.kind
    }

    pub fn is_time_free(&self) -> bool {
        matches!(self.kind, TensorKind::TimeFree { .. })
    }

    /// `T`, or `None` for the time-free kind.
    pub fn horizon(&self) -> Option<usize> {
        (!self.is_time_free()).then_some(self.horizon)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn grid(&self) -> RiskGrid {
        self.grid
    }

    pub fn slice_len(&self) -> usize {
        self.n_states * self.grid.size() * self.n_actions
    }

    #[inline]
    fn slot(&self, t: usize) -> usize {
        if self.is_time_free() {
            0
        } else {
            t
        }
    }

    #[inline]
    pub fn index(&self, t: usize, s: usize, j: usize, a: usize) -> usize {
        ((self.slot(t) * self.n_states + s) * self.grid.size() + j) * self.n_actions + a
    }

    #[inline]
    pub fn get(&self, t: usize, s: usize, j: usize, a: usize) -> F {
        self.values[self.index(t, s, j, a)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, s: usize, j: usize, a: usize, v: F) {
        let i = self.index(t, s, j, a);
        self.values[i] = v;
    }

    /// All values of time step `t`, laid out `(s, j, a)`.
    pub fn slice(&self, t: usize) -> &[F] {
        let n = self.slice_len();
        let t = self.slot(t);
        &self.values[t * n..(t + 1) * n]
    }

    pub fn slice_mut(&mut self, t: usize) -> &mut [F] {
        let n = self.slice_len();
        let t = self.slot(t);
        &mut self.values[t * n..(t + 1) * n]
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    /// The `A` action values at `(t, s, j)`.
    #[inline]
    pub fn actions(&self, t: usize, s: usize, j: usize) -> &[F] {
        let i = self.index(t, s, j, 0);
        &self.values[i..i + self.n_actions]
    }

    #[inline]
    pub fn max_over_actions(&self, t: usize, s: usize, j: usize) -> F {
        self.actions(t, s, j).iter().copied().fold(F::neg_infinity(), F::max)
    }

    /// Greedy action at `(t, s, j)`, lowest index on ties.
    #[inline]
    pub fn greedy_action(&self, t: usize, s: usize, j: usize) -> usize {
        argmax(self.actions(t, s, j).iter().copied())
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteValue)
        }
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.horizon == other.horizon
            && self.n_states == other.n_states
            && self.n_actions == other.n_actions
            && self.grid == other.grid
            && self.is_time_free() == other.is_time_free()
    }

    /// Flat `t,idstate,j,idaction,value` rows, `t`-major.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
        let err = |e: csv::Error| Error::Io { path: "<tensor csv>".into(), message: e.to_string() };
        w.write_record(["t", "idstate", "j", "idaction", "value"]).map_err(err)?;
        for t in 0..=self.horizon {
            for s in 0..self.n_states {
                for j in 0..self.grid.size() {
                    for a in 0..self.n_actions {
                        w.write_record([
                            t.to_string(),
                            s.to_string(),
                            j.to_string(),
                            a.to_string(),
                            self.get(t, s, j, a).to_string(),
                        ])
                        .map_err(err)?;
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::Io { path: "<tensor csv>".into(), message: e.to_string() })
    }

    /// `key = value` lines describing the shape and kind.
    pub fn write_meta<W: Write>(&self, mut sink: W) -> Result<()> {
        let mut text = format!(
            "kind = {}\nT = {}\nJ = {}\nstates = {}\nactions = {}\n",
            self.kind.name(),
            self.horizon,
            self.grid.size(),
            self.n_states,
            self.n_actions
        );
        if let Some(k) = self.kind.kappa() {
            text.push_str(&format!("kappa = {k}\n"));
        }
        sink.write_all(text.as_bytes())
            .map_err(|e| Error::Io { path: "<tensor meta>".into(), message: e.to_string() })
    }

    /// Reads a tensor written by [`write_csv`](Self::write_csv) and
    /// [`write_meta`](Self::write_meta). Every cell must appear exactly once.
    pub fn read<R1: Read, R2: Read>(csv_source: R1, meta_source: R2) -> Result<Self> {
        let mut meta = std::collections::BTreeMap::new();
        for line in BufReader::new(meta_source).lines() {
            let line = line.map_err(|e| Error::Io { path: "<tensor meta>".into(), message: e.to_string() })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::ShapeMismatch(format!("bad meta line {line:?}")))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
        let field = |k: &str| meta.get(k).ok_or_else(|| Error::ShapeMismatch(format!("meta lacks {k:?}")));
        let int = |k: &str| -> Result<usize> {
            field(k)?.parse().map_err(|_| Error::ShapeMismatch(format!("meta field {k:?} is not an integer")))
        };
        let kappa = match meta.get("kappa") {
            Some(v) => Some(v.parse::<F>().map_err(|_| Error::ShapeMismatch("meta kappa is not a number".into()))?),
            None => None,
        };
        let kind = TensorKind::parse(field("kind")?, kappa)?;
        let grid = RiskGrid::new(int("J")?)?;
        let mut q = Self::zeros(kind, int("T")?, int("states")?, int("actions")?, grid);
        let mut seen = vec![false; q.values.len()];

        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_source);
        let header = reader.headers().map_err(|e| Error::BadHeader(e.to_string()))?;
        if header.iter().ne(["t", "idstate", "j", "idaction", "value"]) {
            return Err(Error::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
        }
        for (i, rec) in reader.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::NonNumericField { row, field: e.to_string() })?;
            if rec.len() != 5 {
                return Err(Error::NonNumericField { row, field: rec.iter().collect::<Vec<_>>().join(",") });
            }
            let idx = |k: usize| -> Result<usize> {
                rec[k].parse().map_err(|_| Error::NonNumericField { row, field: rec[k].to_string() })
            };
            let (t, s, j, a) = (idx(0)?, idx(1)?, idx(2)?, idx(3)?);
            if t > q.horizon || s >= q.n_states || j >= grid.size() || a >= q.n_actions {
                return Err(Error::DanglingIndex(format!("cell ({t}, {s}, {j}, {a})")));
            }
            let v: F = rec[4].parse().map_err(|_| Error::NonNumericField { row, field: rec[4].to_string() })?;
            let k = q.index(t, s, j, a);
            if seen[k] {
                return Err(Error::ShapeMismatch(format!("cell ({t}, {s}, {j}, {a}) repeated")));
            }
            seen[k] = true;
            q.values[k] = v;
        }
        if let Some(k) = seen.iter().position(|&b| !b) {
            return Err(Error::ShapeMismatch(format!("{} cells missing, first at offset {k}", seen.iter().filter(|b| !**b).count())));
        }
        Ok(q)
    }

    /// Writes `path` and its companion `path.meta`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |p: &Path, e: std::io::Error| Error::Io { path: p.display().to_string(), message: e.to_string() };
        let meta = meta_path(path);
        let f = std::fs::File::create(path).map_err(|e| io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| relabel(e, path))?;
        let m = std::fs::File::create(&meta).map_err(|e| io(&meta, e))?;
        self.write_meta(m).map_err(|e| relabel(e, &meta))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let io = |p: &Path, e: std::io::Error| Error::Io { path: p.display().to_string(), message: e.to_string() };
        let meta = meta_path(path);
        let f = std::fs::File::open(path).map_err(|e| io(path, e))?;
        let m = std::fs::File::open(&meta).map_err(|e| io(&meta, e))?;
        Self::read(BufReader::new(f), m)
    }
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { message, .. } => Error::Io { path: path.display().to_string(), message },
        other => other,
    }
}

/// `value.csv` → `value.csv.meta`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

impl<F: Real> fmt::Display for QTensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "QTensor({}, T={}, S={}, J={}, A={})",
            self.kind.name(),
            self.horizon,
            self.n_states,
            self.grid.size(),
            self.n_actions
        )
    }
}

/// Time weights `w(t) = 2^t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightedNorm;

impl WeightedNorm {
    #[inline]
    pub fn weight<F: Real>(&self, t: usize) -> F {
        F::lit(2.0).powi(t as i32)
    }

    /// `max |x| / w` over a tensor.
    pub fn norm<F: Real>(&self, x: &QTensor<F>) -> F {
        let mut best = F::zero();
        for t in 0..=x.horizon {
            let w = self.weight::<F>(t);
            for &v in x.slice(t) {
                best = best.max(v.abs() / w);
            }
        }
        best
    }
}

/// `‖x − y‖_w = max |x − y| / 2^t`.
pub fn weighted_norm_dist<F: Real>(x: &QTensor<F>, y: &QTensor<F>, norm: &WeightedNorm) -> Result<F> {
    if !x.same_shape(y) {
        return Err(Error::ShapeMismatch(format!("{x} vs {y}")));
    }
    let mut best = F::zero();
    for t in 0..=x.horizon {
        let w = norm.weight::<F>(t);
        for (&a, &b) in x.slice(t).iter().zip(y.slice(t)) {
            best = best.max((a - b).abs() / w);
        }
    }
    Ok(best)
}
