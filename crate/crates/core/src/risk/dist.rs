use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Absolute tolerance on the total probability mass at construction.
pub const MASS_TOL: f64 = 1e-9;

/// A real number or one of the two infinities.
///
/// The derived order puts `NegInf` below every finite value and `PosInf`
/// above, so `max`/`min` follow the usual conventions (`min(∞, c) = c`).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtendedReal<F> {
    NegInf,
    Finite(F),
    PosInf,
}

impl<F: Real> ExtendedReal<F> {
    pub fn finite(self) -> Option<F> {
        match self {
            ExtendedReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    /// Maps the infinities to the corresponding IEEE infinities.
    pub fn to_float(self) -> F {
        match self {
            ExtendedReal::NegInf => F::neg_infinity(),
            ExtendedReal::Finite(x) => x,
            ExtendedReal::PosInf => F::infinity(),
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl<F: Real> From<F> for ExtendedReal<F> {
    fn from(x: F) -> Self {
        if x == F::infinity() {
            ExtendedReal::PosInf
        } else if x == F::neg_infinity() {
            ExtendedReal::NegInf
        } else {
            ExtendedReal::Finite(x)
        }
    }
}

impl<F: Real> fmt::Display for ExtendedReal<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::NegInf => f.write_str("-inf"),
            ExtendedReal::Finite(x) => write!(f, "{x}"),
            ExtendedReal::PosInf => f.write_str("inf"),
        }
    }
}

/// One support point of a [`DiscreteDistribution`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom<F> {
    pub value: F,
    pub prob: F,
}

/// Finite-support distribution over the reals.
///
/// Always canonical: atoms sorted by value, equal values merged, zero-mass
/// atoms dropped, and the masses renormalized to sum to one. Two
/// distributions describing the same law therefore compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<F> {
    atoms: Vec<Atom<F>>,
}

impl<F: Real> DiscreteDistribution<F> {
    /// Builds a distribution from `(value, probability)` pairs.
    pub fn new<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (F, F)>,
    {
        let mut atoms = Vec::new();
        let mut total = F::zero();
        for (value, prob) in pairs {
            if !value.is_finite() || !prob.is_finite() {
                return Err(Error::NonFiniteInput);
            }
            if prob < F::zero() {
                return Err(Error::NegativeProbability(prob.to_f64_lossy()));
            }
            total = total + prob;
            atoms.push(Atom { value, prob });
        }
        if atoms.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if (total - F::one()).abs() > F::lit(MASS_TOL) {
            return Err(Error::ProbabilitySumMismatch(total.to_f64_lossy()));
        }
        Ok(Self::canonicalize(atoms, total))
    }

    /// Point mass at `value`.
    pub fn point(value: F) -> Self {
        Self { atoms: vec![Atom { value, prob: F::one() }] }
    }

    /// Uniform distribution over `values` (duplicates accumulate mass).
    pub fn uniform(values: &[F]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let w = F::one() / F::from_usize_lossy(values.len());
        Self::new(values.iter().map(|&v| (v, w)))
    }

    fn canonicalize(mut atoms: Vec<Atom<F>>, total: F) -> Self {
        atoms.retain(|a| a.prob > F::zero());
        atoms.sort_by(|x, y| x.value.partial_cmp(&y.value).unwrap_or(Ordering::Equal));
        let mut merged: Vec<Atom<F>> = Vec::with_capacity(atoms.len());
        for atom in atoms {
            match merged.last_mut() {
                Some(last) if last.value == atom.value => last.prob = last.prob + atom.prob,
                _ => merged.push(atom),
            }
        }
        for atom in &mut merged {
            atom.prob = atom.prob / total;
        }
        Self { atoms: merged }
    }

    pub fn atoms(&self) -> &[Atom<F>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn min_value(&self) -> F {
        self.atoms[0].value
    }

    pub fn max_value(&self) -> F {
        self.atoms[self.atoms.len() - 1].value
    }

    /// `E[f(x)]`, summed in ascending atom order.
    pub fn expectation(&self, mut f: impl FnMut(F) -> F) -> F {
        self.atoms.iter().fold(F::zero(), |acc, a| acc + a.prob * f(a.value))
    }

    pub fn mean(&self) -> F {
        self.expectation(|x| x)
    }

    /// Distribution of `x + c`.
    pub fn shift(&self, c: F) -> Self {
        let atoms = self.atoms.iter().map(|a| Atom { value: a.value + c, prob: a.prob }).collect();
        Self::canonicalize(atoms, F::one())
    }

    /// Distribution of `f(x)`; atoms that collide are merged.
    pub fn map(&self, mut f: impl FnMut(F) -> F) -> Result<Self> {
        Self::new(self.atoms.iter().map(|a| (f(a.value), a.prob)))
    }

    /// Running sums of the atom masses; the last entry is 1 up to rounding.
    pub fn cumulative(&self) -> Vec<F> {
        let mut acc = F::zero();
        self.atoms
            .iter()
            .map(|a| {
                acc = acc + a.prob;
                acc
            })
            .collect()
    }
}
