//! Predicates over inputs: absolute majority and interval predicates.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::saturates_left;
use crate::model::InputMultiset;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PredicateError {
    #[error("interval T({role},{symbol}) is empty")]
    EmptyInterval { role: usize, symbol: usize },
    #[error("role {0} is matched by a datum with no agents")]
    RoleMatchesEmptyDatum(usize),
    #[error("expected alphabet of {expected} symbols, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("majority is defined over a single-symbol alphabet, got {0} symbols")]
    WrongAlphabet(usize),
    #[error("malformed predicate: {0}")]
    Malformed(String),
}

/// Closed interval [lo..hi] of naturals; `hi = None` stands for +∞.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: u32,
    pub hi: Option<u32>,
}

impl Interval {
    pub fn new(lo: u32, hi: Option<u32>) -> Self {
        Interval { lo, hi }
    }

    pub fn at_least(lo: u32) -> Self {
        Interval { lo, hi: None }
    }

    pub fn exactly(v: u32) -> Self {
        Interval { lo: v, hi: Some(v) }
    }

    /// ℕ itself.
    pub fn naturals() -> Self {
        Interval::at_least(0)
    }

    pub fn contains(&self, v: u32) -> bool {
        v >= self.lo && self.hi.is_none_or(|h| v <= h)
    }

    pub fn is_empty(&self) -> bool {
        self.hi.is_some_and(|h| h < self.lo)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(h) => write!(f, "[{}..{}]", self.lo, h),
            None => write!(f, "[{}..inf)", self.lo),
        }
    }
}

impl Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.lo, self.hi).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (lo, hi) = <(u32, Option<u32>)>::deserialize(d)?;
        Ok(Interval { lo, hi })
    }
}

/// ∃ pairwise distinct d₁..dₙ with M(dᵢ, xⱼ) ∈ T(i, j) for all i, j.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SimpleIntervalPredicate {
    t: Vec<Vec<Interval>>,
}

impl SimpleIntervalPredicate {
    /// Builds and validates a predicate from its n×m interval matrix.
    pub fn new(t: Vec<Vec<Interval>>) -> Result<Self, PredicateError> {
        if t.is_empty() {
            return Err(PredicateError::Malformed("at least one role is required".into()));
        }
        let m = t[0].len();
        if m == 0 {
            return Err(PredicateError::Malformed("at least one symbol is required".into()));
        }
        if let Some(row) = t.iter().find(|row| row.len() != m) {
            return Err(PredicateError::ArityMismatch {
                expected: m,
                found: row.len(),
            });
        }
        let psi = SimpleIntervalPredicate { t };
        validate_simple(&psi)?;
        Ok(psi)
    }

    /// Number of roles.
    pub fn n(&self) -> usize {
        self.t.len()
    }

    /// Number of symbols.
    pub fn m(&self) -> usize {
        self.t[0].len()
    }

    /// T(i, j), zero-based.
    pub fn interval(&self, role: usize, symbol: usize) -> Interval {
        self.t[role][symbol]
    }

    pub fn matrix(&self) -> &[Vec<Interval>] {
        &self.t
    }

    /// Whether a datum with per-symbol `counts` may play `role`.
    pub fn matches(&self, role: usize, counts: &[u32]) -> bool {
        self.t[role].iter().zip(counts).all(|(iv, &c)| iv.contains(c))
    }

    /// The same predicate read over a larger alphabet, leaving the new
    /// symbols unconstrained.
    pub fn extend_alphabet(&self, m: usize) -> Result<Self, PredicateError> {
        if m < self.m() {
            return Err(PredicateError::ArityMismatch {
                expected: self.m(),
                found: m,
            });
        }
        let t = self
            .t
            .iter()
            .map(|row| {
                let mut row = row.clone();
                row.resize(m, Interval::naturals());
                row
            })
            .collect();
        SimpleIntervalPredicate::new(t)
    }
}

/// Checks nonemptiness of every interval and that each role excludes the
/// all-zero datum.
pub fn validate_simple(psi: &SimpleIntervalPredicate) -> Result<(), PredicateError> {
    for (i, row) in psi.t.iter().enumerate() {
        for (j, iv) in row.iter().enumerate() {
            if iv.is_empty() {
                return Err(PredicateError::EmptyInterval { role: i, symbol: j });
            }
        }
    }
    for (i, row) in psi.t.iter().enumerate() {
        if row.iter().all(|iv| iv.contains(0)) {
            return Err(PredicateError::RoleMatchesEmptyDatum(i));
        }
    }
    Ok(())
}

/// Evaluates ψ(M) by matching roles to data of supp(M).
///
/// Data outside the support have all counts zero and can match no role, so
/// restricting candidates to the support is exact.
pub fn eval_simple(psi: &SimpleIntervalPredicate, m: &InputMultiset) -> Result<bool, PredicateError> {
    if m.alphabet_size() != psi.m() {
        return Err(PredicateError::ArityMismatch {
            expected: psi.m(),
            found: m.alphabet_size(),
        });
    }
    let data: Vec<Vec<u32>> = m.data().into_iter().map(|d| m.counts_of(d)).collect();
    let adj: Vec<Vec<usize>> = (0..psi.n())
        .map(|i| {
            data.iter()
                .enumerate()
                .filter(|(_, counts)| psi.matches(i, counts))
                .map(|(k, _)| k)
                .collect()
        })
        .collect();
    Ok(saturates_left(&adj, data.len()))
}

/// φ_maj(M): some datum holds strictly more agents than all others combined.
pub fn eval_phi_maj(m: &InputMultiset) -> Result<bool, PredicateError> {
    if m.alphabet_size() != 1 {
        return Err(PredicateError::WrongAlphabet(m.alphabet_size()));
    }
    let total = m.total();
    Ok(m.data().into_iter().any(|d| 2 * m.get(d, 0) as u64 > total))
}

/// Boolean combination of simple interval predicates and the majority atom.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PredicateExpr {
    Atom(SimpleIntervalPredicate),
    Maj,
    Not(Box<PredicateExpr>),
    And(Box<PredicateExpr>, Box<PredicateExpr>),
    Or(Box<PredicateExpr>, Box<PredicateExpr>),
}

impl PredicateExpr {
    pub fn negated(e: PredicateExpr) -> Self {
        PredicateExpr::Not(Box::new(e))
    }

    pub fn and(a: PredicateExpr, b: PredicateExpr) -> Self {
        PredicateExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: PredicateExpr, b: PredicateExpr) -> Self {
        PredicateExpr::Or(Box::new(a), Box::new(b))
    }

    /// Size of the common alphabet of all atoms.
    pub fn alphabet_size(&self) -> Result<usize, PredicateError> {
        match self {
            PredicateExpr::Atom(psi) => Ok(psi.m()),
            PredicateExpr::Maj => Ok(1),
            PredicateExpr::Not(e) => e.alphabet_size(),
            PredicateExpr::And(a, b) | PredicateExpr::Or(a, b) => {
                let (x, y) = (a.alphabet_size()?, b.alphabet_size()?);
                if x != y {
                    return Err(PredicateError::ArityMismatch { expected: x, found: y });
                }
                Ok(x)
            }
        }
    }
}

pub fn eval_expr(e: &PredicateExpr, m: &InputMultiset) -> Result<bool, PredicateError> {
    match e {
        PredicateExpr::Atom(psi) => eval_simple(psi, m),
        PredicateExpr::Maj => eval_phi_maj(m),
        PredicateExpr::Not(a) => Ok(!eval_expr(a, m)?),
        PredicateExpr::And(a, b) => Ok(eval_expr(a, m)? && eval_expr(b, m)?),
        PredicateExpr::Or(a, b) => Ok(eval_expr(a, m)? || eval_expr(b, m)?),
    }
}
