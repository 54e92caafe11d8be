//! JSON file formats for protocols, predicates and populations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use udpop_core::predicates::{Interval, PredicateExpr, SimpleIntervalPredicate};
use udpop_core::protocols::{build_for, ProtocolError};
use udpop_core::{DatumId, InputMultiset, Protocol};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("population has {0} agents; at least 2 are required")]
    PopulationTooSmall(u64),
    #[error("unknown symbol {symbol:?}; expected one of {expected:?}")]
    UnknownSymbol { symbol: String, expected: Vec<String> },
    #[error("record for datum {0:?} has count 0")]
    ZeroCount(String),
    #[error("interval matrix is not {n}x{m}")]
    Shape { n: usize, m: usize },
    #[error("operands read different alphabets: {0:?} vs {1:?}")]
    AlphabetMismatch(Vec<String>, Vec<String>),
    #[error(transparent)]
    Predicate(#[from] udpop_core::predicates::PredicateError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// `{"kind":"majority"}`, `{"kind":"interval","n":..,"m":..,"T":[[..]]}`, or a
/// connective over nested descriptors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProtocolSpec {
    Majority,
    Interval {
        n: usize,
        m: usize,
        #[serde(rename = "T")]
        t: Vec<Vec<Interval>>,
    },
    Not {
        of: Box<ProtocolSpec>,
    },
    And {
        left: Box<ProtocolSpec>,
        right: Box<ProtocolSpec>,
    },
    Or {
        left: Box<ProtocolSpec>,
        right: Box<ProtocolSpec>,
    },
}

impl ProtocolSpec {
    /// The predicate whose protocol this descriptor builds.
    pub fn expr(&self) -> Result<PredicateExpr, FormatError> {
        Ok(match self {
            ProtocolSpec::Majority => PredicateExpr::Maj,
            ProtocolSpec::Interval { n, m, t } => {
                if t.len() != *n || t.iter().any(|row| row.len() != *m) {
                    return Err(FormatError::Shape { n: *n, m: *m });
                }
                PredicateExpr::Atom(SimpleIntervalPredicate::new(t.clone())?)
            }
            ProtocolSpec::Not { of } => PredicateExpr::negated(of.expr()?),
            ProtocolSpec::And { left, right } => PredicateExpr::and(left.expr()?, right.expr()?),
            ProtocolSpec::Or { left, right } => PredicateExpr::or(left.expr()?, right.expr()?),
        })
    }

    pub fn build(&self) -> Result<Protocol, FormatError> {
        Ok(build_for(&self.expr()?)?)
    }
}

/// `{"kind":"maj"}`, `{"kind":"interval","T":[[..]]}`, or a connective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PredicateSpec {
    Maj,
    Interval {
        #[serde(rename = "T")]
        t: Vec<Vec<Interval>>,
    },
    Not {
        of: Box<PredicateSpec>,
    },
    And {
        left: Box<PredicateSpec>,
        right: Box<PredicateSpec>,
    },
    Or {
        left: Box<PredicateSpec>,
        right: Box<PredicateSpec>,
    },
}

impl PredicateSpec {
    pub fn expr(&self) -> Result<PredicateExpr, FormatError> {
        Ok(match self {
            PredicateSpec::Maj => PredicateExpr::Maj,
            PredicateSpec::Interval { t } => PredicateExpr::Atom(SimpleIntervalPredicate::new(t.clone())?),
            PredicateSpec::Not { of } => PredicateExpr::negated(of.expr()?),
            PredicateSpec::And { left, right } => PredicateExpr::and(left.expr()?, right.expr()?),
            PredicateSpec::Or { left, right } => PredicateExpr::or(left.expr()?, right.expr()?),
        })
    }
}

/// Symbol names a protocol built for `e` reads: `x` for majority and
/// `x1..xm` for interval atoms.
pub fn expr_symbols(e: &PredicateExpr) -> Result<Vec<String>, FormatError> {
    match e {
        PredicateExpr::Maj => Ok(vec!["x".to_string()]),
        PredicateExpr::Atom(psi) => Ok((1..=psi.m()).map(|j| format!("x{j}")).collect()),
        PredicateExpr::Not(a) => expr_symbols(a),
        PredicateExpr::And(a, b) | PredicateExpr::Or(a, b) => {
            let (l, r) = (expr_symbols(a)?, expr_symbols(b)?);
            if l != r {
                return Err(FormatError::AlphabetMismatch(l, r));
            }
            Ok(l)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationRecord {
    pub datum: String,
    pub symbol: String,
    pub count: u32,
}

/// A population file: a list of `{datum, symbol, count}` records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PopulationFile {
    pub records: Vec<PopulationRecord>,
}

impl PopulationFile {
    /// Resolves symbols against `symbols` and interns datum labels to dense
    /// ids in order of first appearance.
    pub fn to_input(&self, symbols: &[String]) -> Result<InputMultiset, FormatError> {
        let mut ids: BTreeMap<&str, DatumId> = BTreeMap::new();
        let mut m = InputMultiset::new(symbols.len());
        for rec in &self.records {
            if rec.count == 0 {
                return Err(FormatError::ZeroCount(rec.datum.clone()));
            }
            let x = symbols
                .iter()
                .position(|s| *s == rec.symbol)
                .ok_or_else(|| FormatError::UnknownSymbol {
                    symbol: rec.symbol.clone(),
                    expected: symbols.to_vec(),
                })?;
            let next = DatumId(ids.len() as u32);
            let d = *ids.entry(rec.datum.as_str()).or_insert(next);
            m.add(d, x, rec.count);
        }
        if m.total() < 2 {
            return Err(FormatError::PopulationTooSmall(m.total()));
        }
        Ok(m)
    }

    /// Records for `m`, labelling datum `d` as `d<id>`.
    pub fn from_input(m: &InputMultiset, symbols: &[String]) -> Self {
        PopulationFile {
            records: m
                .entries()
                .map(|(d, x, count)| PopulationRecord {
                    datum: format!("d{}", d.0),
                    symbol: symbols[x].clone(),
                    count,
                })
                .collect(),
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| FormatError::Parse {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_population(path: &Path, symbols: &[String]) -> Result<InputMultiset, FormatError> {
    read_json::<PopulationFile>(path)?.to_input(symbols)
}

pub fn save_population(path: &Path, m: &InputMultiset, symbols: &[String]) -> Result<(), FormatError> {
    let text = serde_json::to_string_pretty(&PopulationFile::from_input(m, symbols)).expect("records serialize");
    fs::write(path, text + "\n").map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}
