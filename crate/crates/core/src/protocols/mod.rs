//! Protocol builders and Boolean combinators.

mod combinators;
mod interval;
mod majority;

use thiserror::Error;

use crate::predicates::{PredicateError, PredicateExpr};

pub use combinators::{conjoin, disjoin, negate};
pub use interval::{build_interval, compute_r, IntLayout, IntState, IntervalDynamics, RBound};
pub use majority::{
    apply_rule as majority_rule, build_majority, build_majority_with_rules, check_majority_invariants, Maj, MajState,
    MajorityDynamics, MAJORITY_RULES, MAJ_STATES,
};

use crate::model::Protocol;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("protocols read different alphabets: {left:?} vs {right:?}")]
    AlphabetMismatch { left: Vec<String>, right: Vec<String> },
    #[error("state space does not fit 32-bit state ids")]
    StateSpaceTooLarge,
    #[error(transparent)]
    InvalidPredicate(#[from] PredicateError),
}

/// Builds a protocol computing `e`: atoms become interval protocols, `Maj`
/// the majority protocol, and connectives the product constructions.
pub fn build_for(e: &PredicateExpr) -> Result<Protocol, ProtocolError> {
    match e {
        PredicateExpr::Atom(psi) => build_interval(psi),
        PredicateExpr::Maj => Ok(build_majority()),
        PredicateExpr::Not(a) => Ok(negate(&build_for(a)?)),
        PredicateExpr::And(a, b) => conjoin(&build_for(a)?, &build_for(b)?),
        PredicateExpr::Or(a, b) => disjoin(&build_for(a)?, &build_for(b)?),
    }
}
