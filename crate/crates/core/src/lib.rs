//! Population protocols with unordered data.
//!
//! Agents carry a read-only datum, compared only for (in)equality, and a
//! mutable state from a finite set. This crate provides the execution
//! semantics, builders for a majority protocol and an immediate-observation
//! protocol for interval predicates, a seeded random scheduler, and an
//! exhaustive verifier that decides whether every fair execution from a
//! given input converges to the right answer.

pub mod analysis;
pub mod executor;
pub mod matching;
pub mod model;
pub mod order;
pub mod predicates;
pub mod protocols;

pub use model::{
    apply, card, counts, enabled, init_config, input_of, output, successors, Configuration, DatumId, Dynamics, Form,
    InputMultiset, ModelError, Output, Protocol, Relation, Restriction, StateId, Transition,
};
