//! Boolean combinations of protocols over a common alphabet.

use std::sync::Arc;

use super::ProtocolError;
use crate::model::{Dynamics, Protocol, Relation, Restriction, StateId};

struct Negated(Arc<dyn Dynamics>);

impl Dynamics for Negated {
    fn num_states(&self) -> usize {
        self.0.num_states()
    }

    fn output(&self, q: StateId) -> bool {
        !self.0.output(q)
    }

    fn pair_successors(&self, p: StateId, q: StateId, rel: Relation) -> Vec<(StateId, StateId)> {
        self.0.pair_successors(p, q, rel)
    }

    fn unary_successors(&self, q: StateId) -> Vec<StateId> {
        self.0.unary_successors(q)
    }

    fn state_label(&self, q: StateId) -> String {
        self.0.state_label(q)
    }

    fn normalize(&self, q: StateId) -> StateId {
        self.0.normalize(q)
    }

    fn num_registers(&self) -> usize {
        self.0.num_registers()
    }

    fn erase_registers(&self, q: StateId) -> StateId {
        self.0.erase_registers(q)
    }

    fn register_writes(&self, q: StateId) -> Vec<(usize, bool)> {
        self.0.register_writes(q)
    }

    fn output_from_registers(&self, values: &[bool]) -> bool {
        !self.0.output_from_registers(values)
    }

    fn factors(&self) -> Option<Vec<Arc<dyn Dynamics>>> {
        self.0.factors()
    }

    fn factor_states(&self, q: StateId) -> Option<Vec<StateId>> {
        self.0.factor_states(q)
    }
}

/// Same dynamics, complemented output.
pub fn negate(p: &Protocol) -> Protocol {
    p.with_dynamics(
        format!("not({})", p.name),
        Arc::new(Negated(p.dynamics().clone())),
        p.input_map().to_vec(),
        p.restriction(),
    )
}

/// Synchronous product in which each interaction advances one component.
struct Product {
    left: Arc<dyn Dynamics>,
    right: Arc<dyn Dynamics>,
    n_right: u32,
    total: usize,
}

impl Product {
    fn split(&self, q: StateId) -> (StateId, StateId) {
        (StateId(q.0 / self.n_right), StateId(q.0 % self.n_right))
    }

    fn join(&self, a: StateId, b: StateId) -> StateId {
        StateId(a.0 * self.n_right + b.0)
    }
}

impl Dynamics for Product {
    fn num_states(&self) -> usize {
        self.total
    }

    fn output(&self, q: StateId) -> bool {
        let (a, b) = self.split(q);
        self.left.output(a) && self.right.output(b)
    }

    fn pair_successors(&self, p: StateId, q: StateId, rel: Relation) -> Vec<(StateId, StateId)> {
        let ((pa, pb), (qa, qb)) = (self.split(p), self.split(q));
        let mut out: Vec<(StateId, StateId)> = self
            .left
            .pair_successors(pa, qa, rel)
            .into_iter()
            .map(|(pa2, qa2)| (self.join(pa2, pb), self.join(qa2, qb)))
            .chain(
                self.right
                    .pair_successors(pb, qb, rel)
                    .into_iter()
                    .map(|(pb2, qb2)| (self.join(pa, pb2), self.join(qa, qb2))),
            )
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn unary_successors(&self, q: StateId) -> Vec<StateId> {
        let (a, b) = self.split(q);
        let mut out: Vec<StateId> = self
            .left
            .unary_successors(a)
            .into_iter()
            .map(|a2| self.join(a2, b))
            .chain(self.right.unary_successors(b).into_iter().map(|b2| self.join(a, b2)))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn state_label(&self, q: StateId) -> String {
        let (a, b) = self.split(q);
        format!("({}, {})", self.left.state_label(a), self.right.state_label(b))
    }

    fn normalize(&self, q: StateId) -> StateId {
        let (a, b) = self.split(q);
        self.join(self.left.normalize(a), self.right.normalize(b))
    }

    /// Registers of both components, left first; only when both have some.
    fn num_registers(&self) -> usize {
        let (l, r) = (self.left.num_registers(), self.right.num_registers());
        if l > 0 && r > 0 {
            l + r
        } else {
            0
        }
    }

    fn erase_registers(&self, q: StateId) -> StateId {
        let (a, b) = self.split(q);
        self.join(self.left.erase_registers(a), self.right.erase_registers(b))
    }

    fn register_writes(&self, q: StateId) -> Vec<(usize, bool)> {
        let (a, b) = self.split(q);
        let shift = self.left.num_registers();
        let mut out = self.left.register_writes(a);
        out.extend(self.right.register_writes(b).into_iter().map(|(r, v)| (r + shift, v)));
        out
    }

    fn output_from_registers(&self, values: &[bool]) -> bool {
        let (l, r) = values.split_at(self.left.num_registers());
        self.left.output_from_registers(l) && self.right.output_from_registers(r)
    }

    fn factors(&self) -> Option<Vec<Arc<dyn Dynamics>>> {
        let mut out = self.left.factors().unwrap_or_else(|| vec![self.left.clone()]);
        out.extend(self.right.factors().unwrap_or_else(|| vec![self.right.clone()]));
        Some(out)
    }

    fn factor_states(&self, q: StateId) -> Option<Vec<StateId>> {
        let (a, b) = self.split(q);
        let mut out = self.left.factor_states(a).unwrap_or_else(|| vec![a]);
        out.extend(self.right.factor_states(b).unwrap_or_else(|| vec![b]));
        Some(out)
    }
}

/// Product protocol whose output is the conjunction of both outputs.
pub fn conjoin(p1: &Protocol, p2: &Protocol) -> Result<Protocol, ProtocolError> {
    if p1.symbols() != p2.symbols() {
        return Err(ProtocolError::AlphabetMismatch {
            left: p1.symbols().to_vec(),
            right: p2.symbols().to_vec(),
        });
    }
    let n_right = p2.num_states() as u64;
    let total = (p1.num_states() as u64)
        .checked_mul(n_right)
        .filter(|&t| t <= u32::MAX as u64)
        .ok_or(ProtocolError::StateSpaceTooLarge)?;
    let product = Product {
        left: p1.dynamics().clone(),
        right: p2.dynamics().clone(),
        n_right: n_right as u32,
        total: total as usize,
    };
    let input_map = p1
        .input_map()
        .iter()
        .zip(p2.input_map())
        .map(|(&a, &b)| product.join(a, b))
        .collect();
    let restriction = if p1.is_immediate_observation() && p2.is_immediate_observation() {
        Restriction::ImmediateObservation
    } else {
        Restriction::General
    };
    Ok(p1.with_dynamics(
        format!("and({}, {})", p1.name, p2.name),
        Arc::new(product),
        input_map,
        restriction,
    ))
}

/// ¬(¬p1 ∧ ¬p2).
pub fn disjoin(p1: &Protocol, p2: &Protocol) -> Result<Protocol, ProtocolError> {
    let mut p = negate(&conjoin(&negate(p1), &negate(p2))?);
    p.name = format!("or({}, {})", p1.name, p2.name);
    Ok(p)
}
