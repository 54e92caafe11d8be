//! Immediate-observation protocol for simple interval predicates.
//!
//! A controller and one leader per datum are elected, agents of a common
//! datum count their element with the tower method, leaders pick roles they
//! match and the controller records which roles are taken. The controller
//! spreads `true` once every role is filled.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::model::{Dynamics, Protocol, Relation, Restriction, StateId};
use crate::predicates::SimpleIntervalPredicate;

/// Counting bound: agents never need to count past `r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RBound {
    pub r: u32,
    pub per_role: Vec<u32>,
}

/// r_i = max of the lower bounds and the finite upper bounds of row i;
/// r = max r_i + 1.
pub fn compute_r(psi: &SimpleIntervalPredicate) -> RBound {
    let per_role: Vec<u32> = psi
        .matrix()
        .iter()
        .map(|row| {
            row.iter()
                .map(|iv| iv.lo)
                .chain(row.iter().filter_map(|iv| iv.hi))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let r = per_role.iter().copied().max().unwrap_or(0) + 1;
    RBound { r, per_role }
}

/// Decoded interval-protocol state. `init` is zero-based; `role` is signed
/// and one-based (0 means no role); `task[i]` tracks role i + 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntState {
    pub init: u32,
    pub val: u32,
    pub out: bool,
    pub lead: bool,
    pub role: i32,
    pub cnt: Vec<u32>,
    pub ctrl: i32,
    pub task: Vec<bool>,
}

impl IntState {
    pub fn all_tasks(&self) -> bool {
        self.task.iter().all(|&t| t)
    }

    pub fn no_tasks(&self) -> bool {
        self.task.iter().all(|&t| !t)
    }
}

impl fmt::Display for IntState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cnt: Vec<String> = self.cnt.iter().map(u32::to_string).collect();
        let task: String = self.task.iter().map(|&t| if t { '1' } else { '0' }).collect();
        write!(
            f,
            "x{}:v{}{}{} r{} c[{}] k{} t{}",
            self.init + 1,
            self.val,
            if self.out { "+" } else { "-" },
            if self.lead { "L" } else { "" },
            self.role,
            cnt.join(","),
            self.ctrl,
            task
        )
    }
}

/// Mixed-radix encoding of [`IntState`] for fixed (n, m, r).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntLayout {
    pub n: u32,
    pub m: u32,
    pub r: u32,
}

impl IntLayout {
    fn radices(&self) -> impl Iterator<Item = u64> + '_ {
        let n = self.n as u64;
        let m = self.m as u64;
        let r = self.r as u64;
        [m, r, 2, 2, 2 * n + 1]
            .into_iter()
            .chain(std::iter::repeat_n(r + 1, self.m as usize))
            .chain(std::iter::once(3))
            .chain(std::iter::repeat_n(2, self.n as usize))
    }

    /// |Q|, or `None` if it does not fit a state id.
    pub fn num_states(&self) -> Option<usize> {
        self.radices()
            .try_fold(1u64, |acc, x| acc.checked_mul(x))
            .filter(|&t| t <= u32::MAX as u64)
            .map(|t| t as usize)
    }

    pub fn encode(&self, s: &IntState) -> StateId {
        let digits = std::iter::empty()
            .chain([
                s.init as u64,
                (s.val - 1) as u64,
                s.out as u64,
                s.lead as u64,
                (s.role + self.n as i32) as u64,
            ])
            .chain(s.cnt.iter().map(|&c| c as u64))
            .chain(std::iter::once((s.ctrl + 1) as u64))
            .chain(s.task.iter().map(|&t| t as u64));
        let mut code = 0u64;
        for (d, radix) in digits.zip(self.radices()) {
            debug_assert!(d < radix);
            code = code * radix + d;
        }
        StateId(code as u32)
    }

    pub fn decode(&self, q: StateId) -> IntState {
        let radices: Vec<u64> = self.radices().collect();
        let mut digits = vec![0u64; radices.len()];
        let mut code = q.0 as u64;
        for (slot, &radix) in digits.iter_mut().zip(&radices).rev() {
            *slot = code % radix;
            code /= radix;
        }
        let m = self.m as usize;
        let n = self.n as usize;
        IntState {
            init: digits[0] as u32,
            val: digits[1] as u32 + 1,
            out: digits[2] == 1,
            lead: digits[3] == 1,
            role: digits[4] as i32 - self.n as i32,
            cnt: digits[5..5 + m].iter().map(|&c| c as u32).collect(),
            ctrl: digits[5 + m] as i32 - 1,
            task: digits[6 + m..6 + m + n].iter().map(|&t| t == 1).collect(),
        }
    }

    /// ι(x_j), zero-based j.
    pub fn initial(&self, j: u32) -> IntState {
        let mut cnt = vec![0; self.m as usize];
        cnt[j as usize] = 1;
        IntState {
            init: j,
            val: 1,
            out: false,
            lead: true,
            role: 0,
            cnt,
            ctrl: 1,
            task: vec![false; self.n as usize],
        }
    }
}

const MIRROR_RULES: [u8; 5] = [4, 6, 7, 8, 11];

pub struct IntervalDynamics {
    psi: SimpleIntervalPredicate,
    layout: IntLayout,
    states: Vec<IntState>,
}

impl IntervalDynamics {
    pub fn new(psi: SimpleIntervalPredicate) -> Option<Self> {
        let r = compute_r(&psi).r;
        let layout = IntLayout {
            n: psi.n() as u32,
            m: psi.m() as u32,
            r,
        };
        let total = layout.num_states()?;
        let states = (0..total as u32).map(|i| layout.decode(StateId(i))).collect();
        Some(IntervalDynamics { psi, layout, states })
    }

    pub fn layout(&self) -> IntLayout {
        self.layout
    }

    pub fn predicate(&self) -> &SimpleIntervalPredicate {
        &self.psi
    }

    pub fn state(&self, q: StateId) -> &IntState {
        &self.states[q.index()]
    }

    /// Checks that only leaders hold a positive role and that a leader
    /// holding role i has counts inside row i of the predicate.
    pub fn check_invariants<I: IntoIterator<Item = StateId>>(&self, states: I) -> Result<(), String> {
        for q in states {
            let s = self.state(q);
            if s.role > 0 && !s.lead {
                return Err(format!("non-leader {s} holds role {}", s.role));
            }
            if s.role > 0 && !self.matches(s, s.role as usize) {
                return Err(format!("leader {s} cannot fill role {}", s.role));
            }
        }
        Ok(())
    }

    /// Whether the counts of `q` match role `i` (one-based).
    fn matches(&self, q: &IntState, i: usize) -> bool {
        self.psi.matches(i - 1, &q.cnt)
    }

    /// Updated versions of `q` produced by `rule` when `q` observes `p`.
    /// Mirror rules are obtained by passing `q` itself as `p`.
    fn rule_updates(&self, rule: u8, p: &IntState, q: &IntState, same_datum: bool, out: &mut Vec<IntState>) {
        let n = self.layout.n as usize;
        let r = self.layout.r;
        match rule {
            1 if p.lead && q.lead && same_datum => {
                let mut q2 = q.clone();
                q2.role = -q.role.abs();
                q2.lead = false;
                out.push(q2);
            }
            2 if p.ctrl == 1 && q.ctrl == 1 => {
                let mut q2 = q.clone();
                q2.ctrl = -1;
                out.push(q2);
            }
            3 if same_datum && p.init == q.init && q.val == p.val && p.val < r => {
                let mut q2 = q.clone();
                q2.val += 1;
                out.push(q2);
            }
            4 if same_datum && q.lead && q.cnt[p.init as usize] < p.val => {
                let mut q2 = q.clone();
                q2.cnt[p.init as usize] = p.val;
                if q.role > 0 && !self.psi.interval(q.role as usize - 1, p.init as usize).contains(p.val) {
                    q2.role = -q.role;
                }
                out.push(q2);
            }
            5 if q.lead && q.role == 0 => {
                for i in 1..=n {
                    if self.matches(q, i) {
                        let mut q2 = q.clone();
                        q2.role = i as i32;
                        out.push(q2);
                    }
                }
            }
            6 if p.ctrl == 1 && q.lead && q.role > 0 => {
                let i = q.role as usize;
                let can_switch = (1..=n).any(|i2| i2 != i && !p.task[i2 - 1] && self.matches(q, i2));
                if can_switch {
                    let mut q2 = q.clone();
                    q2.role = -q.role;
                    out.push(q2);
                }
            }
            7 if p.role != 0 && q.ctrl == 1 => {
                let mut q2 = q.clone();
                q2.task[p.role.unsigned_abs() as usize - 1] = p.role > 0;
                out.push(q2);
            }
            8 if p.ctrl == 1 && q.role < 0 && !p.task[q.role.unsigned_abs() as usize - 1] => {
                let mut q2 = q.clone();
                q2.role = 0;
                out.push(q2);
            }
            9 if p.ctrl == -1 && q.ctrl == 1 => {
                let mut q2 = q.clone();
                q2.task.iter_mut().for_each(|t| *t = false);
                out.push(q2);
            }
            10 if p.ctrl == 1 && p.no_tasks() && q.ctrl == -1 => {
                let mut q2 = q.clone();
                q2.ctrl = 0;
                out.push(q2);
            }
            11 if p.ctrl == 1 => {
                let mut q2 = q.clone();
                q2.out = p.all_tasks();
                out.push(q2);
            }
            _ => {}
        }
    }

    fn finish(&self, q: &IntState, updates: Vec<IntState>) -> Vec<StateId> {
        let mut ids: Vec<StateId> = updates
            .iter()
            .filter(|q2| *q2 != q)
            .map(|q2| self.layout.encode(q2))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

impl Dynamics for IntervalDynamics {
    fn num_states(&self) -> usize {
        self.states.len()
    }

    fn output(&self, q: StateId) -> bool {
        self.state(q).out
    }

    fn pair_successors(&self, p: StateId, q: StateId, rel: Relation) -> Vec<(StateId, StateId)> {
        let (ps, qs) = (self.state(p), self.state(q));
        let mut updates = Vec::new();
        for rule in 1..=11 {
            self.rule_updates(rule, ps, qs, rel == Relation::Eq, &mut updates);
        }
        self.finish(qs, updates).into_iter().map(|q2| (p, q2)).collect()
    }

    fn unary_successors(&self, q: StateId) -> Vec<StateId> {
        let qs = self.state(q);
        let mut updates = Vec::new();
        for rule in MIRROR_RULES {
            self.rule_updates(rule, qs, qs, true, &mut updates);
        }
        self.finish(qs, updates)
    }

    fn state_label(&self, q: StateId) -> String {
        self.state(q).to_string()
    }

    /// Leadership and controllership are never regained, and only leaders
    /// read or write cnt and only controllers read or write task.
    fn normalize(&self, q: StateId) -> StateId {
        let s = self.state(q);
        let dead_cnt = !s.lead && s.cnt.iter().any(|&c| c != 0);
        let dead_task = s.ctrl != 1 && s.task.iter().any(|&t| t);
        if !dead_cnt && !dead_task {
            return q;
        }
        let mut s = s.clone();
        if dead_cnt {
            s.cnt.iter_mut().for_each(|c| *c = 0);
        }
        if dead_task {
            s.task.iter_mut().for_each(|t| *t = false);
        }
        self.layout.encode(&s)
    }

    /// `out` is never read; rule 11 lets a controller write AND(task) into
    /// any agent, itself included through the mirror rule.
    fn num_registers(&self) -> usize {
        1
    }

    fn erase_registers(&self, q: StateId) -> StateId {
        let s = self.state(q);
        if !s.out {
            return q;
        }
        let mut s = s.clone();
        s.out = false;
        self.layout.encode(&s)
    }

    fn register_writes(&self, q: StateId) -> Vec<(usize, bool)> {
        let s = self.state(q);
        if s.ctrl == 1 {
            vec![(0, s.all_tasks())]
        } else {
            Vec::new()
        }
    }

    fn output_from_registers(&self, values: &[bool]) -> bool {
        values[0]
    }
}

/// Builds the interval protocol for `psi` over symbols x1..xm.
pub fn build_interval(psi: &SimpleIntervalPredicate) -> Result<Protocol, super::ProtocolError> {
    let dynamics = IntervalDynamics::new(psi.clone()).ok_or(super::ProtocolError::StateSpaceTooLarge)?;
    let layout = dynamics.layout();
    let symbols = (1..=layout.m).map(|j| format!("x{j}")).collect();
    let input_map = (0..layout.m).map(|j| layout.encode(&layout.initial(j))).collect();
    Ok(Protocol::new(
        "interval",
        Arc::new(dynamics),
        symbols,
        input_map,
        Restriction::ImmediateObservation,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicates::Interval;

    fn psi(rows: Vec<Vec<Interval>>) -> SimpleIntervalPredicate {
        SimpleIntervalPredicate::new(rows).unwrap()
    }

    pub(crate) fn two_roles() -> SimpleIntervalPredicate {
        psi(vec![
            vec![Interval::at_least(2), Interval::new(0, Some(4))],
            vec![Interval::naturals(), Interval::at_least(1)],
        ])
    }

    #[test]
    fn r_examples() {
        assert_eq!(
            compute_r(&two_roles()),
            RBound {
                r: 5,
                per_role: vec![4, 1]
            }
        );
        let one = psi(vec![vec![Interval::exactly(1)]]);
        assert_eq!(
            compute_r(&one),
            RBound {
                r: 2,
                per_role: vec![1]
            }
        );
        let mixed = psi(vec![vec![Interval::new(2, Some(3)), Interval::naturals()]]);
        assert_eq!(compute_r(&mixed).r, 4);
    }

    #[test]
    fn state_counts() {
        let p1 = build_interval(&psi(vec![vec![Interval::new(1, Some(2))]])).unwrap();
        assert_eq!(p1.num_states(), 864);
        let p2 = build_interval(&psi(vec![vec![Interval::at_least(1), Interval::exactly(0)]])).unwrap();
        assert_eq!(p2.num_states(), 2592);
        assert_eq!(p2.symbols(), &["x1".to_string(), "x2".to_string()]);
    }

    #[test]
    fn encoding_round_trips() {
        let d = IntervalDynamics::new(two_roles()).unwrap();
        for i in (0..d.num_states() as u32).step_by(97) {
            assert_eq!(d.layout.encode(d.state(StateId(i))), StateId(i));
        }
        let init = d.layout.initial(1);
        assert_eq!(init.cnt, vec![0, 1]);
        assert_eq!(d.layout.decode(d.layout.encode(&init)), init);
    }

    #[test]
    fn observer_never_changes() {
        let p = build_interval(&psi(vec![vec![Interval::new(1, Some(2))]])).unwrap();
        assert!(p.check_immediate_observation());
    }

    #[test]
    fn mirror_rule_four_updates_own_count() {
        let d = IntervalDynamics::new(two_roles()).unwrap();
        let mut s = d.layout.initial(0);
        s.val = 3;
        let q = d.layout.encode(&s);
        let succ: Vec<IntState> = d.unary_successors(q).iter().map(|&q2| d.state(q2).clone()).collect();
        assert!(succ.iter().any(|t| t.cnt == vec![3, 0] && t.val == 3));
        // Rule 11 mirrored: a lone controller with no tasks keeps out = false.
        assert!(succ.iter().all(|t| !t.out));
    }

    #[test]
    fn rule_five_offers_every_matching_role() {
        let d = IntervalDynamics::new(two_roles()).unwrap();
        let mut s = d.layout.initial(0);
        s.cnt = vec![3, 1];
        s.ctrl = 0;
        let q = d.layout.encode(&s);
        let mut other = d.layout.initial(1);
        other.lead = false;
        other.ctrl = 0;
        let p = d.layout.encode(&other);
        let roles: Vec<i32> = d
            .pair_successors(p, q, Relation::Neq)
            .iter()
            .map(|&(_, q2)| d.state(q2).role)
            .collect();
        assert_eq!(roles, vec![1, 2]);
    }
}
