//! Absolute-majority protocol over an unbounded data domain.
//!
//! Agents first pair up with agents of a different datum; the unpaired
//! survivors all share one candidate datum. Their datum is then spread as a
//! group bit (Y for the candidate group, N otherwise), and a classical
//! cancellation protocol decides whether Y outnumbers N. An even bit handles
//! populations in which every agent ends up paired.

use std::fmt;
use std::sync::Arc;

use crate::model::{Dynamics, Protocol, Relation, Restriction, StateId};

/// Value of the majority computation held by an agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Maj {
    /// Strong yes.
    Y,
    /// Strong no.
    N,
    /// Pending reset to Y.
    YBar,
    /// Pending reset to N.
    NBar,
    /// Weak yes.
    LowY,
    /// Weak no.
    LowN,
}

impl Maj {
    pub const ALL: [Maj; 6] = [Maj::Y, Maj::N, Maj::YBar, Maj::NBar, Maj::LowY, Maj::LowN];

    fn index(self) -> u32 {
        Maj::ALL.iter().position(|&m| m == self).unwrap() as u32
    }

    /// y or n: engaged in cancellation.
    pub fn is_weak(self) -> bool {
        matches!(self, Maj::LowY | Maj::LowN)
    }
}

impl fmt::Display for Maj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Maj::Y => "Y",
            Maj::N => "N",
            Maj::YBar => "Ybar",
            Maj::NBar => "Nbar",
            Maj::LowY => "y",
            Maj::LowN => "n",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MajState {
    pub pair: bool,
    pub grp: bool,
    pub even: bool,
    pub maj: Maj,
}

pub const MAJ_STATES: usize = 48;

impl MajState {
    pub const INITIAL: MajState = MajState {
        pair: false,
        grp: true,
        even: false,
        maj: Maj::Y,
    };

    pub fn encode(self) -> StateId {
        let bits = (self.pair as u32) << 2 | (self.grp as u32) << 1 | self.even as u32;
        StateId(bits * 6 + self.maj.index())
    }

    pub fn decode(q: StateId) -> MajState {
        let bits = q.0 / 6;
        MajState {
            pair: bits & 4 != 0,
            grp: bits & 2 != 0,
            even: bits & 1 != 0,
            maj: Maj::ALL[(q.0 % 6) as usize],
        }
    }

    pub fn all() -> impl Iterator<Item = MajState> {
        (0..MAJ_STATES as u32).map(|i| MajState::decode(StateId(i)))
    }

    pub fn output(self) -> bool {
        matches!(self.maj, Maj::Y | Maj::LowY) && !self.even
    }
}

impl fmt::Display for MajState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}{}",
            if self.pair { "P" } else { "u" },
            if self.grp { "M" } else { "m" },
            if self.even { "E" } else { "o" },
            self.maj
        )
    }
}

pub const MAJORITY_RULES: std::ops::RangeInclusive<u8> = 1..=14;

/// Applies rule `rule` to the ordered pair (p, q) under datum relation
/// `rel`. Unspecified fields are carried over.
pub fn apply_rule(rule: u8, p: MajState, q: MajState, rel: Relation) -> Option<(MajState, MajState)> {
    use Maj::*;
    let neq = rel == Relation::Neq;
    let (mut p2, mut q2) = (p, q);
    let fired = match rule {
        1 => {
            let ok = !p.pair && !q.pair && neq;
            if ok {
                p2.pair = true;
                p2.even = true;
                q2.pair = true;
                q2.even = true;
            }
            ok
        }
        2 => {
            let ok = !p.pair && q.pair && q.grp && q.maj == Y && neq;
            if ok {
                q2.grp = false;
                q2.maj = N;
            }
            ok
        }
        3 => {
            let ok = !p.pair && q.pair && !q.grp && q.maj == N && !neq;
            if ok {
                q2.grp = true;
                q2.maj = Y;
            }
            ok
        }
        4 => {
            let ok = !p.pair && q.pair && q.grp && q.maj.is_weak() && neq;
            if ok {
                q2.maj = NBar;
            }
            ok
        }
        5 => {
            let ok = !p.pair && q.pair && !q.grp && q.maj.is_weak() && !neq;
            if ok {
                q2.maj = YBar;
            }
            ok
        }
        6 => {
            let ok = p.grp && p.maj == NBar && !q.grp && q.maj.is_weak();
            if ok {
                p2.grp = false;
                p2.maj = N;
                q2.maj = N;
            }
            ok
        }
        7 => {
            let ok = !p.grp && p.maj == YBar && q.grp && q.maj.is_weak();
            if ok {
                p2.grp = true;
                p2.maj = Y;
                q2.maj = Y;
            }
            ok
        }
        8 => {
            let ok = p.grp && p.maj == NBar && !q.grp && q.maj == YBar;
            if ok {
                p2.grp = false;
                p2.maj = LowN;
                q2.grp = true;
                q2.maj = LowN;
            }
            ok
        }
        9 => {
            let ok = !p.pair && q.even;
            if ok {
                q2.even = false;
            }
            ok
        }
        10 => {
            let ok = p.pair && p.even && q.pair && !q.even;
            if ok {
                q2.even = true;
            }
            ok
        }
        11 => {
            let ok = p.maj == Y && q.maj == N;
            if ok {
                p2.maj = LowN;
                q2.maj = LowN;
            }
            ok
        }
        12 => {
            let ok = p.maj == Y && q.maj == LowN;
            if ok {
                q2.maj = LowY;
            }
            ok
        }
        13 => {
            let ok = p.maj == N && q.maj == LowY;
            if ok {
                q2.maj = LowN;
            }
            ok
        }
        14 => {
            let ok = p.maj == LowN && q.maj == LowY;
            if ok {
                q2.maj = LowN;
            }
            ok
        }
        _ => false,
    };
    fired.then_some((p2, q2))
}

/// Precomputed transition table over the 48 majority states.
pub struct MajorityDynamics {
    table: Vec<Vec<(StateId, StateId)>>,
}

impl MajorityDynamics {
    pub fn with_rules<F: Fn(u8) -> bool>(enabled: F) -> Self {
        let n = MAJ_STATES;
        let mut table = vec![Vec::new(); n * n * 2];
        for p in MajState::all() {
            for q in MajState::all() {
                for rel in Relation::ALL {
                    let slot = &mut table[Self::slot(p.encode(), q.encode(), rel)];
                    for rule in MAJORITY_RULES.filter(|&r| enabled(r)) {
                        if let Some((p2, q2)) = apply_rule(rule, p, q, rel) {
                            if (p2, q2) != (p, q) {
                                slot.push((p2.encode(), q2.encode()));
                            }
                        }
                    }
                    slot.sort();
                    slot.dedup();
                }
            }
        }
        MajorityDynamics { table }
    }

    fn slot(p: StateId, q: StateId, rel: Relation) -> usize {
        (p.index() * MAJ_STATES + q.index()) * 2 + (rel == Relation::Neq) as usize
    }
}

impl Dynamics for MajorityDynamics {
    fn num_states(&self) -> usize {
        MAJ_STATES
    }

    fn output(&self, q: StateId) -> bool {
        MajState::decode(q).output()
    }

    fn pair_successors(&self, p: StateId, q: StateId, rel: Relation) -> Vec<(StateId, StateId)> {
        self.table[Self::slot(p, q, rel)].clone()
    }

    fn state_label(&self, q: StateId) -> String {
        MajState::decode(q).to_string()
    }
}

/// Checks the two conservation laws every reachable multiset of majority
/// states obeys: #Y − #N = #grp − #¬grp, and among agents holding y, n, Ybar
/// or Nbar there are as many in the candidate group as outside it.
pub fn check_majority_invariants<I: IntoIterator<Item = StateId>>(states: I) -> Result<(), String> {
    let (mut yes_no, mut groups, mut engaged) = (0i64, 0i64, 0i64);
    for q in states {
        let s = MajState::decode(q);
        let side = if s.grp { 1 } else { -1 };
        match s.maj {
            Maj::Y => yes_no += 1,
            Maj::N => yes_no -= 1,
            _ => engaged += side,
        }
        groups += side;
    }
    if yes_no != groups {
        return Err(format!("#Y - #N = {yes_no} but #grp - #!grp = {groups}"));
    }
    if engaged != 0 {
        return Err(format!("engaged agents unbalanced by {engaged}"));
    }
    Ok(())
}

/// The majority protocol over the single-symbol alphabet {x}.
pub fn build_majority() -> Protocol {
    build_majority_with_rules(|_| true)
}

/// Majority protocol restricted to the rules accepted by `enabled`; used to
/// build deliberately broken variants.
pub fn build_majority_with_rules<F: Fn(u8) -> bool>(enabled: F) -> Protocol {
    Protocol::new(
        "majority",
        Arc::new(MajorityDynamics::with_rules(enabled)),
        vec!["x".to_string()],
        vec![MajState::INITIAL.encode()],
        Restriction::General,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_config, successors, Configuration, DatumId, InputMultiset};

    #[test]
    fn encoding_is_a_bijection() {
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..MAJ_STATES as u32 {
            let s = MajState::decode(StateId(i));
            assert_eq!(s.encode(), StateId(i));
            seen.insert(s.to_string());
        }
        assert_eq!(seen.len(), 48);
    }

    #[test]
    fn shape() {
        let p = build_majority();
        assert_eq!(p.num_states(), 48);
        assert_eq!(p.initial_states().len(), 1);
        assert_eq!(p.symbols(), &["x".to_string()]);
        let qi = MajState::decode(p.input_state(0).unwrap());
        assert_eq!(qi, MajState::INITIAL);
        assert!(qi.output());
        assert!(!p.check_immediate_observation());
        // No stored transition is an identity.
        assert!(p.transitions().iter().all(|t| !t.is_identity()));
    }

    #[test]
    fn only_rule_one_from_two_fresh_agents() {
        let p = build_majority();
        let m = InputMultiset::from_entries(1, [(DatumId(1), 0, 1), (DatumId(2), 0, 1)]);
        let c = init_config(&p, &m).unwrap();
        let next = successors(&p, &c);
        let paired = MajState {
            pair: true,
            even: true,
            ..MajState::INITIAL
        }
        .encode();
        let expected = Configuration::from_agents([(DatumId(1), paired), (DatumId(2), paired)]);
        assert_eq!(next.into_iter().collect::<Vec<_>>(), vec![expected]);
    }

    #[test]
    fn rule_guards() {
        let u = MajState::INITIAL;
        let paired_y = MajState { pair: true, ..u };
        assert!(apply_rule(1, u, u, Relation::Eq).is_none());
        let (_, q2) = apply_rule(2, u, paired_y, Relation::Neq).unwrap();
        assert_eq!((q2.grp, q2.maj), (false, Maj::N));
        assert!(apply_rule(2, u, paired_y, Relation::Eq).is_none());
        let (p2, q2) = apply_rule(
            11,
            u,
            MajState {
                maj: Maj::N,
                grp: false,
                ..u
            },
            Relation::Eq,
        )
        .unwrap();
        assert_eq!((p2.maj, q2.maj), (Maj::LowN, Maj::LowN));
        assert!(apply_rule(15, u, u, Relation::Eq).is_none());
    }
}
