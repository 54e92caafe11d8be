//! Domain types and execution semantics.
//!
//! A configuration maps each datum to its *form*, the multiset of states
//! held by the agents carrying that datum. Data are opaque integers that are
//! only ever compared for equality.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An element of the (infinite) data domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DatumId(pub u32);

/// Index into a protocol's state table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DatumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("symbol index {0} is not in the protocol alphabet")]
    UnknownSymbol(usize),
    #[error("population has {0} agents, at least 2 are required")]
    PopulationTooSmall(u64),
    #[error("transition is not enabled for the chosen data")]
    NotEnabled,
}

/// Datum comparison guard of a pair transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Eq,
    Neq,
}

impl Relation {
    pub const ALL: [Relation; 2] = [Relation::Eq, Relation::Neq];

    pub fn holds(self, d: DatumId, e: DatumId) -> bool {
        match self {
            Relation::Eq => d == e,
            Relation::Neq => d != e,
        }
    }

    pub fn of(d: DatumId, e: DatumId) -> Relation {
        if d == e {
            Relation::Eq
        } else {
            Relation::Neq
        }
    }
}

/// A multiset over states, stored sparsely: entries sorted by state with
/// strictly positive counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Form {
    entries: Vec<(StateId, u32)>,
}

impl Form {
    pub fn new() -> Self {
        Form { entries: Vec::new() }
    }

    /// Builds a form from (state, count) pairs; repeated states are summed
    /// and zero counts dropped.
    pub fn from_counts<I: IntoIterator<Item = (StateId, u32)>>(counts: I) -> Self {
        let mut f = Form::new();
        for (q, n) in counts {
            f.add(q, n);
        }
        f
    }

    pub fn singleton(q: StateId) -> Self {
        Form { entries: vec![(q, 1)] }
    }

    pub fn get(&self, q: StateId) -> u32 {
        match self.entries.binary_search_by_key(&q, |&(s, _)| s) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    pub fn add(&mut self, q: StateId, n: u32) {
        if n == 0 {
            return;
        }
        match self.entries.binary_search_by_key(&q, |&(s, _)| s) {
            Ok(i) => self.entries[i].1 += n,
            Err(i) => self.entries.insert(i, (q, n)),
        }
    }

    /// Removes `n` copies of `q`; returns false (leaving the form untouched)
    /// if fewer are present.
    pub fn remove(&mut self, q: StateId, n: u32) -> bool {
        match self.entries.binary_search_by_key(&q, |&(s, _)| s) {
            Ok(i) if self.entries[i].1 >= n => {
                self.entries[i].1 -= n;
                if self.entries[i].1 == 0 {
                    self.entries.remove(i);
                }
                true
            }
            Ok(_) => false,
            Err(_) => n == 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, n)| n as u64).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// f(Q') for a set of states.
    pub fn count_in(&self, qs: &BTreeSet<StateId>) -> u64 {
        self.entries
            .iter()
            .filter(|(q, _)| qs.contains(q))
            .map(|&(_, n)| n as u64)
            .sum()
    }

    /// Pointwise order on multisets.
    pub fn le(&self, other: &Form) -> bool {
        self.entries.iter().all(|&(q, n)| other.get(q) >= n)
    }

    pub fn plus(&self, other: &Form) -> Form {
        let mut out = self.clone();
        for &(q, n) in &other.entries {
            out.add(q, n);
        }
        out
    }

    /// Caps every count at `k`.
    pub fn truncate(&self, k: u32) -> Form {
        Form {
            entries: self
                .entries
                .iter()
                .map(|&(q, n)| (q, n.min(k)))
                .filter(|&(_, n)| n > 0)
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, u32)> + '_ {
        self.entries.iter().copied()
    }

    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.entries.iter().map(|&(q, _)| q)
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, (q, n)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            if n == 1 {
                write!(f, "{q}")?;
            } else {
                write!(f, "{q}x{n}")?;
            }
        }
        write!(f, ">")
    }
}

/// Finitely supported map from data to forms. Zero forms are never stored,
/// so the key set is exactly supp(C).
///
/// Arithmetic helpers may produce values with fewer than two agents; use
/// [`Configuration::population`] where the population bound matters.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    forms: BTreeMap<DatumId, Form>,
}

impl Configuration {
    pub fn new() -> Self {
        Configuration::default()
    }

    pub fn from_forms<I: IntoIterator<Item = (DatumId, Form)>>(forms: I) -> Self {
        let mut c = Configuration::new();
        for (d, f) in forms {
            c.add_form(d, &f);
        }
        c
    }

    /// Builds a configuration from (datum, state) agent pairs.
    pub fn from_agents<I: IntoIterator<Item = (DatumId, StateId)>>(agents: I) -> Self {
        let mut c = Configuration::new();
        for (d, q) in agents {
            c.add_agent(d, q);
        }
        c
    }

    /// Like [`Configuration::from_forms`] but rejects populations with fewer
    /// than two agents.
    pub fn population<I: IntoIterator<Item = (DatumId, Form)>>(forms: I) -> Result<Self, ModelError> {
        let c = Configuration::from_forms(forms);
        if c.size() < 2 {
            return Err(ModelError::PopulationTooSmall(c.size()));
        }
        Ok(c)
    }

    pub fn get(&self, d: DatumId, q: StateId) -> u32 {
        self.forms.get(&d).map_or(0, |f| f.get(q))
    }

    /// The form of `d`; the zero form if `d` is outside the support.
    pub fn form(&self, d: DatumId) -> Form {
        self.forms.get(&d).cloned().unwrap_or_default()
    }

    pub fn form_ref(&self, d: DatumId) -> Option<&Form> {
        self.forms.get(&d)
    }

    pub fn forms(&self) -> impl Iterator<Item = (DatumId, &Form)> + '_ {
        self.forms.iter().map(|(&d, f)| (d, f))
    }

    pub fn support(&self) -> impl Iterator<Item = DatumId> + '_ {
        self.forms.keys().copied()
    }

    pub fn support_len(&self) -> usize {
        self.forms.len()
    }

    pub fn contains_datum(&self, d: DatumId) -> bool {
        self.forms.contains_key(&d)
    }

    /// |C|, the number of agents.
    pub fn size(&self) -> u64 {
        self.forms.values().map(Form::total).sum()
    }

    /// C(d, Q').
    pub fn count(&self, d: DatumId, qs: &BTreeSet<StateId>) -> u64 {
        self.forms.get(&d).map_or(0, |f| f.count_in(qs))
    }

    /// card(Q', C) = sum over data of C(d, Q').
    pub fn card(&self, qs: &BTreeSet<StateId>) -> u64 {
        self.forms.values().map(|f| f.count_in(qs)).sum()
    }

    /// Counts agents whose state satisfies `pred`.
    pub fn card_where<F: Fn(StateId) -> bool>(&self, pred: F) -> u64 {
        self.forms
            .values()
            .flat_map(|f| f.iter())
            .filter(|&(q, _)| pred(q))
            .map(|(_, n)| n as u64)
            .sum()
    }

    pub fn active_states(&self) -> BTreeSet<StateId> {
        self.forms.values().flat_map(|f| f.support()).collect()
    }

    pub fn add_agent(&mut self, d: DatumId, q: StateId) {
        self.forms.entry(d).or_default().add(q, 1);
    }

    /// Removes one agent; false if absent.
    pub fn remove_agent(&mut self, d: DatumId, q: StateId) -> bool {
        let Some(f) = self.forms.get_mut(&d) else {
            return false;
        };
        if !f.remove(q, 1) {
            return false;
        }
        if f.is_zero() {
            self.forms.remove(&d);
        }
        true
    }

    pub fn add_form(&mut self, d: DatumId, f: &Form) {
        if f.is_zero() {
            return;
        }
        let slot = self.forms.entry(d).or_default();
        *slot = slot.plus(f);
    }

    pub fn plus(&self, other: &Configuration) -> Configuration {
        let mut out = self.clone();
        for (d, f) in other.forms() {
            out.add_form(d, f);
        }
        out
    }

    /// C - C', defined when C' <= C.
    pub fn minus(&self, other: &Configuration) -> Option<Configuration> {
        let mut out = self.clone();
        for (d, f) in other.forms() {
            for (q, n) in f.iter() {
                let slot = out.forms.get_mut(&d)?;
                if !slot.remove(q, n) {
                    return None;
                }
                if slot.is_zero() {
                    out.forms.remove(&d);
                }
            }
        }
        Some(out)
    }

    /// Pointwise order C <= C'.
    pub fn le(&self, other: &Configuration) -> bool {
        self.forms.iter().all(|(d, f)| match other.forms.get(d) {
            Some(g) => f.le(g),
            None => f.is_zero(),
        })
    }

    /// Smallest datum id strictly above every datum in the support.
    pub fn fresh_datum(&self) -> DatumId {
        self.forms.keys().next_back().map_or(DatumId(0), |d| DatumId(d.0 + 1))
    }

    /// Per-datum agent totals.
    pub fn datum_totals(&self) -> BTreeMap<DatumId, u64> {
        self.forms.iter().map(|(&d, f)| (d, f.total())).collect()
    }

    /// Agents as (datum, state) pairs in ascending order, with repetition.
    pub fn agents(&self) -> Vec<(DatumId, StateId)> {
        let mut out = Vec::with_capacity(self.size() as usize);
        for (&d, f) in &self.forms {
            for (q, n) in f.iter() {
                for _ in 0..n {
                    out.push((d, q));
                }
            }
        }
        out
    }

    /// Renames data through `map`; data missing from the map keep their id.
    pub fn rename(&self, map: &BTreeMap<DatumId, DatumId>) -> Configuration {
        Configuration::from_forms(self.forms.iter().map(|(d, f)| (*map.get(d).unwrap_or(d), f.clone())))
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (d, form)) in self.forms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}: {form}")?;
        }
        write!(f, "}}")
    }
}

/// A pair transition ((p,q), ~, (p', q')) or a unary (mirror) transition
/// q -> q'.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Transition {
    Pair {
        p: StateId,
        q: StateId,
        rel: Relation,
        p2: StateId,
        q2: StateId,
    },
    Unary {
        q: StateId,
        q2: StateId,
    },
}

impl Transition {
    pub fn is_identity(&self) -> bool {
        match *self {
            Transition::Pair { p, q, p2, q2, .. } => p == p2 && q == q2,
            Transition::Unary { q, q2 } => q == q2,
        }
    }
}

/// Whether every pair transition leaves the observed agent unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Restriction {
    General,
    ImmediateObservation,
}

/// The transition relation and output map of a protocol, queried lazily.
///
/// Implementations never report identity transitions; those are implicitly
/// present in every protocol.
pub trait Dynamics: Send + Sync {
    fn num_states(&self) -> usize;

    fn output(&self, q: StateId) -> bool;

    /// All (p', q') with ((p,q), rel, (p',q')) a stored transition, sorted and
    /// deduplicated.
    fn pair_successors(&self, p: StateId, q: StateId, rel: Relation) -> Vec<(StateId, StateId)>;

    /// All q' with q -> q' a stored unary transition, sorted and deduplicated.
    fn unary_successors(&self, _q: StateId) -> Vec<StateId> {
        Vec::new()
    }

    fn state_label(&self, q: StateId) -> String {
        q.to_string()
    }

    /// Representative of `q` with fields that can never be read again reset
    /// to a fixed value. Must commute with the transition relation and keep
    /// the output; the verifier explores configurations modulo this map.
    fn normalize(&self, q: StateId) -> StateId {
        q
    }

    /// Number of write-only output registers (0 if unsupported). With
    /// registers, the output of a state is a function of its register values,
    /// no guard reads a register, and registers change only through writes:
    /// an agent in state q with (r, b) in `register_writes(q)` can set
    /// register r of every agent, itself included, to b by a transition that
    /// changes nothing else.
    fn num_registers(&self) -> usize {
        0
    }

    /// `q` with all registers reset to fixed values (after [`Self::normalize`]).
    fn erase_registers(&self, q: StateId) -> StateId {
        q
    }

    /// The (register, value) writes an agent in state `q` can perform.
    fn register_writes(&self, _q: StateId) -> Vec<(usize, bool)> {
        Vec::new()
    }

    /// Output of an agent whose registers hold `values`.
    fn output_from_registers(&self, _values: &[bool]) -> bool {
        unreachable!("protocol has no output registers")
    }

    /// For an interleaving product of independent protocols: the factors, in
    /// register order. `None` for anything else.
    fn factors(&self) -> Option<Vec<Arc<dyn Dynamics>>> {
        None
    }

    /// The factor states of a product state, in the order of [`Self::factors`].
    fn factor_states(&self, _q: StateId) -> Option<Vec<StateId>> {
        None
    }
}

/// A population protocol with unordered data: states, transitions, input
/// mapping and output map.
#[derive(Clone)]
pub struct Protocol {
    pub name: String,
    dynamics: Arc<dyn Dynamics>,
    symbols: Vec<String>,
    input_map: Vec<StateId>,
    restriction: Restriction,
}

impl fmt::Debug for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Protocol")
            .field("name", &self.name)
            .field("states", &self.num_states())
            .field("symbols", &self.symbols)
            .field("restriction", &self.restriction)
            .finish()
    }
}

impl Protocol {
    /// `input_map[i]` is the initial state of symbol `symbols[i]`; it must be
    /// injective.
    pub fn new(
        name: impl Into<String>,
        dynamics: Arc<dyn Dynamics>,
        symbols: Vec<String>,
        input_map: Vec<StateId>,
        restriction: Restriction,
    ) -> Self {
        assert_eq!(symbols.len(), input_map.len(), "one initial state per symbol");
        let distinct: BTreeSet<_> = input_map.iter().collect();
        assert_eq!(distinct.len(), input_map.len(), "input mapping must be injective");
        assert!(input_map.iter().all(|q| q.index() < dynamics.num_states()));
        Protocol {
            name: name.into(),
            dynamics,
            symbols,
            input_map,
            restriction,
        }
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    pub fn num_states(&self) -> usize {
        self.dynamics.num_states()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol_index(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == name)
    }

    /// ι(σ) for the symbol at `index`.
    pub fn input_state(&self, symbol: usize) -> Option<StateId> {
        self.input_map.get(symbol).copied()
    }

    pub fn input_map(&self) -> &[StateId] {
        &self.input_map
    }

    /// ι⁻¹ on initial states.
    pub fn symbol_of(&self, q: StateId) -> Option<usize> {
        self.input_map.iter().position(|&s| s == q)
    }

    /// The set I of initial states.
    pub fn initial_states(&self) -> BTreeSet<StateId> {
        self.input_map.iter().copied().collect()
    }

    pub fn restriction(&self) -> Restriction {
        self.restriction
    }

    pub fn is_immediate_observation(&self) -> bool {
        self.restriction == Restriction::ImmediateObservation
    }

    pub fn state_output(&self, q: StateId) -> bool {
        self.dynamics.output(q)
    }

    pub fn state_label(&self, q: StateId) -> String {
        self.dynamics.state_label(q)
    }

    pub fn pair_successors(&self, p: StateId, q: StateId, rel: Relation) -> Vec<(StateId, StateId)> {
        self.dynamics.pair_successors(p, q, rel)
    }

    pub fn unary_successors(&self, q: StateId) -> Vec<StateId> {
        self.dynamics.unary_successors(q)
    }

    pub fn normalize_state(&self, q: StateId) -> StateId {
        self.dynamics.normalize(q)
    }

    /// Applies [`Dynamics::normalize`] to every agent.
    pub fn normalize(&self, c: &Configuration) -> Configuration {
        Configuration::from_agents(c.agents().into_iter().map(|(d, q)| (d, self.normalize_state(q))))
    }

    pub fn num_registers(&self) -> usize {
        self.dynamics.num_registers()
    }

    /// Normalizes every agent and erases its output registers.
    pub fn erase_registers(&self, c: &Configuration) -> Configuration {
        Configuration::from_agents(
            c.agents()
                .into_iter()
                .map(|(d, q)| (d, self.dynamics.erase_registers(self.normalize_state(q)))),
        )
    }

    /// Stored pair transitions whose pre-states are (p, q).
    pub fn transitions_from(&self, p: StateId, q: StateId) -> Vec<Transition> {
        let mut out = Vec::new();
        for rel in Relation::ALL {
            for (p2, q2) in self.pair_successors(p, q, rel) {
                out.push(Transition::Pair { p, q, rel, p2, q2 });
            }
        }
        out
    }

    /// Enumerates the whole stored transition set. Quadratic in |Q|, meant for
    /// small protocols and structural checks.
    pub fn transitions(&self) -> Vec<Transition> {
        let n = self.num_states() as u32;
        let mut out = Vec::new();
        for p in 0..n {
            for q in 0..n {
                out.extend(self.transitions_from(StateId(p), StateId(q)));
            }
        }
        for q in 0..n {
            for q2 in self.unary_successors(StateId(q)) {
                out.push(Transition::Unary { q: StateId(q), q2 });
            }
        }
        out
    }

    /// Scans the transition set for pair transitions that update the
    /// observed agent.
    pub fn check_immediate_observation(&self) -> bool {
        self.transitions().iter().all(|t| match *t {
            Transition::Pair { p, p2, .. } => p == p2,
            Transition::Unary { .. } => true,
        })
    }

    pub(crate) fn with_dynamics(
        &self,
        name: String,
        dynamics: Arc<dyn Dynamics>,
        input_map: Vec<StateId>,
        restriction: Restriction,
    ) -> Protocol {
        Protocol::new(name, dynamics, self.symbols.clone(), input_map, restriction)
    }
}

/// Consensus value of a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    False,
    True,
    Bottom,
}

impl Output {
    pub fn from_bool(b: bool) -> Output {
        if b {
            Output::True
        } else {
            Output::False
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Output::False => Some(false),
            Output::True => Some(true),
            Output::Bottom => None,
        }
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Output::False => "false",
            Output::True => "true",
            Output::Bottom => "bottom",
        })
    }
}

/// An input M: counts per (datum, symbol index), over an alphabet of
/// `alphabet_size` symbols.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputMultiset {
    alphabet_size: usize,
    entries: BTreeMap<(DatumId, usize), u32>,
}

impl InputMultiset {
    pub fn new(alphabet_size: usize) -> Self {
        InputMultiset {
            alphabet_size,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries<I: IntoIterator<Item = (DatumId, usize, u32)>>(alphabet_size: usize, entries: I) -> Self {
        let mut m = InputMultiset::new(alphabet_size);
        for (d, s, n) in entries {
            m.add(d, s, n);
        }
        m
    }

    pub fn add(&mut self, d: DatumId, symbol: usize, n: u32) {
        if n > 0 {
            *self.entries.entry((d, symbol)).or_insert(0) += n;
        }
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn get(&self, d: DatumId, symbol: usize) -> u32 {
        self.entries.get(&(d, symbol)).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (DatumId, usize, u32)> + '_ {
        self.entries.iter().map(|(&(d, s), &n)| (d, s, n))
    }

    pub fn total(&self) -> u64 {
        self.entries.values().map(|&n| n as u64).sum()
    }

    pub fn data(&self) -> BTreeSet<DatumId> {
        self.entries.keys().map(|&(d, _)| d).collect()
    }

    /// Per-symbol counts of datum `d`.
    pub fn counts_of(&self, d: DatumId) -> Vec<u32> {
        (0..self.alphabet_size).map(|s| self.get(d, s)).collect()
    }

    /// Rejects inputs with fewer than two agents.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.total() < 2 {
            return Err(ModelError::PopulationTooSmall(self.total()));
        }
        Ok(())
    }
}

/// ι(M): one agent in state ι(σ) with datum d per unit of M(d, σ).
pub fn init_config(p: &Protocol, m: &InputMultiset) -> Result<Configuration, ModelError> {
    let mut c = Configuration::new();
    for (d, s, n) in m.entries() {
        let q = p.input_state(s).ok_or(ModelError::UnknownSymbol(s))?;
        c.add_form(d, &Form::from_counts([(q, n)]));
    }
    if c.size() < 2 {
        return Err(ModelError::PopulationTooSmall(c.size()));
    }
    Ok(c)
}

/// ι⁻¹ on an initial configuration; `None` if some active state is not
/// initial.
pub fn input_of(p: &Protocol, c: &Configuration) -> Option<InputMultiset> {
    let mut m = InputMultiset::new(p.symbols().len());
    for (d, f) in c.forms() {
        for (q, n) in f.iter() {
            m.add(d, p.symbol_of(q)?, n);
        }
    }
    Some(m)
}

/// All datum pairs (d, e) for which `t` is enabled in `c`.
pub fn enabled(c: &Configuration, t: &Transition) -> Vec<(DatumId, DatumId)> {
    let mut out = Vec::new();
    match *t {
        Transition::Pair { p, q, rel, .. } => {
            for (d, fd) in c.forms() {
                if fd.get(p) == 0 {
                    continue;
                }
                for (e, fe) in c.forms() {
                    if !rel.holds(d, e) {
                        continue;
                    }
                    let need = if d == e && p == q { 2 } else { 1 };
                    if fe.get(q) >= need {
                        out.push((d, e));
                    }
                }
            }
        }
        Transition::Unary { q, .. } => {
            for (d, f) in c.forms() {
                if f.get(q) >= 1 {
                    out.push((d, d));
                }
            }
        }
    }
    out
}

/// C →t C′ with the first agent carrying `d` and the second `e`.
pub fn apply(c: &Configuration, t: &Transition, d: DatumId, e: DatumId) -> Result<Configuration, ModelError> {
    match *t {
        Transition::Pair { p, q, rel, p2, q2 } => {
            if !rel.holds(d, e) {
                return Err(ModelError::NotEnabled);
            }
            Ok(apply_pair_unchecked(c, d, p, p2, e, q, q2).ok_or(ModelError::NotEnabled)?)
        }
        Transition::Unary { q, q2 } => {
            if d != e {
                return Err(ModelError::NotEnabled);
            }
            let mut out = c.clone();
            if !out.remove_agent(d, q) {
                return Err(ModelError::NotEnabled);
            }
            out.add_agent(d, q2);
            Ok(out)
        }
    }
}

fn apply_pair_unchecked(
    c: &Configuration,
    d: DatumId,
    p: StateId,
    p2: StateId,
    e: DatumId,
    q: StateId,
    q2: StateId,
) -> Option<Configuration> {
    let mut out = c.clone();
    if !out.remove_agent(d, p) || !out.remove_agent(e, q) {
        return None;
    }
    out.add_agent(d, p2);
    out.add_agent(e, q2);
    Some(out)
}

/// One scheduler-visible step: the transition together with the data of the
/// two (or, for unary steps, one) participating agents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub transition: Transition,
    pub d: DatumId,
    pub e: DatumId,
}

/// Calls `visit` for every non-identity step enabled in `c`, together with
/// the resulting configuration.
pub fn for_each_step<F: FnMut(Step, Configuration)>(p: &Protocol, c: &Configuration, mut visit: F) {
    let slots: Vec<(DatumId, StateId, u32)> = c
        .forms()
        .flat_map(|(d, f)| f.iter().map(move |(q, n)| (d, q, n)))
        .collect();
    for (i, &(d, ps, np)) in slots.iter().enumerate() {
        for (j, &(e, qs, _)) in slots.iter().enumerate() {
            if i == j && np < 2 {
                continue;
            }
            let rel = Relation::of(d, e);
            for (p2, q2) in p.pair_successors(ps, qs, rel) {
                let next = apply_pair_unchecked(c, d, ps, p2, e, qs, q2).expect("slot availability checked above");
                let transition = Transition::Pair {
                    p: ps,
                    q: qs,
                    rel,
                    p2,
                    q2,
                };
                visit(Step { transition, d, e }, next);
            }
        }
        for q2 in p.unary_successors(ps) {
            let mut next = c.clone();
            next.remove_agent(d, ps);
            next.add_agent(d, q2);
            visit(
                Step {
                    transition: Transition::Unary { q: ps, q2 },
                    d,
                    e: d,
                },
                next,
            );
        }
    }
}

/// {C′ : C → C′} over stored (non-identity) transitions.
pub fn successors(p: &Protocol, c: &Configuration) -> BTreeSet<Configuration> {
    let mut out = BTreeSet::new();
    for_each_step(p, c, |_, next| {
        out.insert(next);
    });
    out
}

/// O(C): the common output of all active states, or Bottom.
pub fn output(p: &Protocol, c: &Configuration) -> Output {
    let mut seen: Option<bool> = None;
    for q in c.forms().flat_map(|(_, f)| f.support()) {
        let b = p.state_output(q);
        match seen {
            None => seen = Some(b),
            Some(prev) if prev != b => return Output::Bottom,
            _ => {}
        }
    }
    match seen {
        Some(b) => Output::from_bool(b),
        // Empty configurations only arise from arithmetic helpers.
        None => Output::Bottom,
    }
}

/// C(d, Q′).
pub fn counts(c: &Configuration, d: DatumId, qs: &BTreeSet<StateId>) -> u64 {
    c.count(d, qs)
}

/// card(Q′, C).
pub fn card(c: &Configuration, qs: &BTreeSet<StateId>) -> u64 {
    c.card(qs)
}

/// A protocol given by an explicit transition table.
pub struct TableDynamics {
    labels: Vec<String>,
    outputs: Vec<bool>,
    pairs: BTreeMap<(StateId, StateId, Relation), Vec<(StateId, StateId)>>,
    unary: BTreeMap<StateId, Vec<StateId>>,
}

impl TableDynamics {
    /// Identity transitions in `transitions` are dropped.
    pub fn new(labels: Vec<String>, outputs: Vec<bool>, transitions: &[Transition]) -> Self {
        assert_eq!(labels.len(), outputs.len());
        let mut pairs: BTreeMap<_, Vec<_>> = BTreeMap::new();
        let mut unary: BTreeMap<_, Vec<_>> = BTreeMap::new();
        for t in transitions.iter().filter(|t| !t.is_identity()) {
            match *t {
                Transition::Pair { p, q, rel, p2, q2 } => pairs.entry((p, q, rel)).or_default().push((p2, q2)),
                Transition::Unary { q, q2 } => unary.entry(q).or_default().push(q2),
            }
        }
        for v in pairs.values_mut() {
            v.sort();
            v.dedup();
        }
        for v in unary.values_mut() {
            v.sort();
            v.dedup();
        }
        TableDynamics {
            labels,
            outputs,
            pairs,
            unary,
        }
    }
}

impl Dynamics for TableDynamics {
    fn num_states(&self) -> usize {
        self.labels.len()
    }

    fn output(&self, q: StateId) -> bool {
        self.outputs[q.index()]
    }

    fn pair_successors(&self, p: StateId, q: StateId, rel: Relation) -> Vec<(StateId, StateId)> {
        self.pairs.get(&(p, q, rel)).cloned().unwrap_or_default()
    }

    fn unary_successors(&self, q: StateId) -> Vec<StateId> {
        self.unary.get(&q).cloned().unwrap_or_default()
    }

    fn state_label(&self, q: StateId) -> String {
        self.labels[q.index()].clone()
    }
}

/// Convenience constructor for table protocols.
pub fn table_protocol(
    name: &str,
    labels: &[&str],
    outputs: &[bool],
    transitions: &[Transition],
    symbols: &[&str],
    input_map: &[StateId],
) -> Protocol {
    let dynamics = TableDynamics::new(
        labels.iter().map(|s| s.to_string()).collect(),
        outputs.to_vec(),
        transitions,
    );
    let io = transitions.iter().all(|t| match *t {
        Transition::Pair { p, p2, .. } => p == p2,
        Transition::Unary { .. } => true,
    });
    Protocol::new(
        name,
        Arc::new(dynamics),
        symbols.iter().map(|s| s.to_string()).collect(),
        input_map.to_vec(),
        if io {
            Restriction::ImmediateObservation
        } else {
            Restriction::General
        },
    )
}
