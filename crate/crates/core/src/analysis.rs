//! Exact verification over reachability graphs of canonical configurations.
//!
//! A fair execution eventually stays in one bottom strongly connected
//! component of the (finite) reachability graph and visits all of it
//! infinitely often. A protocol therefore computes the right value from C₀
//! iff every bottom SCC reachable from C₀ has uniform output φ(ι⁻¹(C₀)).
//! Configurations are explored up to datum renaming, which is sound because
//! transition guards only compare data for (in)equality.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use indexmap::IndexSet;
use rayon::prelude::*;
use rustc_hash::FxBuildHasher;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    for_each_step, input_of, output, successors, Configuration, DatumId, Form, InputMultiset, ModelError, Output,
    Protocol,
};
use crate::order::{canonical, embeds, CanonicalKey};
use crate::predicates::{eval_expr, PredicateError, PredicateExpr};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("search exceeded the budget of {cap} configurations")]
    CapExceeded { cap: usize },
    #[error("graph is incomplete")]
    IncompleteGraph,
    #[error("configuration is not initial for this protocol")]
    NotInitial,
    #[error("protocol is not immediate-observation")]
    NotImmediateObservation,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type KeySet = IndexSet<CanonicalKey, FxBuildHasher>;

/// What a graph node stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum View {
    /// Configurations up to renaming and [`Protocol::normalize`].
    Full,
    /// As `Full`, with output registers erased.
    Core,
}

/// Key of `c` in the given view.
pub fn view_key(p: &Protocol, c: &Configuration, view: View) -> CanonicalKey {
    match view {
        View::Full => canonical(&p.normalize(c)),
        View::Core => canonical(&p.erase_registers(c)),
    }
}

/// Reachability graph quotiented by ≡. Node 0 is the start configuration and
/// nodes are numbered in BFS order.
#[derive(Clone, Debug)]
pub struct ReachGraph {
    nodes: KeySet,
    /// Sorted successor ids, self-loops omitted.
    pub edges: Vec<Vec<u32>>,
    /// BFS tree parent of every node but the root.
    pub parent: Vec<Option<u32>>,
    pub outputs: Vec<Output>,
    /// SCC id of each node. Ids follow Tarjan completion order, so successors
    /// of an SCC always have smaller ids.
    pub scc_of: Vec<u32>,
    pub sccs: Vec<Vec<u32>>,
    pub bottom: Vec<bool>,
    pub complete: bool,
    pub cap: usize,
    pub view: View,
    /// Core view only: bit 2r is set if some agent can write false into
    /// register r, bit 2r + 1 for true.
    pub writes: Vec<u64>,
}

impl ReachGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn key(&self, node: u32) -> &CanonicalKey {
        self.nodes.get_index(node as usize).expect("node id in range")
    }

    pub fn keys(&self) -> impl Iterator<Item = &CanonicalKey> {
        self.nodes.iter()
    }

    pub fn node_of(&self, key: &CanonicalKey) -> Option<u32> {
        self.nodes.get_index_of(key).map(|i| i as u32)
    }

    /// Root-to-node path of canonical keys along BFS parents.
    pub fn path_to(&self, node: u32) -> Vec<CanonicalKey> {
        let mut path = vec![self.key(node).clone()];
        let mut cur = node;
        while let Some(prev) = self.parent[cur as usize] {
            path.push(self.key(prev).clone());
            cur = prev;
        }
        path.reverse();
        path
    }

    pub fn bottom_sccs(&self) -> impl Iterator<Item = &Vec<u32>> {
        self.sccs
            .iter()
            .enumerate()
            .filter(|(i, _)| self.bottom[*i])
            .map(|(_, s)| s)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }
}

fn successor_keys(p: &Protocol, key: &CanonicalKey, view: View) -> Vec<CanonicalKey> {
    let c = key.representative();
    let mut out = Vec::new();
    for_each_step(p, &c, |_, next| out.push(view_key(p, &next, view)));
    out.sort();
    out.dedup();
    out
}

/// Breadth-first exploration of the configurations reachable from `c0`, up to
/// ≡. Stops with `complete = false` once more than `cap` nodes are found.
pub fn explore(p: &Protocol, c0: &Configuration, cap: usize) -> ReachGraph {
    explore_view(p, c0, cap, View::Full)
}

pub fn explore_view(p: &Protocol, c0: &Configuration, cap: usize, view: View) -> ReachGraph {
    let mut nodes = KeySet::default();
    nodes.insert(view_key(p, c0, view));
    let mut edges: Vec<Vec<u32>> = Vec::new();
    let mut parent = vec![None];
    let mut complete = true;
    let mut layer_start = 0;
    'layers: while layer_start < nodes.len() {
        let layer_end = nodes.len();
        let expanded: Vec<Vec<CanonicalKey>> = (layer_start..layer_end)
            .into_par_iter()
            .map(|i| successor_keys(p, nodes.get_index(i).unwrap(), view))
            .collect();
        for (offset, succ) in expanded.into_iter().enumerate() {
            let from = (layer_start + offset) as u32;
            let mut ids = Vec::with_capacity(succ.len());
            for key in succ {
                let (id, fresh) = nodes.insert_full(key);
                if fresh {
                    if nodes.len() > cap {
                        nodes.pop();
                        complete = false;
                        edges.push(Vec::new());
                        break 'layers;
                    }
                    parent.push(Some(from));
                }
                if id as u32 != from {
                    ids.push(id as u32);
                }
            }
            ids.sort_unstable();
            ids.dedup();
            edges.push(ids);
        }
        layer_start = layer_end;
    }
    edges.resize(nodes.len(), Vec::new());
    let outputs = nodes.iter().map(|k| output(p, &k.representative())).collect();
    let writes = match view {
        View::Full => Vec::new(),
        View::Core => nodes
            .iter()
            .map(|k| {
                k.forms()
                    .iter()
                    .flat_map(|(f, _)| f.support().collect::<Vec<_>>())
                    .flat_map(|q| p.dynamics().register_writes(q))
                    .fold(0u64, |m, (r, b)| m | 1 << (2 * r + b as usize))
            })
            .collect(),
    };
    let (scc_of, sccs) = tarjan(&edges);
    let mut bottom = vec![true; sccs.len()];
    for (u, succ) in edges.iter().enumerate() {
        if succ.iter().any(|&v| scc_of[v as usize] != scc_of[u]) {
            bottom[scc_of[u] as usize] = false;
        }
    }
    if !complete {
        // Unexpanded nodes have unknown successors.
        bottom.iter_mut().for_each(|b| *b = false);
    }
    ReachGraph {
        nodes,
        edges,
        parent,
        outputs,
        scc_of,
        sccs,
        bottom,
        complete,
        cap,
        view,
        writes,
    }
}

/// Iterative Tarjan. Returns the SCC id of every node and the members of
/// every SCC, in completion order.
pub fn tarjan(edges: &[Vec<u32>]) -> (Vec<u32>, Vec<Vec<u32>>) {
    const UNSEEN: u32 = u32::MAX;
    let n = edges.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut scc_of = vec![UNSEEN; n];
    let mut sccs: Vec<Vec<u32>> = Vec::new();
    let mut counter = 0u32;
    let mut call: Vec<(u32, usize)> = Vec::new();
    for root in 0..n as u32 {
        if index[root as usize] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root as usize] = counter;
        low[root as usize] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            let vi = v as usize;
            if let Some(&w) = edges[vi].get(*next) {
                *next += 1;
                let wi = w as usize;
                if index[wi] == UNSEEN {
                    index[wi] = counter;
                    low[wi] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[wi] = true;
                    call.push((w, 0));
                } else if on_stack[wi] {
                    low[vi] = low[vi].min(index[wi]);
                }
                continue;
            }
            call.pop();
            if let Some(&(u, _)) = call.last() {
                low[u as usize] = low[u as usize].min(low[vi]);
            }
            if low[vi] == index[vi] {
                let id = sccs.len() as u32;
                let mut members = Vec::new();
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w as usize] = false;
                    scc_of[w as usize] = id;
                    members.push(w);
                    if w == v {
                        break;
                    }
                }
                members.sort_unstable();
                sccs.push(members);
            }
        }
    }
    (scc_of, sccs)
}

/// A path of canonical configurations from the start node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub path: Vec<CanonicalKey>,
    /// Outputs found in the bottom SCC the path ends in.
    pub bscc_outputs: Vec<Output>,
    pub bscc_size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status")]
pub enum Verdict {
    ComputesCorrectly {
        consensus: bool,
    },
    /// A bottom SCC agrees on the wrong value.
    WrongConsensus {
        expected: bool,
        witness: Witness,
    },
    /// A bottom SCC mixes outputs or contains ⊥.
    NoConsensus {
        expected: bool,
        witness: Witness,
    },
    Exhausted {
        cap: usize,
    },
}

impl Verdict {
    pub fn is_correct(&self) -> bool {
        matches!(self, Verdict::ComputesCorrectly { .. })
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Verdict::WrongConsensus { .. } | Verdict::NoConsensus { .. })
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::WrongConsensus { witness, .. } | Verdict::NoConsensus { witness, .. } => Some(witness),
            _ => None,
        }
    }
}

fn outputs_in(mask: u8) -> Vec<Output> {
    [Output::False, Output::True, Output::Bottom]
        .into_iter()
        .filter(|&o| mask & output_bit(o) != 0)
        .collect()
}

/// Outputs an agent can show given the writable values of each register,
/// or `None` if some register has no writer.
fn register_outputs(p: &Protocol, mask: u64) -> Option<u8> {
    let k = p.num_registers();
    let choices: Vec<Vec<bool>> = (0..k)
        .map(|r| {
            [false, true]
                .into_iter()
                .filter(|&b| mask >> (2 * r + b as usize) & 1 == 1)
                .collect()
        })
        .collect();
    if choices.iter().any(Vec::is_empty) {
        return None;
    }
    let mut outs = 0u8;
    let mut values = vec![false; k];
    fn go(p: &Protocol, r: usize, choices: &[Vec<bool>], values: &mut Vec<bool>, outs: &mut u8) {
        if r == choices.len() {
            *outs |= output_bit(Output::from_bool(p.dynamics().output_from_registers(values)));
            return;
        }
        for &b in &choices[r] {
            values[r] = b;
            go(p, r + 1, choices, values, outs);
        }
    }
    go(p, 0, &choices, &mut values, &mut outs);
    Some(outs)
}

/// Verdict from a complete core-view graph, or `None` when some bottom SCC
/// lacks a writer for some register (registers are then frozen and the core
/// view does not decide the outcome).
///
/// Every bottom SCC of the full graph lies over a bottom SCC B of the core
/// graph and visits all of it. Each register of each agent there ranges over
/// exactly the values written within B, independently of the others, so the
/// outcome is uniform b iff every combination of those values yields b.
pub fn core_verdict(p: &Protocol, g: &ReachGraph, expected: bool) -> Option<Verdict> {
    assert_eq!(g.view, View::Core);
    if !g.complete {
        return Some(Verdict::Exhausted { cap: g.cap });
    }
    let want = output_bit(Output::from_bool(expected));
    let mut bsccs: Vec<&Vec<u32>> = g.bottom_sccs().collect();
    bsccs.sort_by_key(|s| s[0]);
    let mut first_violation = None;
    for members in bsccs {
        let mask = members.iter().fold(0, |m, &v| m | g.writes[v as usize]);
        let outs = register_outputs(p, mask)?;
        if outs != want && first_violation.is_none() {
            // Every member reaches the whole SCC; take the closest one.
            let witness = Witness {
                path: g.path_to(members[0]),
                bscc_size: members.len(),
                bscc_outputs: outputs_in(outs),
            };
            first_violation = Some(if outs & want == 0 {
                Verdict::WrongConsensus { expected, witness }
            } else {
                Verdict::NoConsensus { expected, witness }
            });
        }
    }
    Some(first_violation.unwrap_or(Verdict::ComputesCorrectly { consensus: expected }))
}

/// Register-write masks of the bottom SCCs of a complete core-view graph.
fn bscc_masks(g: &ReachGraph) -> Vec<u64> {
    let mut masks: Vec<u64> = g
        .bottom_sccs()
        .map(|members| members.iter().fold(0, |m, &v| m | g.writes[v as usize]))
        .collect();
    masks.sort_unstable();
    masks.dedup();
    masks
}

/// The factor protocols of an interleaving product, with their start
/// configurations.
fn factor_instances(p: &Protocol, c0: &Configuration) -> Option<Vec<(Protocol, Configuration)>> {
    let dynamics = p.dynamics();
    let factors = dynamics.factors()?;
    let split = |q| dynamics.factor_states(q).expect("product state");
    let mut out = Vec::new();
    for (i, f) in factors.into_iter().enumerate() {
        let input_map: Vec<_> = p.input_map().iter().map(|&q| split(q)[i]).collect();
        let distinct: std::collections::BTreeSet<_> = input_map.iter().collect();
        if distinct.len() != input_map.len() {
            return None;
        }
        let fp = Protocol::new(
            format!("{}[{i}]", p.name),
            f,
            p.symbols().to_vec(),
            input_map,
            p.restriction(),
        );
        let c = Configuration::from_agents(c0.agents().into_iter().map(|(d, q)| (d, split(q)[i])));
        out.push((fp, c));
    }
    Some(out)
}

/// Decides a product of independent protocols from its factors.
///
/// With agents labelled, the product graph is the Cartesian product of the
/// factor graphs, so its bottom SCCs are exactly the products of factor
/// bottom SCCs and every combination of factor register values is reachable
/// for every agent. `None` if some factor lacks registers or some bottom SCC
/// lacks a writer. A violation is re-derived on the product itself to obtain
/// a witness path.
fn decide_factored(p: &Protocol, c0: &Configuration, expected: bool, cap: usize) -> Option<(Verdict, usize)> {
    let instances = factor_instances(p, c0)?;
    if instances.iter().any(|(f, _)| f.num_registers() == 0) {
        return None;
    }
    let mut nodes = 0;
    let mut choices: Vec<Vec<u64>> = Vec::new();
    let mut shift = 0;
    for (f, c) in &instances {
        let g = explore_view(f, c, cap, View::Core);
        nodes += g.len();
        if !g.complete {
            return Some((Verdict::Exhausted { cap }, nodes));
        }
        choices.push(bscc_masks(&g).into_iter().map(|m| m << (2 * shift)).collect());
        shift += f.num_registers();
    }
    let want = output_bit(Output::from_bool(expected));
    let mut combined = vec![0u64];
    for masks in &choices {
        combined = combined
            .iter()
            .flat_map(|&a| masks.iter().map(move |&b| a | b))
            .collect();
    }
    let mut violation = None;
    for mask in combined {
        let outs = register_outputs(p, mask)?;
        if outs != want {
            violation = Some(outs);
        }
    }
    let Some(outs) = violation else {
        return Some((Verdict::ComputesCorrectly { consensus: expected }, nodes));
    };
    let g = explore_view(p, c0, cap, View::Core);
    if let Some(v) = core_verdict(p, &g, expected).filter(Verdict::is_failure) {
        return Some((v, nodes + g.len()));
    }
    // The product is too large for a path; report the start configuration.
    let witness = Witness {
        path: vec![view_key(p, c0, View::Core)],
        bscc_outputs: outputs_in(outs),
        bscc_size: 0,
    };
    let v = if outs & want == 0 {
        Verdict::WrongConsensus { expected, witness }
    } else {
        Verdict::NoConsensus { expected, witness }
    };
    Some((v, nodes + g.len()))
}

/// Verdict for `c0`. Products of independent protocols are decided from their
/// factors, protocols with output registers from the core view, and anything
/// else from the full view. Returns the verdict and the number of nodes
/// explored.
pub fn decide(p: &Protocol, c0: &Configuration, expected: bool, cap: usize) -> (Verdict, usize) {
    if let Some(result) = decide_factored(p, c0, expected, cap) {
        return result;
    }
    if p.num_registers() > 0 {
        let g = explore_view(p, c0, cap, View::Core);
        if let Some(v) = core_verdict(p, &g, expected) {
            return (v, g.len());
        }
    }
    let g = explore(p, c0, cap);
    (verdict_of(&g, expected), g.len())
}

/// Decides from a complete full-view graph whether every fair execution
/// converges to `expected`.
pub fn verdict_of(g: &ReachGraph, expected: bool) -> Verdict {
    assert_eq!(g.view, View::Full);
    if !g.complete {
        return Verdict::Exhausted { cap: g.cap };
    }
    let want = Output::from_bool(expected);
    let mut bsccs: Vec<&Vec<u32>> = g.bottom_sccs().collect();
    bsccs.sort_by_key(|s| s[0]);
    for members in bsccs {
        let mut outs: Vec<Output> = members.iter().map(|&v| g.outputs[v as usize]).collect();
        outs.sort();
        outs.dedup();
        if outs == [want] {
            continue;
        }
        let node = *members.iter().find(|&&v| g.outputs[v as usize] != want).unwrap();
        let witness = Witness {
            path: g.path_to(node),
            bscc_size: members.len(),
            bscc_outputs: outs.clone(),
        };
        return if outs.len() == 1 && outs[0] != Output::Bottom {
            Verdict::WrongConsensus { expected, witness }
        } else {
            Verdict::NoConsensus { expected, witness }
        };
    }
    Verdict::ComputesCorrectly { consensus: expected }
}

/// Whether `p` computes `e` from the initial configuration `c0`.
pub fn check_computes(
    p: &Protocol,
    e: &PredicateExpr,
    c0: &Configuration,
    cap: usize,
) -> Result<Verdict, AnalysisError> {
    let m = input_of(p, c0).ok_or(AnalysisError::NotInitial)?;
    let expected = eval_expr(e, &m)?;
    Ok(decide(p, c0, expected, cap).0)
}

/// Replays a witness path from `c0`: each step must be a single transition
/// up to the keys of `view`. Returns the concrete final configuration.
pub fn replay_witness(p: &Protocol, c0: &Configuration, path: &[CanonicalKey], view: View) -> Option<Configuration> {
    let (first, rest) = path.split_first()?;
    if view_key(p, c0, view) != *first {
        return None;
    }
    let mut cur = c0.clone();
    for key in rest {
        cur = successors(p, &cur).into_iter().find(|c| view_key(p, c, view) == *key)?;
    }
    Some(cur)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stability {
    Unstable,
    StableFalse,
    StableTrue,
}

fn output_bit(o: Output) -> u8 {
    match o {
        Output::False => 1,
        Output::True => 2,
        Output::Bottom => 4,
    }
}

/// Per-node stability: a node is stable with output b iff every node
/// reachable from it (itself included) has output b.
pub fn classify_stability(g: &ReachGraph) -> Result<Vec<Stability>, AnalysisError> {
    if !g.complete || g.view != View::Full {
        return Err(AnalysisError::IncompleteGraph);
    }
    // Tarjan completion order is a reverse topological order.
    let mut mask = vec![0u8; g.sccs.len()];
    for (id, members) in g.sccs.iter().enumerate() {
        let mut m = 0;
        for &v in members {
            m |= output_bit(g.outputs[v as usize]);
            for &w in &g.edges[v as usize] {
                let s = g.scc_of[w as usize] as usize;
                if s != id {
                    m |= mask[s];
                }
            }
        }
        mask[id] = m;
    }
    Ok((0..g.len())
        .map(|v| match mask[g.scc_of[v] as usize] {
            1 => Stability::StableFalse,
            2 => Stability::StableTrue,
            _ => Stability::Unstable,
        })
        .collect())
}

/// One representative per ≡-class of inputs over `alphabet` symbols with
/// 2..=max_agents agents and at most `max_data` data, ordered by size.
pub fn enumerate_inputs(alphabet: usize, max_agents: u32, max_data: u32) -> Vec<InputMultiset> {
    // Nonzero per-datum count vectors, ascending.
    let mut vectors: Vec<Vec<u32>> = Vec::new();
    let mut cur = vec![0u32; alphabet];
    fn gen(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == cur.len() {
            if cur.iter().any(|&x| x > 0) {
                out.push(cur.clone());
            }
            return;
        }
        for v in 0..=left {
            cur[i] = v;
            gen(i + 1, left - v, cur, out);
        }
        cur[i] = 0;
    }
    gen(0, max_agents, &mut cur, &mut vectors);
    vectors.sort_by_key(|v| (v.iter().sum::<u32>(), v.clone()));

    // Multisets of vectors as non-increasing index sequences.
    let mut out: Vec<(u32, Vec<usize>)> = Vec::new();
    fn pick(
        max_idx: usize,
        left: u32,
        slots: u32,
        vectors: &[Vec<u32>],
        chosen: &mut Vec<usize>,
        out: &mut Vec<(u32, Vec<usize>)>,
        total: u32,
    ) {
        if total >= 2 {
            out.push((total, chosen.clone()));
        }
        if slots == 0 {
            return;
        }
        for idx in 0..=max_idx.min(vectors.len().saturating_sub(1)) {
            let size: u32 = vectors[idx].iter().sum();
            if size > left {
                break;
            }
            chosen.push(idx);
            pick(idx, left - size, slots - 1, vectors, chosen, out, total + size);
            chosen.pop();
        }
    }
    if !vectors.is_empty() {
        pick(
            vectors.len() - 1,
            max_agents,
            max_data,
            &vectors,
            &mut Vec::new(),
            &mut out,
            0,
        );
    }
    out.sort();
    out.into_iter()
        .map(|(_, idxs)| {
            let mut m = InputMultiset::new(alphabet);
            for (d, &idx) in idxs.iter().enumerate() {
                for (s, &n) in vectors[idx].iter().enumerate() {
                    if n > 0 {
                        m.add(DatumId(d as u32 + 1), s, n);
                    }
                }
            }
            m
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct InputVerdict {
    pub input: Vec<(DatumId, usize, u32)>,
    pub verdict: Verdict,
    pub nodes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundedReport {
    pub results: Vec<InputVerdict>,
    pub correct: usize,
    pub failures: usize,
    pub exhausted: usize,
}

impl BoundedReport {
    pub fn all_correct(&self) -> bool {
        self.correct == self.results.len()
    }

    pub fn exhausted_fraction(&self) -> f64 {
        if self.results.is_empty() {
            0.0
        } else {
            self.exhausted as f64 / self.results.len() as f64
        }
    }
}

/// Runs [`check_computes`] on `inputs`.
pub fn verify_inputs(
    p: &Protocol,
    e: &PredicateExpr,
    inputs: &[InputMultiset],
    cap: usize,
) -> Result<BoundedReport, AnalysisError> {
    let results: Vec<InputVerdict> = inputs
        .par_iter()
        .map(|m| {
            let c0 = crate::model::init_config(p, m)?;
            let expected = eval_expr(e, m)?;
            let (verdict, nodes) = decide(p, &c0, expected, cap);
            Ok(InputVerdict {
                input: m.entries().collect(),
                verdict,
                nodes,
            })
        })
        .collect::<Result<_, AnalysisError>>()?;
    let correct = results.iter().filter(|r| r.verdict.is_correct()).count();
    let failures = results.iter().filter(|r| r.verdict.is_failure()).count();
    let exhausted = results.len() - correct - failures;
    Ok(BoundedReport {
        results,
        correct,
        failures,
        exhausted,
    })
}

/// Checks every input with up to `max_agents` agents and `max_data` data.
pub fn verify_bounded(
    p: &Protocol,
    e: &PredicateExpr,
    max_agents: u32,
    max_data: u32,
    cap: usize,
) -> Result<BoundedReport, AnalysisError> {
    let inputs = enumerate_inputs(p.symbols().len(), max_agents, max_data);
    verify_inputs(p, e, &inputs, cap)
}

/// Concrete BFS from `start` for a configuration satisfying `target`.
fn search<F: Fn(&Configuration) -> bool>(
    p: &Protocol,
    start: &Configuration,
    cap: usize,
    target: F,
) -> Result<bool, AnalysisError> {
    let mut seen: HashSet<Configuration> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back(start.clone());
    while let Some(c) = queue.pop_front() {
        if target(&c) {
            return Ok(true);
        }
        for next in successors(p, &c) {
            if seen.insert(next.clone()) {
                if seen.len() > cap {
                    return Err(AnalysisError::CapExceeded { cap });
                }
                queue.push_back(next);
            }
        }
    }
    Ok(false)
}

/// Agents of `c` that must change state before `c` can equal `goal`. Every
/// step moves at most one agent, so this never overestimates the distance.
fn mismatch(c: &Configuration, goal: &Configuration) -> u64 {
    c.forms()
        .map(|(d, f)| {
            f.iter()
                .map(|(q, n)| n.saturating_sub(goal.get(d, q)) as u64)
                .sum::<u64>()
        })
        .sum()
}

/// A* search from `start` for exactly `goal`, guided by [`mismatch`].
fn search_exact(p: &Protocol, start: &Configuration, goal: &Configuration, cap: usize) -> Result<bool, AnalysisError> {
    if start.datum_totals() != goal.datum_totals() {
        return Ok(false);
    }
    let mut nodes: Vec<Configuration> = vec![start.clone()];
    let mut depth: HashMap<Configuration, u64> = HashMap::from([(start.clone(), 0)]);
    let mut open = BinaryHeap::from([Reverse((mismatch(start, goal), 0u64, 0usize))]);
    while let Some(Reverse((_, g, i))) = open.pop() {
        let c = nodes[i].clone();
        if c == *goal {
            return Ok(true);
        }
        if depth[&c] < g {
            continue;
        }
        for next in successors(p, &c) {
            if depth.get(&next).is_some_and(|&known| known <= g + 1) {
                continue;
            }
            if depth.len() >= cap && !depth.contains_key(&next) {
                return Err(AnalysisError::CapExceeded { cap });
            }
            depth.insert(next.clone(), g + 1);
            open.push(Reverse((g + 1 + mismatch(&next, goal), g + 1, nodes.len())));
            nodes.push(next);
        }
    }
    Ok(false)
}

/// Given C →* C̄ and C ⊑ C′, searches for C̄′ with C′ →* C̄′ and C̄ ⊑ C̄′.
pub fn oracle_monotonicity(
    p: &Protocol,
    c: &Configuration,
    cbar: &Configuration,
    cprime: &Configuration,
    cap: usize,
) -> Result<bool, AnalysisError> {
    if !embeds(c, cprime) {
        return Err(AnalysisError::Precondition("C does not embed into C′".into()));
    }
    search(p, cprime, cap, |x| embeds(cbar, x))
}

/// For an immediate-observation protocol with C →* C′: checks that
/// C + C(d) on a fresh datum reaches C′ + C′(d) on that datum. The search is
/// best-first on a lower bound of the remaining distance, so a reachable goal
/// is found without exhausting the whole reachable set.
pub fn oracle_duplication(
    p: &Protocol,
    c: &Configuration,
    cprime: &Configuration,
    d: DatumId,
    dfresh: DatumId,
    cap: usize,
) -> Result<bool, AnalysisError> {
    if !p.is_immediate_observation() {
        return Err(AnalysisError::NotImmediateObservation);
    }
    if !c.contains_datum(d) {
        return Err(AnalysisError::Precondition(format!("{d} is not in the support")));
    }
    if c.contains_datum(dfresh) || cprime.contains_datum(dfresh) {
        return Err(AnalysisError::Precondition(format!("{dfresh} is not fresh")));
    }
    let mut start = c.clone();
    start.add_form(dfresh, &c.form(d));
    let mut goal = cprime.clone();
    goal.add_form(dfresh, &cprime.form(d));
    search_exact(p, &start, &goal, cap)
}

fn form_label(p: &Protocol, f: &Form) -> String {
    let parts: Vec<String> = f
        .iter()
        .map(|(q, n)| {
            if n == 1 {
                p.state_label(q)
            } else {
                format!("{}×{}", p.state_label(q), n)
            }
        })
        .collect();
    format!("{{{}}}", parts.join(", "))
}

/// Human-readable multiset of forms.
pub fn key_label(p: &Protocol, key: &CanonicalKey) -> String {
    key.forms()
        .iter()
        .map(|(f, m)| {
            if *m == 1 {
                form_label(p, f)
            } else {
                format!("{}×{}", form_label(p, f), m)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Graphviz rendering: green for true, red for false, grey for ⊥; bottom SCC
/// members are drawn with a double border.
pub fn to_dot(p: &Protocol, g: &ReachGraph) -> String {
    let mut s = String::from("digraph reach {\n  node [shape=box, style=filled];\n");
    for v in 0..g.len() {
        let color = match g.outputs[v] {
            Output::True => "palegreen",
            Output::False => "lightcoral",
            Output::Bottom => "lightgrey",
        };
        let peripheries = if g.bottom[g.scc_of[v] as usize] { 2 } else { 1 };
        let label = key_label(p, g.key(v as u32)).replace('"', "\\\"");
        let _ = writeln!(
            s,
            "  n{v} [label=\"{label}\", fillcolor={color}, peripheries={peripheries}];"
        );
    }
    for (u, succ) in g.edges.iter().enumerate() {
        for v in succ {
            let _ = writeln!(s, "  n{u} -> n{v};");
        }
    }
    s.push_str("}\n");
    s
}

#[derive(Serialize)]
struct JsonNode<'a> {
    id: usize,
    label: String,
    key: &'a CanonicalKey,
    output: Output,
    scc: u32,
    bottom: bool,
}

#[derive(Serialize)]
struct JsonGraph<'a> {
    complete: bool,
    nodes: Vec<JsonNode<'a>>,
    edges: Vec<(usize, u32)>,
}

pub fn to_json(p: &Protocol, g: &ReachGraph) -> serde_json::Value {
    let graph = JsonGraph {
        complete: g.complete,
        nodes: (0..g.len())
            .map(|v| JsonNode {
                id: v,
                label: key_label(p, g.key(v as u32)),
                key: g.key(v as u32),
                output: g.outputs[v],
                scc: g.scc_of[v],
                bottom: g.bottom[g.scc_of[v] as usize],
            })
            .collect(),
        edges: g
            .edges
            .iter()
            .enumerate()
            .flat_map(|(u, s)| s.iter().map(move |&v| (u, v)))
            .collect(),
    };
    serde_json::to_value(graph).expect("graph serializes")
}
