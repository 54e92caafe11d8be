//! Seeded random scheduler.
//!
//! Each step draws an ordered pair of distinct agents uniformly at random and
//! applies one of the non-identity transitions enabled for it, chosen
//! uniformly. Unary transitions of the second agent are candidates too.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{Configuration, DatumId, ModelError, Output, Protocol, Relation, StateId, Transition};
use crate::order::{canonical, CanonicalKey};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub max_steps: u64,
    /// Consecutive constant-output steps required before convergence is
    /// considered; defaults to 50·ℓ².
    pub window: Option<u64>,
    pub capture_trace: bool,
    /// Confirm convergence by checking that no enabled transition changes an
    /// output bit. Without it the verdict rests on the window alone.
    pub stability_check: bool,
}

impl RunConfig {
    pub fn new(seed: u64, max_steps: u64) -> Self {
        RunConfig {
            seed,
            max_steps,
            window: None,
            capture_trace: false,
            stability_check: true,
        }
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.capture_trace = on;
        self
    }

    pub fn with_window(mut self, window: u64) -> Self {
        self.window = Some(window);
        self
    }

    pub fn window_for(&self, population: usize) -> u64 {
        self.window.unwrap_or(50 * (population as u64) * (population as u64))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub step: u64,
    pub transition: Transition,
    pub d: DatumId,
    pub e: DatumId,
    pub config: CanonicalKey,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub converged: bool,
    pub consensus: Output,
    pub steps_to_consensus: Option<u64>,
    pub steps_taken: u64,
    pub null_interactions: u64,
    /// True when convergence was declared from the window alone.
    pub empirical: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

/// What a single scheduler step did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepInfo {
    /// Indices of the drawn agents, observer first.
    pub agents: (usize, usize),
    /// The applied transition, or `None` for a null interaction.
    pub transition: Option<Transition>,
}

impl StepInfo {
    pub fn is_null(&self) -> bool {
        self.transition.is_none()
    }
}

/// A population as an indexed list of agents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Population {
    agents: Vec<(DatumId, StateId)>,
}

impl Population {
    pub fn from_configuration(c: &Configuration) -> Result<Self, ModelError> {
        let agents = c.agents();
        if agents.len() < 2 {
            return Err(ModelError::PopulationTooSmall(agents.len() as u64));
        }
        Ok(Population { agents })
    }

    pub fn agents(&self) -> &[(DatumId, StateId)] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn to_configuration(&self) -> Configuration {
        Configuration::from_agents(self.agents.iter().copied())
    }

    /// Draws an ordered pair of distinct agents and applies a uniformly
    /// chosen enabled transition, if any.
    pub fn step<R: Rng>(&mut self, p: &Protocol, rng: &mut R) -> StepInfo {
        let n = self.agents.len();
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (d, ps) = self.agents[i];
        let (e, qs) = self.agents[j];
        let rel = Relation::of(d, e);
        let pairs = p.pair_successors(ps, qs, rel);
        let unary = p.unary_successors(qs);
        let total = pairs.len() + unary.len();
        if total == 0 {
            return StepInfo {
                agents: (i, j),
                transition: None,
            };
        }
        let k = rng.gen_range(0..total);
        let transition = if k < pairs.len() {
            let (p2, q2) = pairs[k];
            self.agents[i].1 = p2;
            self.agents[j].1 = q2;
            Transition::Pair {
                p: ps,
                q: qs,
                rel,
                p2,
                q2,
            }
        } else {
            let q2 = unary[k - pairs.len()];
            self.agents[j].1 = q2;
            Transition::Unary { q: qs, q2 }
        };
        StepInfo {
            agents: (i, j),
            transition: Some(transition),
        }
    }

    /// Whether some enabled transition would change an agent's output bit.
    pub fn output_can_change(&self, p: &Protocol) -> bool {
        let slots: Vec<(DatumId, StateId, u32)> = self
            .to_configuration()
            .forms()
            .flat_map(|(d, f)| f.iter().map(move |(q, n)| (d, q, n)).collect::<Vec<_>>())
            .collect();
        for (a, &(d, ps, np)) in slots.iter().enumerate() {
            let out_p = p.state_output(ps);
            for (b, &(e, qs, _)) in slots.iter().enumerate() {
                if a == b && np < 2 {
                    continue;
                }
                let out_q = p.state_output(qs);
                let flips = p
                    .pair_successors(ps, qs, Relation::of(d, e))
                    .iter()
                    .any(|&(p2, q2)| p.state_output(p2) != out_p || p.state_output(q2) != out_q);
                if flips {
                    return true;
                }
            }
            if p.unary_successors(ps).iter().any(|&q2| p.state_output(q2) != out_p) {
                return true;
            }
        }
        false
    }
}

/// One scheduler step on a configuration. Agents are indexed in the order of
/// [`Configuration::agents`].
pub fn schedule_step<R: Rng>(
    p: &Protocol,
    c: &Configuration,
    rng: &mut R,
) -> Result<(Configuration, StepInfo), ModelError> {
    let mut pop = Population::from_configuration(c)?;
    let info = pop.step(p, rng);
    Ok((pop.to_configuration(), info))
}

/// Tracks O(C) incrementally from the number of agents with output true.
struct OutputTracker {
    n: usize,
    true_count: usize,
}

impl OutputTracker {
    fn new(p: &Protocol, pop: &Population) -> Self {
        let true_count = pop.agents.iter().filter(|(_, q)| p.state_output(*q)).count();
        OutputTracker {
            n: pop.len(),
            true_count,
        }
    }

    fn update(&mut self, p: &Protocol, before: StateId, after: StateId) {
        self.true_count += p.state_output(after) as usize;
        self.true_count -= p.state_output(before) as usize;
    }

    fn output(&self) -> Output {
        match self.true_count {
            0 => Output::False,
            t if t == self.n => Output::True,
            _ => Output::Bottom,
        }
    }
}

pub fn run(p: &Protocol, c0: &Configuration, rc: &RunConfig) -> Result<RunReport, ModelError> {
    run_with_observer(p, c0, rc, |_, _| {})
}

/// Runs the scheduler, calling `observe(step, population)` after every step
/// (and once with step 0 before the first).
pub fn run_with_observer<F: FnMut(u64, &Population)>(
    p: &Protocol,
    c0: &Configuration,
    rc: &RunConfig,
    mut observe: F,
) -> Result<RunReport, ModelError> {
    let mut pop = Population::from_configuration(c0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
    let window = rc.window_for(pop.len());
    let mut tracker = OutputTracker::new(p, &pop);
    let mut trace = rc.capture_trace.then(Vec::new);
    let mut null_interactions = 0;
    let mut streak_start = 0u64;
    let mut current = tracker.output();
    let mut converged = false;
    let mut steps = 0u64;
    observe(0, &pop);
    while steps < rc.max_steps {
        let info = pop.step(p, &mut rng);
        steps += 1;
        match info.transition {
            None => null_interactions += 1,
            Some(t) => {
                let (i, j) = info.agents;
                match t {
                    Transition::Pair {
                        p: ps, q: qs, p2, q2, ..
                    } => {
                        tracker.update(p, ps, p2);
                        tracker.update(p, qs, q2);
                    }
                    Transition::Unary { q, q2 } => tracker.update(p, q, q2),
                }
                if let Some(trace) = trace.as_mut() {
                    let (d, e) = match t {
                        Transition::Pair { .. } => (pop.agents[i].0, pop.agents[j].0),
                        Transition::Unary { .. } => (pop.agents[j].0, pop.agents[j].0),
                    };
                    trace.push(TraceEntry {
                        step: steps,
                        transition: t,
                        d,
                        e,
                        config: canonical(&pop.to_configuration()),
                    });
                }
            }
        }
        observe(steps, &pop);
        let now = tracker.output();
        if now != current {
            current = now;
            streak_start = steps;
        }
        if current != Output::Bottom && steps - streak_start >= window {
            if !rc.stability_check || !pop.output_can_change(p) {
                converged = true;
                break;
            }
            // Not yet stable; look again after another window.
            streak_start = steps;
        }
    }
    Ok(RunReport {
        converged,
        consensus: current,
        steps_to_consensus: converged.then_some(streak_start),
        steps_taken: steps,
        null_interactions,
        empirical: converged && !rc.stability_check,
        trace,
    })
}

/// Writes a trace as JSON lines.
pub fn write_trace_jsonl<W: Write>(trace: &[TraceEntry], mut w: W) -> io::Result<()> {
    for entry in trace {
        serde_json::to_writer(&mut w, entry)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchReport {
    pub seeds: Vec<u64>,
    pub reports: Vec<RunReport>,
    pub convergence_rate: f64,
    /// Mean of steps_to_consensus over converged runs.
    pub mean_steps: Option<f64>,
}

/// Runs one independent simulation per seed (in parallel); the result is in
/// seed order.
pub fn batch_run(p: &Protocol, c0: &Configuration, seeds: &[u64], rc: &RunConfig) -> Result<BatchReport, ModelError> {
    let reports: Vec<RunReport> = seeds
        .par_iter()
        .map(|&seed| {
            let rc = RunConfig { seed, ..rc.clone() };
            run(p, c0, &rc)
        })
        .collect::<Result<_, _>>()?;
    let converged: Vec<u64> = reports
        .iter()
        .filter(|r| r.converged)
        .filter_map(|r| r.steps_to_consensus)
        .collect();
    let convergence_rate = if reports.is_empty() {
        0.0
    } else {
        converged.len() as f64 / reports.len() as f64
    };
    let mean_steps =
        (!converged.is_empty()).then(|| converged.iter().map(|&s| s as f64).sum::<f64>() / converged.len() as f64);
    Ok(BatchReport {
        seeds: seeds.to_vec(),
        reports,
        convergence_rate,
        mean_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_config, table_protocol, InputMultiset};
    use crate::protocols::build_majority;

    fn majority_input(groups: &[u32]) -> InputMultiset {
        InputMultiset::from_entries(
            1,
            groups.iter().enumerate().map(|(d, &n)| (DatumId(d as u32 + 1), 0, n)),
        )
    }

    fn frozen(n: u32) -> (Protocol, Configuration) {
        let p = table_protocol("frozen", &["a"], &[true], &[], &["x"], &[StateId(0)]);
        let c = Configuration::from_agents((0..n).map(|d| (DatumId(d), StateId(0))));
        (p, c)
    }

    #[test]
    fn ordered_pairs_are_uniform() {
        let (p, c) = frozen(5);
        let mut pop = Population::from_configuration(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hist = [0u64; 25];
        let draws = 100_000u64;
        for _ in 0..draws {
            let info = pop.step(&p, &mut rng);
            assert!(info.is_null());
            let (i, j) = info.agents;
            assert_ne!(i, j);
            hist[i * 5 + j] += 1;
        }
        let expected = draws as f64 / 20.0;
        let chi2: f64 = (0..5)
            .flat_map(|i| (0..5).filter(move |&j| j != i).map(move |j| i * 5 + j))
            .map(|k| (hist[k] as f64 - expected).powi(2) / expected)
            .sum();
        // 19 degrees of freedom, 0.1% critical value.
        assert!(chi2 < 43.82, "chi2 = {chi2}");
    }

    #[test]
    fn single_transition_is_applied() {
        let t = Transition::Pair {
            p: StateId(0),
            q: StateId(0),
            rel: Relation::Eq,
            p2: StateId(1),
            q2: StateId(1),
        };
        let p = table_protocol("one", &["a", "b"], &[false, true], &[t], &["x"], &[StateId(0)]);
        let c = Configuration::from_agents([(DatumId(0), StateId(0)), (DatumId(0), StateId(0))]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (next, info) = schedule_step(&p, &c, &mut rng).unwrap();
        assert_eq!(info.transition, Some(t));
        assert_eq!(next.get(DatumId(0), StateId(1)), 2);
    }

    #[test]
    fn frozen_population_only_has_null_steps() {
        let (p, c) = frozen(3);
        let report = run(&p, &c, &RunConfig::new(1, 500).with_window(1000)).unwrap();
        assert_eq!(report.null_interactions, 500);
        assert!(!report.converged);
        assert_eq!(report.consensus, Output::True);
    }

    #[test]
    fn zero_steps() {
        let p = build_majority();
        let c = init_config(&p, &majority_input(&[2, 1])).unwrap();
        let report = run(&p, &c, &RunConfig::new(3, 0)).unwrap();
        assert!(!report.converged);
        assert_eq!(report.steps_taken, 0);
    }

    #[test]
    fn too_small() {
        let p = build_majority();
        let c = Configuration::from_agents([(DatumId(0), StateId(0))]);
        assert_eq!(
            run(&p, &c, &RunConfig::new(0, 10)),
            Err(ModelError::PopulationTooSmall(1))
        );
    }

    #[test]
    fn majority_examples() {
        let p = build_majority();
        let yes = init_config(&p, &majority_input(&[4, 2, 1])).unwrap();
        let no = init_config(&p, &majority_input(&[2, 2, 1])).unwrap();
        for seed in 0..5 {
            let r = run(&p, &yes, &RunConfig::new(seed, 1_000_000)).unwrap();
            assert!(r.converged);
            assert_eq!(r.consensus, Output::True);
            let r = run(&p, &no, &RunConfig::new(seed, 1_000_000)).unwrap();
            assert!(r.converged);
            assert_eq!(r.consensus, Output::False);
        }
    }

    #[test]
    fn deterministic_with_trace() {
        let p = build_majority();
        let c = init_config(&p, &majority_input(&[3, 1, 1])).unwrap();
        let rc = RunConfig::new(42, 5_000).with_trace(true);
        let a = run(&p, &c, &rc).unwrap();
        let b = run(&p, &c, &rc).unwrap();
        assert_eq!(a, b);
        let trace = a.trace.as_ref().unwrap();
        assert!(!trace.is_empty());
        let mut buf = Vec::new();
        write_trace_jsonl(trace, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), trace.len());
        // Every traced configuration conserves per-datum totals.
        for entry in trace {
            let rep = entry.config.representative();
            let mut sizes: Vec<u64> = rep.datum_totals().into_values().collect();
            sizes.sort();
            assert_eq!(sizes, vec![1, 1, 3]);
        }
    }

    #[test]
    fn batch_matches_single_runs() {
        let p = build_majority();
        let c = init_config(&p, &majority_input(&[2, 1])).unwrap();
        let rc = RunConfig::new(0, 100_000);
        let batch = batch_run(&p, &c, &[7, 7, 8], &rc).unwrap();
        assert_eq!(batch.reports[0], batch.reports[1]);
        assert_eq!(batch.reports[2], run(&p, &c, &RunConfig { seed: 8, ..rc }).unwrap());
        assert!((0.0..=1.0).contains(&batch.convergence_rate));
    }
}
