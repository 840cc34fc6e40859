//! Backward worklist exploration of one function: propagates seeded facts
//! use→def through blocks, crosses calls via summaries or `call_flow`, and
//! records terminal events, escaped entry facts, and witness traces.

use super::flow::{call_flow, flow, phi_flow, summary_key_for, FlowCtx};
use super::summary::{SummaryKey, SummaryStatus, SummaryStore};
use super::{DataFact, EntryFact, EventSet, FactBase, FlowEvent};
use crate::cir::{CallTarget, FunctionDef, Inst, Location, Program, ProgramInfo};
use crate::detectors::rules::RuleSet;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    pub refinements: bool,
    /// Access-path depth bound K.
    pub max_k: usize,
    /// Maximum (instruction, fact) visits per exploration.
    pub budget: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { refinements: true, max_k: 2, budget: 100_000 }
    }
}

/// Everything one exploration learned about one seed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeedResult {
    pub events: EventSet,
    pub entry_facts: BTreeSet<EntryFact>,
    /// Witness path (source → sink order) per constant/sanitizer/verifier event.
    pub event_traces: BTreeMap<FlowEvent, Vec<Location>>,
    /// Witness path per escaped entry fact.
    pub entry_traces: BTreeMap<EntryFact, Vec<Location>>,
    pub budget_exceeded: bool,
}

impl SeedResult {
    /// `Exhausted` marks a seed whose every path died without a source,
    /// a sanitizer, a verifier, or an escape.
    pub fn finalize(&mut self) {
        if self.events.is_empty() && self.entry_facts.is_empty() && !self.budget_exceeded {
            self.events.insert(FlowEvent::Exhausted);
        }
    }
}

pub struct Solver<'a> {
    pub program: &'a Program,
    pub info: &'a ProgramInfo,
    pub rules: &'a RuleSet,
    pub config: EngineConfig,
}

/// (seed id, block index, point, fact); point i = "fact holds before
/// instruction i"; i == insts.len() means after the terminator.
type State = (usize, usize, usize, DataFact);

struct Parent {
    prev: Option<State>,
    /// Locations crossed getting here from `prev` (callee sub-traces included).
    steps: Vec<Location>,
}

impl<'a> Solver<'a> {
    /// Runs the backward worklist for all seeds at once. Seed locations give
    /// the point *before* the named instruction index.
    pub fn explore(
        &self,
        func: &str,
        seeds: &[(usize, Location, DataFact)],
        store: &SummaryStore,
    ) -> BTreeMap<usize, SeedResult> {
        let f = self.program.function(func).expect("explore: unknown function");
        let block_index: BTreeMap<&str, usize> =
            f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
        let new_bases: BTreeSet<String> = f
            .blocks
            .iter()
            .flat_map(|b| b.insts.iter())
            .filter_map(|i| match i {
                Inst::New { dst, .. } => Some(dst.clone()),
                _ => None,
            })
            .collect();
        let phi_counts: Vec<usize> = f
            .blocks
            .iter()
            .map(|b| b.insts.iter().take_while(|i| i.is_phi()).count())
            .collect();
        let formal_index: BTreeMap<&str, usize> =
            f.params.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i)).collect();

        let mut results: BTreeMap<usize, SeedResult> = BTreeMap::new();
        let mut visited: BTreeMap<State, Parent> = BTreeMap::new();
        let mut work: VecDeque<State> = VecDeque::new();
        let mut visits = 0usize;

        for (id, loc, fact) in seeds {
            results.entry(*id).or_default();
            let Some(&b) = block_index.get(loc.block.as_str()) else { continue };
            let st: State = (*id, b, loc.index, fact.clone());
            if !visited.contains_key(&st) {
                visited.insert(st.clone(), Parent { prev: None, steps: vec![loc.clone()] });
                work.push_back(st);
                visits += 1;
            }
        }

        let mut over_budget = false;
        while let Some(state) = work.pop_front() {
            if visits > self.config.budget {
                over_budget = true;
                break;
            }
            let (seed, b, i, ref fact) = state;
            let block = &f.blocks[b];
            let phis = phi_counts[b];

            let push = |visited: &mut BTreeMap<State, Parent>,
                            work: &mut VecDeque<State>,
                            visits: &mut usize,
                            child: State,
                            steps: Vec<Location>| {
                if !visited.contains_key(&child) {
                    visited.insert(child.clone(), Parent { prev: Some(state.clone()), steps });
                    work.push_back(child);
                    *visits += 1;
                }
            };

            if i > phis {
                let idx = i - 1;
                let inst = &block.insts[idx];
                let loc = Location::new(f.name.clone(), block.label.clone(), idx);
                let (facts, events, extra_steps) = if inst.is_call() {
                    self.cross_call(f, inst, fact, &loc, store)
                } else {
                    let ctx = FlowCtx { loc: loc.clone(), new_bases: &new_bases, max_k: self.config.max_k };
                    let (fs, evs) = flow(inst, fact, &ctx);
                    (fs, evs.into_iter().map(|e| (e, Vec::new())).collect(), Vec::new())
                };
                for (ev, sub_trace) in events {
                    let res = results.entry(seed).or_default();
                    if res.events.insert(ev.clone()) {
                        let mut trace = sub_trace;
                        trace.push(loc.clone());
                        trace.extend(self.reconstruct(&visited, &state));
                        res.event_traces.insert(ev, trace);
                    }
                }
                for nf in facts {
                    let mut steps = vec![loc.clone()];
                    steps.extend(extra_steps.iter().cloned());
                    push(&mut visited, &mut work, &mut visits, (seed, b, idx, nf), steps);
                }
            } else {
                // At the phi boundary: record escapes at the entry block, then
                // cross each incoming edge applying the whole phi group.
                if b == 0 {
                    let entry = match fact.path().map(|p| (&p.base, &p.fields)) {
                        Some((FactBase::Local(n), fields)) => formal_index
                            .get(n.as_str())
                            .map(|&index| EntryFact::Formal { index, fields: fields.clone() }),
                        Some((FactBase::Static { class, field }, fields)) => {
                            Some(EntryFact::Static {
                                class: class.clone(),
                                field: field.clone(),
                                fields: fields.clone(),
                            })
                        }
                        None => None,
                    };
                    if let Some(ef) = entry {
                        let res = results.entry(seed).or_default();
                        if res.entry_facts.insert(ef.clone()) {
                            let trace = self.reconstruct(&visited, &state);
                            res.entry_traces.insert(ef, trace);
                        }
                    }
                }
                for pred in self.info.preds_of(&f.name, &block.label) {
                    let Some(&pb) = block_index.get(pred.as_str()) else { continue };
                    let mut mapped = vec![fact.clone()];
                    for phi in &block.insts[..phis] {
                        if fact.local_base()
                            == match phi {
                                Inst::Phi { dst, .. } => Some(dst.as_str()),
                                _ => None,
                            }
                        {
                            mapped = phi_flow(phi, fact, pred);
                        }
                    }
                    for nf in mapped {
                        let child = (seed, pb, f.blocks[pb].insts.len(), nf);
                        push(&mut visited, &mut work, &mut visits, child, Vec::new());
                    }
                }
            }
        }

        for res in results.values_mut() {
            res.budget_exceeded = over_budget;
            res.finalize();
        }
        results
    }

    /// Transfer across a call instruction: summaries for known bodies,
    /// `call_flow` for extern targets. Returns (facts before the call,
    /// events each with a callee sub-trace, shared extra steps for facts).
    #[allow(clippy::type_complexity)]
    fn cross_call(
        &self,
        f: &FunctionDef,
        inst: &Inst,
        fact: &DataFact,
        loc: &Location,
        store: &SummaryStore,
    ) -> (Vec<DataFact>, Vec<(FlowEvent, Vec<Location>)>, Vec<Location>) {
        let target = self.info.call_target(self.program, &f.name, inst);
        match target {
            Some(CallTarget::Bodies(bodies)) => {
                let Some(key) = summary_key_for(inst, fact) else {
                    return (vec![fact.clone()], vec![], vec![]);
                };
                let mut facts = Vec::new();
                let mut events = Vec::new();
                let mut sub_steps: Vec<Location> = Vec::new();
                for body in &bodies {
                    match store.edge(body, &key) {
                        Some(edge) => {
                            for ef in &edge.entry_facts {
                                facts.extend(super::flow::pass_args(inst, ef));
                                if sub_steps.is_empty() {
                                    if let Some(t) = edge.entry_traces.get(ef) {
                                        sub_steps = t.clone();
                                    }
                                }
                            }
                            for ev in &edge.events {
                                let t = edge.event_traces.get(ev).cloned().unwrap_or_default();
                                events.push((ev.clone(), t));
                            }
                        }
                        None => match (store.status(body), &key) {
                            (SummaryStatus::Done, SummaryKey::Ret { .. }) => {}
                            (SummaryStatus::Done, _) => facts.push(fact.clone()),
                            // In-progress SCC member: contributes nothing this
                            // round; the fixpoint re-runs the caller.
                            _ => {}
                        },
                    }
                }
                facts.sort();
                facts.dedup();
                (facts, events, sub_steps)
            }
            Some(CallTarget::Extern { qualified, .. }) => {
                let (facts, events) =
                    call_flow(inst, fact, &qualified, self.config.refinements, self.rules, loc);
                (facts, events.into_iter().map(|e| (e, Vec::new())).collect(), vec![])
            }
            None => (vec![fact.clone()], vec![], vec![]),
        }
    }

    /// Walks parent pointers from `state` back to its seed, collecting the
    /// locations crossed (source → sink order).
    fn reconstruct(&self, visited: &BTreeMap<State, Parent>, state: &State) -> Vec<Location> {
        let mut out = Vec::new();
        let mut cur = Some(state.clone());
        let mut guard = 0usize;
        while let Some(s) = cur {
            guard += 1;
            if guard > visited.len() + 1 {
                break;
            }
            match visited.get(&s) {
                Some(p) => {
                    out.extend(p.steps.iter().cloned());
                    cur = p.prev.clone();
                }
                None => break,
            }
        }
        out
    }
}
