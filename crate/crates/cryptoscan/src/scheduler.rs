//! Layer-by-layer caller escalation: a seed runs in its sink's function
//! first; facts alive at function entry are re-seeded into every caller at
//! the next layer, with per-candidate deduplication.

use crate::callgraph::CallGraph;
use crate::cir::{Inst, Location, Program, ProgramInfo};
use crate::detectors::rules::RuleSet;
use crate::detectors::verify::{apply_verifying_rule, SinkSeed, Violation};
use crate::detectors::SinkRule;
use crate::ifds::{
    pass_args, AccessPath, DataFact, EntryFact, EventSet, FlowEvent, Solver, SummaryStore,
};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy)]
pub struct SchedulerConfig {
    pub max_layers: usize,
    /// Treat constants written to escaped fields in constructors and static
    /// initializers as reachable (library perspective).
    pub library_mode: bool,
    /// Follow no-caller static-rooted facts into the owning class's
    /// staticinit body.
    pub clinit_fallback: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { max_layers: 20, library_mode: false, clinit_fallback: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum UnresolvedReason {
    NoCallers,
    LayerCap,
    Budget,
}

impl UnresolvedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UnresolvedReason::NoCallers => "no-callers",
            UnresolvedReason::LayerCap => "layer-cap",
            UnresolvedReason::Budget => "budget",
        }
    }
}

/// Final disposition of one candidate per the three-situations rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    BugVerified { violation: Violation },
    SanitizedNoBug,
    Unresolved { reason: UnresolvedReason },
}

/// Everything the escalation learned about one candidate before the
/// verifying rule is applied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateResult {
    pub events: EventSet,
    pub event_traces: BTreeMap<FlowEvent, Vec<Location>>,
    pub unresolved: BTreeSet<UnresolvedReason>,
    pub layers_used: usize,
}

#[derive(Debug, Clone)]
struct LayerTask {
    function: String,
    seed_loc: Location,
    fact: DataFact,
    /// Witness path from this task's seed to the original sink.
    suffix: Vec<Location>,
}

pub struct Scheduler<'a> {
    pub solver: &'a Solver<'a>,
    pub callgraph: &'a CallGraph,
    pub store: &'a SummaryStore,
    pub config: SchedulerConfig,
}

impl<'a> Scheduler<'a> {
    /// Runs caller escalation for every layer-0 seed; returns one result per
    /// seed index.
    pub fn schedule(&self, seeds: &[SinkSeed]) -> Vec<CandidateResult> {
        seeds.iter().map(|s| self.run_candidate(s)).collect()
    }

    pub fn run_candidate(&self, seed: &SinkSeed) -> CandidateResult {
        let p = self.solver.program;
        let mut result = CandidateResult::default();
        let mut visited: BTreeSet<(String, EntryFact)> = BTreeSet::new();
        let mut layer: Vec<LayerTask> = vec![LayerTask {
            function: seed.sink.func.clone(),
            seed_loc: seed.sink.clone(),
            fact: seed.fact.clone(),
            suffix: Vec::new(),
        }];

        let mut layer_no = 0usize;
        while !layer.is_empty() {
            if layer_no >= self.config.max_layers {
                result.unresolved.insert(UnresolvedReason::LayerCap);
                break;
            }
            result.layers_used = layer_no;
            let mut next: Vec<LayerTask> = Vec::new();
            for task in &layer {
                let seeds = [(0usize, task.seed_loc.clone(), task.fact.clone())];
                let res = self.solver.explore(&task.function, &seeds, self.store);
                let Some(r) = res.get(&0) else { continue };
                if r.budget_exceeded {
                    result.unresolved.insert(UnresolvedReason::Budget);
                }
                for ev in &r.events {
                    if matches!(ev, FlowEvent::Exhausted) && !r.entry_facts.is_empty() {
                        continue;
                    }
                    if result.events.insert(ev.clone()) {
                        let mut trace = r.event_traces.get(ev).cloned().unwrap_or_default();
                        trace.extend(task.suffix.iter().cloned());
                        result.event_traces.insert(ev.clone(), trace);
                    }
                }
                for ef in &r.entry_facts {
                    if !visited.insert((task.function.clone(), ef.clone())) {
                        continue;
                    }
                    let mut suffix =
                        r.entry_traces.get(ef).cloned().unwrap_or_default();
                    suffix.extend(task.suffix.iter().cloned());
                    next.extend(self.escalate(p, &task.function, ef, suffix, &mut result));
                }
            }
            layer = next;
            layer_no += 1;
        }
        result
    }

    /// Maps one escaped entry fact into caller tasks; applies the no-caller
    /// policies (staticinit fallback, library mode) when appropriate.
    fn escalate(
        &self,
        p: &Program,
        function: &str,
        entry_fact: &EntryFact,
        suffix: Vec<Location>,
        result: &mut CandidateResult,
    ) -> Vec<LayerTask> {
        let callers = self.callgraph.callers_of(function);
        if !callers.is_empty() {
            let mut tasks = Vec::new();
            for caller in callers {
                for loc in self
                    .callgraph
                    .sites_of
                    .get(function)
                    .into_iter()
                    .flatten()
                    .filter(|l| &l.func == caller)
                {
                    let Some(inst) = instruction_at(p, loc) else { continue };
                    for fact in pass_args(inst, entry_fact) {
                        tasks.push(LayerTask {
                            function: caller.clone(),
                            seed_loc: loc.clone(),
                            fact,
                            suffix: suffix.clone(),
                        });
                    }
                }
            }
            return tasks;
        }

        // No callers: application-perspective policy — formal-rooted facts
        // at uncalled entry points are not findings.
        match entry_fact {
            EntryFact::Static { class, field, fields } if self.config.clinit_fallback => {
                if let Some(si) = p.class(class).and_then(|c| c.static_init.clone()) {
                    let tasks = self.seed_at_exits(p, &si, class, field, fields, &suffix);
                    if !tasks.is_empty() {
                        return tasks;
                    }
                }
                result.unresolved.insert(UnresolvedReason::NoCallers);
                vec![]
            }
            EntryFact::Formal { index, fields } if self.config.library_mode && !fields.is_empty() => {
                let tasks = self.library_reseed(p, function, *index, fields, &suffix);
                if tasks.is_empty() {
                    result.unresolved.insert(UnresolvedReason::NoCallers);
                }
                tasks
            }
            _ => {
                result.unresolved.insert(UnresolvedReason::NoCallers);
                vec![]
            }
        }
    }

    /// Re-seeds a static-rooted fact just past the end of the owning class's
    /// staticinit (i.e. at each of its `ret` instructions).
    fn seed_at_exits(
        &self,
        p: &Program,
        func: &str,
        class: &str,
        field: &str,
        fields: &[String],
        suffix: &[Location],
    ) -> Vec<LayerTask> {
        let Some(f) = p.function(func) else { return vec![] };
        let fact = DataFact::Path(
            AccessPath::statik(class.to_string(), field.to_string()).with_fields(fields.to_vec()),
        );
        let mut tasks = Vec::new();
        for b in &f.blocks {
            for (i, inst) in b.insts.iter().enumerate() {
                if matches!(inst, Inst::Ret { .. }) {
                    tasks.push(LayerTask {
                        function: func.to_string(),
                        seed_loc: Location::new(func, b.label.clone(), i),
                        fact: fact.clone(),
                        suffix: suffix.to_vec(),
                    });
                }
            }
        }
        tasks
    }

    /// Library perspective: a field path escaping an uncalled method is
    /// joined against every constructor/staticinit write of that field on
    /// the formal's declared class.
    fn library_reseed(
        &self,
        p: &Program,
        function: &str,
        index: usize,
        fields: &[String],
        suffix: &[Location],
    ) -> Vec<LayerTask> {
        let Some(f) = p.function(function) else { return vec![] };
        let Some(class) = f.params.get(index).and_then(|(_, t)| t.class_name()) else {
            return vec![];
        };
        let field = &fields[0];
        let clinits: BTreeSet<&String> =
            p.classes.iter().filter_map(|c| c.static_init.as_ref()).collect();
        let mut tasks = Vec::new();
        for g in &p.functions {
            let is_init = g.method_name() == "<init>" || clinits.contains(&g.name);
            if !is_init {
                continue;
            }
            if g.method_name() == "<init>" && g.class_name() != Some(class) {
                continue;
            }
            for b in &g.blocks {
                for (i, inst) in b.insts.iter().enumerate() {
                    if let Inst::PutField { obj, field: wf, .. } = inst {
                        if wf == field {
                            // Seed just after the write so crossing it maps
                            // the path onto the stored value.
                            let fact = DataFact::Path(
                                AccessPath::local(obj.clone()).with_fields(fields.to_vec()),
                            );
                            tasks.push(LayerTask {
                                function: g.name.clone(),
                                seed_loc: Location::new(g.name.clone(), b.label.clone(), i + 1),
                                fact,
                                suffix: suffix.to_vec(),
                            });
                        }
                    }
                }
            }
        }
        tasks
    }
}

fn instruction_at<'p>(p: &'p Program, loc: &Location) -> Option<&'p Inst> {
    p.function(&loc.func)?
        .blocks
        .iter()
        .find(|b| b.label == loc.block)?
        .insts
        .get(loc.index)
}

/// The three-situations rule: a verified violation wins; otherwise any
/// unresolved branch is reported as such; otherwise every path ended
/// sanitized or exhausted.
pub fn aggregate_outcome(
    result: &CandidateResult,
    rule: &SinkRule,
    rules: &RuleSet,
    info: &ProgramInfo,
    parse_conversion: bool,
) -> Outcome {
    if let Some(violation) = apply_verifying_rule(&result.events, rule, rules, info, parse_conversion)
    {
        return Outcome::BugVerified { violation };
    }
    if let Some(&reason) = result.unresolved.iter().next() {
        return Outcome::Unresolved { reason };
    }
    Outcome::SanitizedNoBug
}
