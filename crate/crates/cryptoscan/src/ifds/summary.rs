//! Per-function summary edges, computed bottom-up over the call-graph SCC
//! condensation so each function body is explored exactly once (per fixpoint
//! round for SCC members).

use super::engine::{SeedResult, Solver};
use super::{AccessPath, DataFact, EntryFact, EventSet, FlowEvent};
use crate::callgraph::CallGraph;
use crate::cir::{Inst, Location, Program, ProgramInfo};
use std::collections::{BTreeMap, BTreeSet};

/// Exit-side fact a caller may query: the return value, a formal's field
/// path, or a static root — each with a bounded field suffix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SummaryKey {
    Ret { fields: Vec<String> },
    Formal { index: usize, fields: Vec<String> },
    Static { class: String, field: String, fields: Vec<String> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SummaryEdge {
    pub entry_facts: BTreeSet<EntryFact>,
    pub events: EventSet,
    pub entry_traces: BTreeMap<EntryFact, Vec<Location>>,
    pub event_traces: BTreeMap<FlowEvent, Vec<Location>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryStatus {
    Pending,
    InProgress,
    Done,
}

#[derive(Debug, Clone, Default)]
pub struct FunctionSummary {
    pub edges: BTreeMap<SummaryKey, SummaryEdge>,
    /// Number of times the body was explored (the explored-once guarantee:
    /// == 1 for non-SCC functions).
    pub explore_count: usize,
}

#[derive(Debug, Default)]
pub struct SummaryStore {
    summaries: BTreeMap<String, FunctionSummary>,
    status: BTreeMap<String, SummaryStatus>,
    pub budget_exceeded: bool,
}

impl SummaryStore {
    pub fn edge(&self, func: &str, key: &SummaryKey) -> Option<&SummaryEdge> {
        self.summaries.get(func)?.edges.get(key)
    }

    pub fn status(&self, func: &str) -> SummaryStatus {
        self.status.get(func).copied().unwrap_or(SummaryStatus::Pending)
    }

    pub fn explore_count(&self, func: &str) -> usize {
        self.summaries.get(func).map(|s| s.explore_count).unwrap_or(0)
    }

    pub fn summary(&self, func: &str) -> Option<&FunctionSummary> {
        self.summaries.get(func)
    }

    pub fn functions_summarized(&self) -> usize {
        self.summaries.len()
    }
}

/// All field suffixes over `fields` with length ≤ k (optionally including
/// the empty suffix), in deterministic order.
fn suffixes(fields: &BTreeSet<String>, k: usize, include_empty: bool) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = if include_empty { vec![vec![]] } else { vec![] };
    let mut frontier: Vec<Vec<String>> = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::new();
        for prefix in &frontier {
            for f in fields {
                let mut s = prefix.clone();
                s.push(f.clone());
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Field names each function may write (directly or via callees), and the
/// static roots it may write — computed to a joint fixpoint over the call
/// graph.
fn written_closure(
    p: &Program,
    cg: &CallGraph,
) -> (BTreeMap<String, BTreeSet<String>>, BTreeMap<String, BTreeSet<(String, String)>>) {
    let mut fields: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut statics: BTreeMap<String, BTreeSet<(String, String)>> = BTreeMap::new();
    for f in &p.functions {
        let mut fs = BTreeSet::new();
        let mut ss = BTreeSet::new();
        for b in &f.blocks {
            for i in &b.insts {
                match i {
                    Inst::PutField { field, .. } => {
                        fs.insert(field.clone());
                    }
                    Inst::PutStatic { class, field, .. } => {
                        ss.insert((class.clone(), field.clone()));
                    }
                    _ => {}
                }
            }
        }
        fields.insert(f.name.clone(), fs);
        statics.insert(f.name.clone(), ss);
    }
    let mut changed = true;
    while changed {
        changed = false;
        for f in &p.functions {
            for callee in cg.callees_of(&f.name).clone() {
                let add_f: Vec<String> =
                    fields.get(&callee).map(|s| s.iter().cloned().collect()).unwrap_or_default();
                let add_s: Vec<(String, String)> =
                    statics.get(&callee).map(|s| s.iter().cloned().collect()).unwrap_or_default();
                let tf = fields.get_mut(&f.name).unwrap();
                for x in add_f {
                    changed |= tf.insert(x);
                }
                let ts = statics.get_mut(&f.name).unwrap();
                for x in add_s {
                    changed |= ts.insert(x);
                }
            }
        }
    }
    (fields, statics)
}

/// Computes summary edges for every function bottom-up; SCC members iterate
/// to a fixpoint. Returns the completed store.
pub fn summarize_program(
    p: &Program,
    info: &ProgramInfo,
    cg: &CallGraph,
    solver_template: &Solver,
) -> SummaryStore {
    let mut store = SummaryStore::default();
    let (written_fields, written_statics) = written_closure(p, cg);
    let k = solver_template.config.max_k;
    let global_fields = &info.field_universe;

    let order = cg.scc_order();
    let empty_fields = BTreeSet::new();
    for comp in &order.components {
        for f in comp {
            store.status.insert(f.clone(), SummaryStatus::InProgress);
        }
        let cyclic = comp.len() > 1
            || comp.iter().any(|f| cg.callees_of(f).contains(f));
        let mut rounds = 0usize;
        loop {
            rounds += 1;
            let mut changed = false;
            for fname in comp {
                let (edges, over_budget) = summarize_function(
                    p,
                    solver_template,
                    fname,
                    &store,
                    global_fields,
                    written_fields.get(fname).unwrap_or(&empty_fields),
                    written_statics.get(fname).map(|s| s.iter().cloned().collect()).unwrap_or_default(),
                    k,
                );
                store.budget_exceeded |= over_budget;
                let entry = store.summaries.entry(fname.clone()).or_default();
                entry.explore_count += 1;
                if entry.edges != edges {
                    entry.edges = edges;
                    changed = true;
                }
            }
            if !cyclic || !changed || rounds > 1000 {
                break;
            }
        }
        for f in comp {
            store.status.insert(f.clone(), SummaryStatus::Done);
        }
    }
    store
}

/// One exploration of `fname` seeding every exit-side fact of interest; the
/// result set per summary key aggregates over all `ret` sites.
#[allow(clippy::too_many_arguments)]
fn summarize_function(
    p: &Program,
    solver: &Solver,
    fname: &str,
    store: &SummaryStore,
    global_fields: &BTreeSet<String>,
    written_fields: &BTreeSet<String>,
    written_statics: Vec<(String, String)>,
    k: usize,
) -> (BTreeMap<SummaryKey, SummaryEdge>, bool) {
    let f = p.function(fname).expect("summarize: unknown function");

    let mut keys: Vec<SummaryKey> = Vec::new();
    for fs in suffixes(global_fields, k, true) {
        keys.push(SummaryKey::Ret { fields: fs });
    }
    for (i, _) in f.params.iter().enumerate() {
        for fs in suffixes(written_fields, k, false) {
            keys.push(SummaryKey::Formal { index: i, fields: fs });
        }
    }
    for (class, field) in &written_statics {
        for fs in suffixes(written_fields, k, true) {
            keys.push(SummaryKey::Static { class: class.clone(), field: field.clone(), fields: fs });
        }
    }

    let rets: Vec<(Location, Option<&String>)> = f
        .blocks
        .iter()
        .flat_map(|b| {
            b.insts.iter().enumerate().filter_map(move |(i, inst)| match inst {
                Inst::Ret { value } => {
                    Some((Location::new(f.name.clone(), b.label.clone(), i), value.as_ref()))
                }
                _ => None,
            })
        })
        .collect();

    let mut seeds: Vec<(usize, Location, DataFact)> = Vec::new();
    for (ki, key) in keys.iter().enumerate() {
        for (loc, retval) in &rets {
            let fact = match key {
                SummaryKey::Ret { fields } => match retval {
                    Some(v) => DataFact::Path(AccessPath::local((*v).clone()).with_fields(fields.clone())),
                    None => continue,
                },
                SummaryKey::Formal { index, fields } => {
                    let Some((pname, _)) = f.params.get(*index) else { continue };
                    DataFact::Path(AccessPath::local(pname.clone()).with_fields(fields.clone()))
                }
                SummaryKey::Static { class, field, fields } => DataFact::Path(
                    AccessPath::statik(class.clone(), field.clone()).with_fields(fields.clone()),
                ),
            };
            seeds.push((ki, loc.clone(), fact));
        }
    }

    let results = solver.explore(fname, &seeds, store);
    let over_budget = results.values().any(|r| r.budget_exceeded);
    let mut edges = BTreeMap::new();
    for (ki, key) in keys.into_iter().enumerate() {
        let Some(res) = results.get(&ki) else {
            // No ret sites seeded this key (e.g. Ret in a void function).
            continue;
        };
        edges.insert(key, edge_from_result(res));
    }
    (edges, over_budget)
}

fn edge_from_result(res: &SeedResult) -> SummaryEdge {
    let mut edge = SummaryEdge {
        entry_facts: res.entry_facts.clone(),
        events: res.events.clone(),
        entry_traces: res.entry_traces.clone(),
        event_traces: res.event_traces.clone(),
    };
    // An exhausted exit fact is simply a killed path; the empty edge carries
    // that meaning, and Exhausted must not leak into callers' event sets.
    edge.events.remove(&FlowEvent::Exhausted);
    edge
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::parse_program;
    use crate::detectors::rules::RuleSet;
    use crate::ifds::EngineConfig;

    fn summarize(src: &str) -> (Program, SummaryStore) {
        let p = parse_program(src).unwrap();
        let info = ProgramInfo::build(&p);
        let cg = CallGraph::build(&p, &info);
        let rules = RuleSet::default();
        let solver =
            Solver { program: &p, info: &info, rules: &rules, config: EngineConfig::default() };
        let store = summarize_program(&p, &info, &cg, &solver);
        // Keep borrows local to the helper.
        drop(solver);
        let p2 = parse_program(src).unwrap();
        (p2, store)
    }

    #[test]
    fn identity_function_summary() {
        let (_, store) = summarize("func @id(%p0: int) -> int { bb0: ret %p0 }");
        let edge = store.edge("id", &SummaryKey::Ret { fields: vec![] }).unwrap();
        assert_eq!(
            edge.entry_facts.iter().collect::<Vec<_>>(),
            [&EntryFact::Formal { index: 0, fields: vec![] }]
        );
        assert!(edge.events.is_empty());
        assert_eq!(store.explore_count("id"), 1);
    }

    #[test]
    fn constant_return_summary() {
        let (_, store) = summarize(
            r#"func @getKey() -> String { bb0: %k = const.str "defaultkey" ret %k }"#,
        );
        let edge = store.edge("getKey", &SummaryKey::Ret { fields: vec![] }).unwrap();
        assert!(edge.entry_facts.is_empty());
        assert_eq!(edge.events.len(), 1);
        assert!(matches!(
            edge.events.first().unwrap(),
            FlowEvent::ConstantSource { literal, .. } if literal == "defaultkey"
        ));
    }

    #[test]
    fn call_chain_composes_summaries() {
        let src = r#"
func @inner() -> String { bb0: %c = const.str "secret" ret %c }
func @outer() -> String { bb0: %v = call @inner() ret %v }
"#;
        let (_, store) = summarize(src);
        let edge = store.edge("outer", &SummaryKey::Ret { fields: vec![] }).unwrap();
        assert_eq!(edge.events.len(), 1);
        assert_eq!(store.explore_count("inner"), 1);
        assert_eq!(store.explore_count("outer"), 1);
    }

    #[test]
    fn field_write_summary_maps_receiver_path_to_formal() {
        let src = r#"
class Crypto { field defaultKey: String }
func @Crypto.init(%this: Crypto, %key: String) -> void {
  bb0:
    putfield %this .defaultKey <- %key
    ret
}
"#;
        let (_, store) = summarize(src);
        let key = SummaryKey::Formal { index: 0, fields: vec!["defaultKey".into()] };
        let edge = store.edge("Crypto.init", &key).unwrap();
        assert!(edge.entry_facts.contains(&EntryFact::Formal { index: 1, fields: vec![] }));
        // Weak update on a formal base keeps the original path alive too.
        assert!(edge
            .entry_facts
            .contains(&EntryFact::Formal { index: 0, fields: vec!["defaultKey".into()] }));
    }

    #[test]
    fn recursive_pair_reaches_fixpoint() {
        let src = r#"
func @even(%n: int) -> int { bb0: %r = call @odd(%n) ret %r }
func @odd(%n: int) -> int { bb0: %r = call @even(%n) ret %n }
"#;
        let (_, store) = summarize(src);
        let edge = store.edge("odd", &SummaryKey::Ret { fields: vec![] }).unwrap();
        assert!(edge.entry_facts.contains(&EntryFact::Formal { index: 0, fields: vec![] }));
        let edge = store.edge("even", &SummaryKey::Ret { fields: vec![] }).unwrap();
        assert!(edge.entry_facts.contains(&EntryFact::Formal { index: 0, fields: vec![] }));
    }

    #[test]
    fn static_write_summary() {
        let src = r#"
class Config { field count: int }
func @setCount() -> void { bb0: %c = const.int 20 putstatic Config.count <- %c ret }
"#;
        let (_, store) = summarize(src);
        let key = SummaryKey::Static { class: "Config".into(), field: "count".into(), fields: vec![] };
        let edge = store.edge("setCount", &key).unwrap();
        assert!(edge.entry_facts.is_empty());
        assert!(matches!(
            edge.events.first().unwrap(),
            FlowEvent::ConstantSource { literal, .. } if literal == "20"
        ));
    }
}
