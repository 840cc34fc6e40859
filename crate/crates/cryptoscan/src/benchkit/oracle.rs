//! Independent differential oracle: a whole-program backward flowset
//! analysis that inlines callee bodies instead of using summaries. It shares
//! the rule catalog and verdict logic with the detectors, but none of the
//! solver machinery — transfers are reimplemented here from the engine's
//! specification so the two implementations can check each other.

use crate::cir::{CallTarget, Inst, Location, Program, ProgramInfo};
use crate::detectors::rules::RuleSet;
use crate::detectors::verify::{apply_verifying_rule, classify_prng, match_sinks};
use crate::ifds::{DataFact, EventSet, FactBase, FlowEvent};
use crate::report::RunReport;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub refinements: bool,
    pub clinit_fallback: bool,
    pub parse_conversion: bool,
    pub max_inline: usize,
    pub max_fields: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            refinements: true,
            clinit_fallback: true,
            parse_conversion: true,
            max_inline: 5,
            max_fields: 2,
        }
    }
}

/// Comparable digest of a finding: rule, sink, and the sorted source
/// literals. Traces and stats are implementation detail and excluded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FindingKey {
    pub rule_id: String,
    pub sink: Location,
    pub literals: Vec<String>,
}

pub fn report_keys(report: &RunReport) -> BTreeSet<FindingKey> {
    report
        .findings
        .iter()
        .filter(|f| f.disposition == "verified")
        .map(|f| {
            let mut literals: Vec<String> =
                f.sources.iter().map(|s| s.literal.clone()).collect();
            literals.sort();
            FindingKey { rule_id: f.rule_id.clone(), sink: f.sink.clone(), literals }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum OBase {
    Local(String),
    Static(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct OFact {
    base: OBase,
    fields: Vec<String>,
}

impl OFact {
    fn rebase(&self, name: &str) -> OFact {
        OFact { base: OBase::Local(name.to_string()), fields: self.fields.clone() }
    }

    fn from_fact(fact: &DataFact) -> Option<OFact> {
        let path = fact.path()?;
        let base = match &path.base {
            FactBase::Local(l) => OBase::Local(l.clone()),
            FactBase::Static { class, field } => OBase::Static(class.clone(), field.clone()),
        };
        Some(OFact { base, fields: path.fields.clone() })
    }
}

/// One return-here frame: the callsite we descended through.
type Site = (String, String, usize);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct State {
    stack: Vec<Site>,
    func: String,
    block: String,
    point: usize,
    fact: OFact,
}

pub struct Oracle<'a> {
    pub program: &'a Program,
    pub info: &'a ProgramInfo,
    pub rules: &'a RuleSet,
    pub options: OracleOptions,
}

impl<'a> Oracle<'a> {
    /// All material events (constants, sanitizer hits, verifier hits)
    /// reachable backward from one seed, or an explanation of why the case
    /// is outside the oracle's inlining envelope.
    pub fn events_for_seed(&self, seed: &crate::detectors::verify::SinkSeed) -> Result<EventSet, String> {
        let Some(fact) = OFact::from_fact(&seed.fact) else {
            return Ok(EventSet::new());
        };
        let mut events = EventSet::new();
        let mut visited: BTreeSet<State> = BTreeSet::new();
        let mut work: VecDeque<State> = VecDeque::new();
        work.push_back(State {
            stack: vec![],
            func: seed.sink.func.clone(),
            block: seed.sink.block.clone(),
            point: seed.sink.index,
            fact,
        });
        let mut steps = 0usize;
        while let Some(st) = work.pop_front() {
            steps += 1;
            if steps > 1_000_000 {
                return Err("oracle step budget exceeded".to_string());
            }
            if !visited.insert(st.clone()) {
                continue;
            }
            self.step(&st, &mut events, &mut work)?;
        }
        Ok(events)
    }

    fn step(
        &self,
        st: &State,
        events: &mut EventSet,
        work: &mut VecDeque<State>,
    ) -> Result<(), String> {
        let f = self
            .program
            .function(&st.func)
            .ok_or_else(|| format!("oracle: unknown function {}", st.func))?;
        let block = f
            .blocks
            .iter()
            .find(|b| b.label == st.block)
            .ok_or_else(|| format!("oracle: unknown block {}", st.block))?;
        let nphis = block.insts.iter().take_while(|i| i.is_phi()).count();

        if st.point > nphis {
            let idx = st.point - 1;
            let inst = &block.insts[idx];
            let loc = Location::new(&st.func, &st.block, idx);
            if inst.is_call() {
                self.cross_call(st, inst, &loc, events, work)?;
            } else {
                let (facts, evs) = self.local_flow(inst, &st.fact, &loc, &st.func);
                events.extend(evs);
                for fact in facts {
                    work.push_back(State { point: st.point - 1, fact, ..st.clone() });
                }
            }
            return Ok(());
        }

        // Phi boundary. At the entry block this is also the function entry.
        if block.label == f.blocks[0].label {
            self.cross_entry(st, work);
        }
        let preds = self.preds(f, &block.label);
        for pred in preds {
            let mut fact = st.fact.clone();
            let mut alive = true;
            for phi in block.insts.iter().take(nphis) {
                let Inst::Phi { dst, arms, .. } = phi else { unreachable!() };
                if st.fact.base == OBase::Local(dst.clone()) {
                    match arms.iter().find(|(_, l)| *l == pred) {
                        Some((v, _)) => fact = st.fact.rebase(v),
                        None => alive = false,
                    }
                }
            }
            if !alive {
                continue;
            }
            let pred_len = f.blocks.iter().find(|b| b.label == pred).map(|b| b.insts.len());
            if let Some(len) = pred_len {
                work.push_back(State { block: pred.clone(), point: len, fact, ..st.clone() });
            }
        }
        Ok(())
    }

    fn preds(&self, f: &crate::cir::FunctionDef, label: &str) -> Vec<String> {
        let mut out = Vec::new();
        for b in &f.blocks {
            let targets: Vec<&str> = match b.insts.last() {
                Some(Inst::Br { target }) => vec![target.as_str()],
                Some(Inst::CondBr { then_bb, else_bb, .. }) => {
                    vec![then_bb.as_str(), else_bb.as_str()]
                }
                _ => vec![],
            };
            if targets.contains(&label) {
                out.push(b.label.clone());
            }
        }
        out
    }

    /// The fact survived to the current function's entry: return through the
    /// inline stack, or escalate into callers when the stack is empty.
    fn cross_entry(&self, st: &State, work: &mut VecDeque<State>) {
        let f = self.program.function(&st.func).expect("known function");
        let formal_index = match &st.fact.base {
            OBase::Local(name) => {
                match f.params.iter().position(|(p, _)| p == name) {
                    Some(i) => Some(i),
                    None => return, // dead local: not a formal, not a static
                }
            }
            OBase::Static(..) => None,
        };

        if let Some((site, rest)) = st.stack.split_last() {
            let (cf, cb, ci) = site;
            let inst = self.instruction_at(cf, cb, *ci).expect("stack site exists");
            for fact in self.map_to_caller(inst, formal_index, &st.fact) {
                work.push_back(State {
                    stack: rest.to_vec(),
                    func: cf.clone(),
                    block: cb.clone(),
                    point: *ci,
                    fact,
                });
            }
            return;
        }

        let sites = self.callsites_of(&st.func);
        if !sites.is_empty() {
            for (cf, cb, ci) in sites {
                let inst = self.instruction_at(&cf, &cb, ci).expect("callsite exists");
                for fact in self.map_to_caller(inst, formal_index, &st.fact) {
                    work.push_back(State {
                        stack: vec![],
                        func: cf.clone(),
                        block: cb.clone(),
                        point: ci,
                        fact,
                    });
                }
            }
            return;
        }

        // No callers. Static roots may still be initialized by the owning
        // class's static initializer.
        if let (OBase::Static(class, _), true) = (&st.fact.base, self.options.clinit_fallback) {
            if let Some(si) = self.program.class(class).and_then(|c| c.static_init.clone()) {
                if let Some(g) = self.program.function(&si) {
                    for b in &g.blocks {
                        for (i, inst) in b.insts.iter().enumerate() {
                            if matches!(inst, Inst::Ret { .. }) {
                                work.push_back(State {
                                    stack: vec![],
                                    func: si.clone(),
                                    block: b.label.clone(),
                                    point: i,
                                    fact: st.fact.clone(),
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    fn map_to_caller(
        &self,
        callsite: &Inst,
        formal_index: Option<usize>,
        fact: &OFact,
    ) -> Vec<OFact> {
        match formal_index {
            None => vec![fact.clone()], // static root passes through
            Some(i) => {
                let actual: Option<&str> = match callsite {
                    Inst::CallStatic { args, .. } => args.get(i).map(String::as_str),
                    Inst::CallVirtual { recv, args, .. } => {
                        if i == 0 {
                            Some(recv.as_str())
                        } else {
                            args.get(i - 1).map(String::as_str)
                        }
                    }
                    _ => None,
                };
                actual.map(|a| fact.rebase(a)).into_iter().collect()
            }
        }
    }

    fn callsites_of(&self, callee: &str) -> Vec<Site> {
        let mut out = Vec::new();
        for f in &self.program.functions {
            for b in &f.blocks {
                for (i, inst) in b.insts.iter().enumerate() {
                    if !inst.is_call() {
                        continue;
                    }
                    if let Some(CallTarget::Bodies(bodies)) =
                        self.info.call_target(self.program, &f.name, inst)
                    {
                        if bodies.iter().any(|bd| bd == callee) {
                            out.push((f.name.clone(), b.label.clone(), i));
                        }
                    }
                }
            }
        }
        out
    }

    fn instruction_at(&self, func: &str, block: &str, index: usize) -> Option<&Inst> {
        self.program
            .function(func)?
            .blocks
            .iter()
            .find(|b| b.label == block)?
            .insts
            .get(index)
    }

    fn cross_call(
        &self,
        st: &State,
        inst: &Inst,
        loc: &Location,
        events: &mut EventSet,
        work: &mut VecDeque<State>,
    ) -> Result<(), String> {
        let target = self.info.call_target(self.program, &st.func, inst);
        let (dst, recv, args): (Option<&String>, Option<&String>, &Vec<String>) = match inst {
            Inst::CallStatic { dst, args, .. } => (dst.as_ref(), None, args),
            Inst::CallVirtual { dst, recv, args, .. } => (dst.as_ref(), Some(recv), args),
            _ => unreachable!(),
        };
        match target {
            Some(CallTarget::Extern { qualified, .. }) => {
                let (facts, evs) = self.extern_transfer(&st.fact, dst, recv, args, &qualified, loc);
                events.extend(evs);
                for fact in facts {
                    work.push_back(State { point: st.point - 1, fact, ..st.clone() });
                }
                Ok(())
            }
            Some(CallTarget::Bodies(bodies)) => {
                self.descend(st, inst, dst, recv, args, &bodies, work)
            }
            None => {
                work.push_back(State { point: st.point - 1, ..st.clone() });
                Ok(())
            }
        }
    }

    /// Inline semantics for a call with known bodies: result facts enter at
    /// value returns; receiver/argument field paths and statics walk the
    /// whole callee body backward from every return.
    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        st: &State,
        _inst: &Inst,
        dst: Option<&String>,
        recv: Option<&String>,
        args: &[String],
        bodies: &[String],
        work: &mut VecDeque<State>,
    ) -> Result<(), String> {
        let identity = |work: &mut VecDeque<State>| {
            work.push_back(State { point: st.point - 1, ..st.clone() });
        };
        let is_result = matches!(&st.fact.base, OBase::Local(b) if dst == Some(b));
        let entering = match (&st.fact.base, is_result) {
            (_, true) => true,
            (OBase::Static(..), _) => true,
            (OBase::Local(b), _) => {
                let passed = recv == Some(b) || args.contains(b);
                // SSA locals cannot be reassigned by a callee; only field
                // contents can change, so bare locals skip the call.
                passed && !st.fact.fields.is_empty()
            }
        };
        if !entering {
            identity(work);
            return Ok(());
        }
        if st.stack.len() >= self.options.max_inline {
            return Err(format!("inline depth {} exceeded", self.options.max_inline));
        }

        let here: Site = (st.func.clone(), st.block.clone(), st.point - 1);
        for body in bodies {
            if st.stack.iter().any(|(f, _, _)| f == body) || *body == st.func {
                return Err(format!("recursive call into {body}"));
            }
            let Some(g) = self.program.function(body) else { continue };
            let shift = if recv.is_some() { 1 } else { 0 };
            let mapped: Option<OFact> = if is_result {
                None // rebased per return site below
            } else {
                match &st.fact.base {
                    OBase::Static(..) => Some(st.fact.clone()),
                    OBase::Local(b) => {
                        let formal = if recv == Some(b) {
                            g.params.first()
                        } else {
                            args.iter()
                                .position(|a| a == b)
                                .and_then(|i| g.params.get(i + shift))
                        };
                        formal.map(|(name, _)| st.fact.rebase(name))
                    }
                }
            };
            for b in &g.blocks {
                for (i, inst) in b.insts.iter().enumerate() {
                    let Inst::Ret { value } = inst else { continue };
                    let fact = if is_result {
                        match value {
                            Some(v) => st.fact.rebase(v),
                            None => continue,
                        }
                    } else {
                        match &mapped {
                            Some(fct) => fct.clone(),
                            None => continue,
                        }
                    };
                    let mut stack = st.stack.clone();
                    stack.push(here.clone());
                    work.push_back(State {
                        stack,
                        func: body.clone(),
                        block: b.label.clone(),
                        point: i,
                        fact,
                    });
                }
            }
        }
        Ok(())
    }

    /// Library-call transfer with sanitizer/verifier interception and the
    /// three refinement shapes, restated independently of the engine.
    fn extern_transfer(
        &self,
        fact: &OFact,
        dst: Option<&String>,
        recv: Option<&String>,
        args: &[String],
        qualified: &str,
        loc: &Location,
    ) -> (Vec<OFact>, Vec<FlowEvent>) {
        let base = match &fact.base {
            OBase::Local(b) => b,
            OBase::Static(..) => return (vec![fact.clone()], vec![]),
        };
        let is_result = dst == Some(base);
        let is_recv = recv == Some(base);
        let is_arg = args.iter().any(|a| a == base);
        if !is_result && !is_recv && !is_arg {
            return (vec![fact.clone()], vec![]);
        }
        if self.rules.is_sanitizer_api(qualified) || self.rules.is_secure_seed_source(qualified) {
            let secure_seed = self.rules.is_secure_seed_source(qualified);
            return (vec![], vec![FlowEvent::Sanitized { loc: loc.clone(), secure_seed }]);
        }
        if self.rules.is_verifier_api(qualified) {
            return (vec![], vec![FlowEvent::VerifierHit { loc: loc.clone() }]);
        }
        if is_result {
            if self.options.refinements {
                match recv {
                    Some(r) => (vec![fact.rebase(r)], vec![]),
                    None => (vec![], vec![]),
                }
            } else {
                let mut out: Vec<OFact> = recv
                    .into_iter()
                    .map(|r| fact.rebase(r))
                    .chain(args.iter().map(|a| fact.rebase(a)))
                    .collect();
                out.sort();
                out.dedup();
                (out, vec![])
            }
        } else if is_recv && self.options.refinements && dst.is_none() {
            (args.iter().map(|a| fact.rebase(a)).collect(), vec![])
        } else {
            (vec![fact.clone()], vec![])
        }
    }

    /// Ordinary (non-call, non-phi) backward transfer.
    fn local_flow(
        &self,
        inst: &Inst,
        fact: &OFact,
        loc: &Location,
        func: &str,
    ) -> (Vec<OFact>, Vec<FlowEvent>) {
        let id = || (vec![fact.clone()], vec![]);
        let local = |name: &String| fact.base == OBase::Local(name.clone());
        match inst {
            Inst::ConstStr { dst, value } if local(dst) => {
                if fact.fields.is_empty() {
                    (vec![], vec![FlowEvent::constant_str(value.clone(), loc.clone())])
                } else {
                    (vec![], vec![])
                }
            }
            Inst::ConstInt { dst, value } if local(dst) => {
                if fact.fields.is_empty() {
                    (vec![], vec![FlowEvent::constant_int(*value, loc.clone())])
                } else {
                    (vec![], vec![])
                }
            }
            Inst::Load { dst, src } if local(dst) => (vec![fact.rebase(src)], vec![]),
            Inst::Store { value, ptr } if local(ptr) => (vec![fact.rebase(value)], vec![]),
            Inst::BitCast { dst, src, .. } if local(dst) => (vec![fact.rebase(src)], vec![]),
            Inst::GetField { dst, obj, field } if local(dst) => {
                let mut fields = vec![field.clone()];
                fields.extend(fact.fields.iter().cloned());
                fields.truncate(self.options.max_fields);
                (vec![OFact { base: OBase::Local(obj.clone()), fields }], vec![])
            }
            Inst::PutField { obj, field, value }
                if local(obj) && fact.fields.first() == Some(field) =>
            {
                let through =
                    OFact { base: OBase::Local(value.clone()), fields: fact.fields[1..].to_vec() };
                if self.new_bases(func).contains(obj) {
                    (vec![through], vec![])
                } else {
                    (vec![through, fact.clone()], vec![])
                }
            }
            Inst::GetStatic { dst, class, field } if local(dst) => (
                vec![OFact {
                    base: OBase::Static(class.clone(), field.clone()),
                    fields: fact.fields.clone(),
                }],
                vec![],
            ),
            Inst::PutStatic { class, field, value }
                if fact.base == OBase::Static(class.clone(), field.clone()) =>
            {
                (
                    vec![OFact { base: OBase::Local(value.clone()), fields: fact.fields.clone() }],
                    vec![],
                )
            }
            Inst::New { dst, .. } if local(dst) => (vec![], vec![]),
            _ => id(),
        }
    }

    fn new_bases(&self, func: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Some(f) = self.program.function(func) {
            for b in &f.blocks {
                for inst in &b.insts {
                    if let Inst::New { dst, .. } = inst {
                        out.insert(dst.clone());
                    }
                }
            }
        }
        out
    }

    /// Findings over the whole program, in the same digest form as
    /// [`report_keys`]; `Err` marks the program as outside the oracle's
    /// envelope (deep inlining or recursion).
    pub fn findings(&self) -> Result<BTreeSet<FindingKey>, String> {
        let mut out = BTreeSet::new();
        for seed in match_sinks(self.program, self.info, self.rules) {
            let events = self.events_for_seed(&seed)?;
            let Some(rule) = self.rules.sink_by_id(&seed.rule_id) else { continue };
            if let Some(v) = apply_verifying_rule(
                &events,
                rule,
                self.rules,
                self.info,
                self.options.parse_conversion,
            ) {
                let mut literals: Vec<String> =
                    v.sources.iter().map(|s| s.literal.clone()).collect();
                literals.sort();
                out.insert(FindingKey {
                    rule_id: seed.rule_id.clone(),
                    sink: seed.sink.clone(),
                    literals,
                });
            } else if classify_prng(&events).is_some() {
                out.insert(FindingKey {
                    rule_id: "R1".to_string(),
                    sink: seed.sink.clone(),
                    literals: vec!["<weak-prng>".to_string()],
                });
            }
        }
        Ok(out)
    }

    /// Per-seed material events keyed by sink, for event-level differential
    /// comparison against the summary-based engine.
    pub fn events_by_seed(&self) -> Result<BTreeMap<(String, Location), EventSet>, String> {
        let mut out = BTreeMap::new();
        for seed in match_sinks(self.program, self.info, self.rules) {
            let events = self.events_for_seed(&seed)?;
            out.insert((seed.rule_id.clone(), seed.sink.clone()), material(&events));
        }
        Ok(out)
    }
}

/// Strips bookkeeping events, keeping only sources and interceptions.
pub fn material(events: &EventSet) -> EventSet {
    events
        .iter()
        .filter(|e| {
            matches!(
                e,
                FlowEvent::ConstantSource { .. }
                    | FlowEvent::Sanitized { .. }
                    | FlowEvent::VerifierHit { .. }
            )
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchkit::CORPUS;

    fn oracle_keys(source: &str, name: &str) -> BTreeSet<FindingKey> {
        let p = crate::cir::parse_program_named(source, name).unwrap();
        let info = ProgramInfo::build(&p);
        let rules = RuleSet::default();
        let oracle =
            Oracle { program: &p, info: &info, rules: &rules, options: OracleOptions::default() };
        oracle.findings().unwrap()
    }

    #[test]
    fn oracle_finds_default_key_chain() {
        let case = CORPUS.iter().find(|c| c.name == "default_key_chain").unwrap();
        let keys = oracle_keys(case.source, case.name);
        assert_eq!(keys.len(), 1);
        let k = keys.iter().next().unwrap();
        assert_eq!(k.rule_id, "R6");
        assert_eq!(k.literals, vec!["defaultkey".to_string()]);
    }

    #[test]
    fn oracle_silent_on_secure_basic_case() {
        let case = CORPUS.iter().find(|c| c.name == "secure_random_key").unwrap();
        assert!(oracle_keys(case.source, case.name).is_empty());
    }

    #[test]
    fn oracle_rejects_recursion() {
        let src = r#"
extern class javax.crypto.spec.SecretKeySpec
extern func @javax.crypto.spec.SecretKeySpec.<init>(bytes, String) -> void
func @loop(%x: String) -> String {
  bb0:
    %r = call @loop(%x)
    ret %r
}
func @main(%s: String) -> void {
  bb0:
    %key = call @loop(%s)
    %alg = const.str "AES"
    %ks = new javax.crypto.spec.SecretKeySpec
    callv %ks .<init>(%key, %alg)
    ret
}
"#;
        let p = crate::cir::parse_program(src).unwrap();
        let info = ProgramInfo::build(&p);
        let rules = RuleSet::default();
        let oracle =
            Oracle { program: &p, info: &info, rules: &rules, options: OracleOptions::default() };
        assert!(oracle.findings().is_err());
    }
}
