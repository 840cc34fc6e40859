//! The five backward flow functions. All transfers are stated use→def: a
//! fact holding *after* an instruction is mapped to the facts holding
//! *before* it.

use super::summary::{SummaryKey, SummaryStatus, SummaryStore};
use super::{AccessPath, DataFact, EntryFact, FactBase, FlowEvent};
use crate::cir::{Inst, Location};
use crate::detectors::rules::RuleSet;
use std::collections::BTreeSet;

/// Per-function context needed by the ordinary transfer function.
pub struct FlowCtx<'a> {
    /// Location of the instruction being crossed (for source events).
    pub loc: Location,
    /// Values defined by `new` in the current function: eligible for strong
    /// field updates.
    pub new_bases: &'a BTreeSet<String>,
    /// Access-path depth bound K.
    pub max_k: usize,
}

/// Backward transfer for non-call, non-phi instructions.
pub fn flow(inst: &Inst, fact: &DataFact, ctx: &FlowCtx) -> (Vec<DataFact>, Vec<FlowEvent>) {
    debug_assert!(!inst.is_call() && !inst.is_phi(), "flow() got a call/phi");
    let Some(path) = fact.path() else { return (vec![fact.clone()], vec![]) };
    let id = || (vec![fact.clone()], vec![]);
    match inst {
        Inst::ConstStr { dst, value } => match &path.base {
            FactBase::Local(b) if b == dst => {
                if path.fields.is_empty() {
                    (vec![], vec![FlowEvent::constant_str(value.clone(), ctx.loc.clone())])
                } else {
                    // A field of a string constant is not a source.
                    (vec![], vec![])
                }
            }
            _ => id(),
        },
        Inst::ConstInt { dst, value } => match &path.base {
            FactBase::Local(b) if b == dst => {
                if path.fields.is_empty() {
                    (vec![], vec![FlowEvent::constant_int(*value, ctx.loc.clone())])
                } else {
                    (vec![], vec![])
                }
            }
            _ => id(),
        },
        Inst::Load { dst, src } => match &path.base {
            FactBase::Local(b) if b == dst => (vec![DataFact::Path(path.rebase_local(src))], vec![]),
            _ => id(),
        },
        Inst::Store { value, ptr } => match &path.base {
            // Strong update: the stored-to slot is killed, tracing continues
            // on the stored value.
            FactBase::Local(b) if b == ptr => {
                (vec![DataFact::Path(path.rebase_local(value))], vec![])
            }
            _ => id(),
        },
        Inst::BitCast { dst, src, .. } => match &path.base {
            FactBase::Local(b) if b == dst => (vec![DataFact::Path(path.rebase_local(src))], vec![]),
            _ => id(),
        },
        Inst::GetField { dst, obj, field } => match &path.base {
            FactBase::Local(b) if b == dst => {
                let obj_path = AccessPath::local(obj).with_fields(path.fields.clone());
                (vec![DataFact::Path(obj_path.push_front(field, ctx.max_k))], vec![])
            }
            _ => id(),
        },
        Inst::PutField { obj, field, value } => match &path.base {
            FactBase::Local(b) if b == obj && path.fields.first().map(String::as_str) == Some(field) => {
                let through =
                    DataFact::Path(AccessPath::local(value).with_fields(path.pop_front()));
                if ctx.new_bases.contains(obj) {
                    // Locally allocated base: this write is the only definition
                    // the path can see — strong update.
                    (vec![through], vec![])
                } else {
                    // Unknown aliasing: keep the field path alive too.
                    (vec![through, fact.clone()], vec![])
                }
            }
            _ => id(),
        },
        Inst::GetStatic { dst, class, field } => match &path.base {
            FactBase::Local(b) if b == dst => (
                vec![DataFact::Path(
                    AccessPath::statik(class.clone(), field.clone())
                        .with_fields(path.fields.clone()),
                )],
                vec![],
            ),
            _ => id(),
        },
        Inst::PutStatic { class, field, value } => match &path.base {
            FactBase::Static { class: c, field: f } if c == class && f == field => {
                // Statics are single locations: the write resolves the fact.
                (vec![DataFact::Path(AccessPath::local(value).with_fields(path.fields.clone()))], vec![])
            }
            _ => id(),
        },
        Inst::New { dst, .. } => match &path.base {
            // Freshly allocated object: nothing flowed in before this point.
            FactBase::Local(b) if b == dst => (vec![], vec![]),
            _ => id(),
        },
        // Terminators define nothing.
        Inst::Ret { .. } | Inst::Br { .. } | Inst::CondBr { .. } | Inst::Throw { .. } => id(),
        Inst::Phi { .. } | Inst::CallStatic { .. } | Inst::CallVirtual { .. } => id(),
    }
}

/// Backward transfer across one phi for a specific incoming edge.
pub fn phi_flow(inst: &Inst, fact: &DataFact, predecessor_edge: &str) -> Vec<DataFact> {
    let Inst::Phi { dst, arms, .. } = inst else {
        debug_assert!(false, "phi_flow() got a non-phi");
        return vec![fact.clone()];
    };
    let Some(path) = fact.path() else { return vec![fact.clone()] };
    match &path.base {
        FactBase::Local(b) if b == dst => {
            match arms.iter().find(|(_, l)| l == predecessor_edge) {
                Some((v, _)) => vec![DataFact::Path(path.rebase_local(v))],
                None => {
                    debug_assert!(false, "edge {predecessor_edge} not among phi arms");
                    vec![]
                }
            }
        }
        _ => vec![fact.clone()],
    }
}

/// Maps a callee entry fact into the caller's frame at a callsite: formal i
/// becomes actual argument i (receiver = formal 0 of instance methods),
/// static roots pass through unchanged.
pub fn pass_args(callsite: &Inst, entry_fact: &EntryFact) -> Vec<DataFact> {
    match entry_fact {
        EntryFact::Static { class, field, fields } => {
            vec![DataFact::Path(
                AccessPath::statik(class.clone(), field.clone()).with_fields(fields.clone()),
            )]
        }
        EntryFact::Formal { index, fields } => {
            let actual: Option<&str> = match callsite {
                Inst::CallStatic { args, .. } => args.get(*index).map(String::as_str),
                Inst::CallVirtual { recv, args, .. } => {
                    if *index == 0 {
                        Some(recv.as_str())
                    } else {
                        args.get(*index - 1).map(String::as_str)
                    }
                }
                _ => None,
            };
            match actual {
                Some(a) => vec![DataFact::Path(AccessPath::local(a).with_fields(fields.clone()))],
                None => vec![],
            }
        }
    }
}

/// Which summary key (if any) a caller-side fact queries at a callsite with
/// known bodies; `None` means the call cannot affect the fact (identity).
pub fn summary_key_for(callsite: &Inst, fact: &DataFact) -> Option<SummaryKey> {
    let path = fact.path()?;
    match &path.base {
        FactBase::Static { class, field } => Some(SummaryKey::Static {
            class: class.clone(),
            field: field.clone(),
            fields: path.fields.clone(),
        }),
        FactBase::Local(b) => {
            let (dst, recv, args): (Option<&String>, Option<&String>, &Vec<String>) = match callsite
            {
                Inst::CallStatic { dst, args, .. } => (dst.as_ref(), None, args),
                Inst::CallVirtual { dst, recv, args, .. } => (dst.as_ref(), Some(recv), args),
                _ => return None,
            };
            if dst == Some(b) {
                return Some(SummaryKey::Ret { fields: path.fields.clone() });
            }
            // SSA locals cannot be reassigned by the callee; only their field
            // contents can.
            if path.fields.is_empty() {
                return None;
            }
            let shift = if recv.is_some() { 1 } else { 0 };
            if recv.map(String::as_str) == Some(b.as_str()) {
                return Some(SummaryKey::Formal { index: 0, fields: path.fields.clone() });
            }
            args.iter()
                .position(|a| a == b)
                .map(|i| SummaryKey::Formal { index: i + shift, fields: path.fields.clone() })
        }
    }
}

/// Query callee summaries for a fact crossing a callsite with known bodies.
/// Returns the caller-side facts before the call plus the callee's recorded
/// events.
pub fn return_val(
    callsite: &Inst,
    fact: &DataFact,
    bodies: &[String],
    store: &SummaryStore,
) -> (Vec<DataFact>, Vec<FlowEvent>) {
    let Some(key) = summary_key_for(callsite, fact) else {
        return (vec![fact.clone()], vec![]);
    };
    let mut facts = Vec::new();
    let mut events = Vec::new();
    for body in bodies {
        match store.edge(body, &key) {
            Some(edge) => {
                for ef in &edge.entry_facts {
                    facts.extend(pass_args(callsite, ef));
                }
                events.extend(edge.events.iter().cloned());
            }
            None => match (store.status(body), &key) {
                // A completed callee with no edge for this key never touches
                // the path: the fact passes through unchanged — except return
                // values, which the callee fully determines.
                (SummaryStatus::Done, SummaryKey::Ret { .. }) => {}
                (SummaryStatus::Done, _) => facts.push(fact.clone()),
                // In-progress SCC member: absent edges mean "nothing known
                // yet"; the fixpoint iteration will re-run the caller.
                _ => {}
            },
        }
    }
    facts.sort();
    facts.dedup();
    (facts, events)
}

/// Backward transfer across an extern callsite (no body available), with
/// optional refinements and sanitizer/verifier interception.
pub fn call_flow(
    callsite: &Inst,
    fact: &DataFact,
    qualified: &str,
    refinements_on: bool,
    rules: &RuleSet,
    loc: &Location,
) -> (Vec<DataFact>, Vec<FlowEvent>) {
    let Some(path) = fact.path() else { return (vec![fact.clone()], vec![]) };
    let id = || (vec![fact.clone()], vec![]);
    let (dst, recv, args): (Option<&String>, Option<&String>, &Vec<String>) = match callsite {
        Inst::CallStatic { dst, args, .. } => (dst.as_ref(), None, args),
        Inst::CallVirtual { dst, recv, args, .. } => (dst.as_ref(), Some(recv), args),
        _ => {
            debug_assert!(false, "call_flow() got a non-call");
            return id();
        }
    };
    let base = match &path.base {
        FactBase::Local(b) => b,
        // Extern code cannot touch program statics.
        FactBase::Static { .. } => return id(),
    };
    let is_result = dst == Some(base);
    let is_recv = recv == Some(base);
    let is_arg = args.iter().any(|a| a == base);
    if !is_result && !is_recv && !is_arg {
        return id();
    }

    // Sanitizer / verifier interception applies in both modes: tracing ends
    // here regardless of refinement settings.
    if rules.is_sanitizer_api(qualified) || rules.is_secure_seed_source(qualified) {
        let secure_seed = rules.is_secure_seed_source(qualified);
        return (vec![], vec![FlowEvent::Sanitized { loc: loc.clone(), secure_seed }]);
    }
    if rules.is_verifier_api(qualified) {
        return (vec![], vec![FlowEvent::VerifierHit { loc: loc.clone() }]);
    }

    let rebase = |v: &str| DataFact::Path(path.rebase_local(v));
    if is_result {
        if refinements_on {
            match recv {
                // Virtual with result: only the object edge survives; the
                // argument→result edges are pseudo-influences.
                Some(r) => (vec![rebase(r)], vec![]),
                // Static with result: the result is the library's own value.
                None => (vec![], vec![]),
            }
        } else {
            let mut out: Vec<DataFact> = Vec::new();
            if let Some(r) = recv {
                out.push(rebase(r));
            }
            out.extend(args.iter().map(|a| rebase(a)));
            out.sort();
            out.dedup();
            (out, vec![])
        }
    } else if is_recv {
        if refinements_on && dst.is_none() {
            // Virtual without result: the call initialized the object from
            // its arguments — stop tracing the object, trace the arguments.
            (args.iter().map(|a| rebase(a)).collect(), vec![])
        } else {
            id()
        }
    } else {
        // Plain argument: SSA values are not reassigned by callees.
        id()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::Location;

    fn loc() -> Location {
        Location::new("f", "bb0", 0)
    }

    fn ctx<'a>(new_bases: &'a BTreeSet<String>) -> FlowCtx<'a> {
        FlowCtx { loc: loc(), new_bases, max_k: 2 }
    }

    #[test]
    fn const_str_is_terminal_source() {
        let nb = BTreeSet::new();
        let inst = Inst::ConstStr { dst: "kb".into(), value: "defaultkey".into() };
        let (facts, events) = flow(&inst, &DataFact::local("kb"), &ctx(&nb));
        assert!(facts.is_empty());
        assert_eq!(events, vec![FlowEvent::constant_str("defaultkey", loc())]);
    }

    #[test]
    fn store_unrelated_fact_identity() {
        let nb = BTreeSet::new();
        let inst = Inst::Store { value: "v".into(), ptr: "p".into() };
        let (facts, events) = flow(&inst, &DataFact::local("q"), &ctx(&nb));
        assert_eq!(facts, vec![DataFact::local("q")]);
        assert!(events.is_empty());
    }

    #[test]
    fn putfield_weak_update_keeps_path() {
        let nb = BTreeSet::new(); // %o is a formal, not locally New'd
        let inst = Inst::PutField { obj: "o".into(), field: "key".into(), value: "v".into() };
        let fact = DataFact::Path(AccessPath::local("o").with_fields(vec!["key".into()]));
        let (facts, _) = flow(&inst, &fact, &ctx(&nb));
        assert!(facts.contains(&DataFact::local("v")));
        assert!(facts.contains(&fact));
        assert_eq!(facts.len(), 2);
    }

    #[test]
    fn putfield_strong_update_on_new_base() {
        let nb: BTreeSet<String> = BTreeSet::from(["o".to_string()]);
        let inst = Inst::PutField { obj: "o".into(), field: "key".into(), value: "v".into() };
        let fact = DataFact::Path(AccessPath::local("o").with_fields(vec!["key".into()]));
        let (facts, _) = flow(&inst, &fact, &ctx(&nb));
        assert_eq!(facts, vec![DataFact::local("v")]);
    }

    #[test]
    fn phi_selects_arm_for_edge() {
        let inst = Inst::Phi {
            dst: "k".into(),
            ty: crate::cir::TypeRef::Str,
            arms: vec![("c1".into(), "bb1".into()), ("c2".into(), "bb2".into())],
        };
        assert_eq!(phi_flow(&inst, &DataFact::local("k"), "bb1"), vec![DataFact::local("c1")]);
        assert_eq!(phi_flow(&inst, &DataFact::local("z"), "bb1"), vec![DataFact::local("z")]);
    }

    #[test]
    fn pass_args_maps_formals_and_statics() {
        let call = Inst::CallVirtual {
            dst: None,
            recv: "crypto".into(),
            method: "m".into(),
            args: vec!["a".into()],
        };
        let recv_fact =
            EntryFact::Formal { index: 0, fields: vec!["defaultKey".into()] };
        assert_eq!(
            pass_args(&call, &recv_fact),
            vec![DataFact::Path(
                AccessPath::local("crypto").with_fields(vec!["defaultKey".into()])
            )]
        );
        let st = EntryFact::Static { class: "C".into(), field: "count".into(), fields: vec![] };
        assert_eq!(pass_args(&call, &st), vec![DataFact::Path(AccessPath::statik("C", "count"))]);
    }

    #[test]
    fn refined_virtual_result_keeps_only_receiver() {
        let rules = RuleSet::default();
        let call = Inst::CallVirtual {
            dst: Some("kb".into()),
            recv: "key".into(),
            method: "getBytes".into(),
            args: vec!["enc".into()],
        };
        let (facts, events) =
            call_flow(&call, &DataFact::local("kb"), "String.getBytes", true, &rules, &loc());
        assert_eq!(facts, vec![DataFact::local("key")]);
        assert!(events.is_empty());
        // Unrefined: receiver and argument both flow.
        let (facts, _) =
            call_flow(&call, &DataFact::local("kb"), "String.getBytes", false, &rules, &loc());
        assert_eq!(facts, vec![DataFact::local("enc"), DataFact::local("key")]);
    }

    #[test]
    fn refined_no_result_virtual_traces_arguments() {
        let rules = RuleSet::default();
        let call = Inst::CallVirtual {
            dst: None,
            recv: "ks".into(),
            method: "load".into(),
            args: vec!["stream".into(), "pw".into()],
        };
        let (facts, _) = call_flow(
            &call,
            &DataFact::local("ks"),
            "java.security.KeyStore.load",
            true,
            &rules,
            &loc(),
        );
        assert_eq!(facts, vec![DataFact::local("stream"), DataFact::local("pw")]);
    }

    #[test]
    fn sanitizer_and_verifier_intercept() {
        let rules = RuleSet::default();
        let call = Inst::CallVirtual {
            dst: Some("n".into()),
            recv: "rnd".into(),
            method: "nextInt".into(),
            args: vec![],
        };
        let (facts, events) = call_flow(
            &call,
            &DataFact::local("n"),
            "java.security.SecureRandom.nextInt",
            true,
            &rules,
            &loc(),
        );
        assert!(facts.is_empty());
        assert_eq!(events, vec![FlowEvent::Sanitized { loc: loc(), secure_seed: false }]);
        let (facts, events) = call_flow(
            &call,
            &DataFact::local("n"),
            "java.util.Random.nextInt",
            true,
            &rules,
            &loc(),
        );
        assert!(facts.is_empty());
        assert_eq!(events, vec![FlowEvent::VerifierHit { loc: loc() }]);
    }

    #[test]
    fn secure_seed_source_marks_sanitized() {
        let rules = RuleSet::default();
        let call = Inst::CallVirtual {
            dst: Some("seed".into()),
            recv: "sr".into(),
            method: "generateSeed".into(),
            args: vec!["n".into()],
        };
        let (_, events) = call_flow(
            &call,
            &DataFact::local("seed"),
            "java.security.SecureRandom.generateSeed",
            true,
            &rules,
            &loc(),
        );
        assert_eq!(events, vec![FlowEvent::Sanitized { loc: loc(), secure_seed: true }]);
    }

    #[test]
    fn static_call_result_refined_dies() {
        let rules = RuleSet::default();
        let call = Inst::CallStatic {
            dst: Some("v".into()),
            callee: "java.lang.System.getProperty".into(),
            args: vec!["name".into()],
        };
        let (facts, events) = call_flow(
            &call,
            &DataFact::local("v"),
            "java.lang.System.getProperty",
            true,
            &rules,
            &loc(),
        );
        assert!(facts.is_empty() && events.is_empty());
        let (facts, _) = call_flow(
            &call,
            &DataFact::local("v"),
            "java.lang.System.getProperty",
            false,
            &rules,
            &loc(),
        );
        assert_eq!(facts, vec![DataFact::local("name")]);
    }
}
