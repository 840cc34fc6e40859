//! Group-1 machinery: sink matching (layer-0 seeds) and the verifying rules
//! applied to the constant sources the solver discovers. Also Group-3 PRNG
//! classification.

use super::rules::{CheckKind, RuleSet, SinkRule};
use crate::cir::{is_castable, CallTarget, Inst, Location, Program, ProgramInfo, TypeRef};
use crate::ifds::{DataFact, EventSet, FlowEvent, LiteralType};

/// A layer-0 task: one (callsite, rule) pair with the traced argument fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkSeed {
    pub rule_id: String,
    pub sink: Location,
    pub fact: DataFact,
}

/// Scans every callsite for rule-matching extern APIs; one seed per
/// (callsite, matching rule), in program order then catalog order.
pub fn match_sinks(p: &Program, info: &ProgramInfo, rules: &RuleSet) -> Vec<SinkSeed> {
    let mut seeds = Vec::new();
    for f in &p.functions {
        for b in &f.blocks {
            for (i, inst) in b.insts.iter().enumerate() {
                if !inst.is_call() {
                    continue;
                }
                let Some(CallTarget::Extern { qualified, .. }) =
                    info.call_target(p, &f.name, inst)
                else {
                    continue;
                };
                for rule in &rules.sinks {
                    if rule.api != qualified {
                        continue;
                    }
                    let traced: Option<&str> = match inst {
                        Inst::CallStatic { args, .. } => {
                            usize::try_from(rule.arg_index).ok().and_then(|x| args.get(x)).map(String::as_str)
                        }
                        Inst::CallVirtual { recv, args, .. } => {
                            if rule.arg_index < 0 {
                                Some(recv.as_str())
                            } else {
                                args.get(rule.arg_index as usize).map(String::as_str)
                            }
                        }
                        _ => None,
                    };
                    if let Some(v) = traced {
                        seeds.push(SinkSeed {
                            rule_id: rule.rule_id.clone(),
                            sink: Location::new(f.name.clone(), b.label.clone(), i),
                            fact: DataFact::local(v),
                        });
                    }
                }
            }
        }
    }
    seeds
}

/// One flagged source backing a violation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SourceRef {
    pub literal: String,
    pub ty: TypeRef,
    pub loc: Location,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub reason: String,
    pub sources: Vec<SourceRef>,
}

/// Whether a literal of the solver-reported type can actually occupy the
/// sink's expected argument type. The conversions beyond `is_castable` model
/// Java coercions the IR elides: String/int encode into byte material, and —
/// with the parse conversion enabled — numeric strings into numbers.
fn literal_compatible(
    lt: LiteralType,
    literal: &str,
    expected: &TypeRef,
    info: &ProgramInfo,
    parse_conversion: bool,
) -> bool {
    let from = lt.type_ref();
    if from == *expected || is_castable(&from, expected, info) {
        return true;
    }
    match (lt, expected) {
        (LiteralType::Str, TypeRef::Bytes) => true,
        (LiteralType::Int, TypeRef::Bytes) => true,
        (LiteralType::Str, t) if t.is_numeric() => {
            parse_conversion && literal.trim().parse::<i64>().is_ok()
        }
        _ => false,
    }
}

fn cipher_spec_reason(spec: &str, rules: &RuleSet) -> Option<String> {
    let parts: Vec<&str> = spec.split('/').collect();
    let alg = parts[0];
    let in_ci = |set: &std::collections::BTreeSet<String>, x: &str| {
        set.iter().any(|s| s.eq_ignore_ascii_case(x))
    };
    if in_ci(&rules.weak_ciphers, alg) {
        return Some(format!("weak cipher algorithm \"{alg}\""));
    }
    if parts.len() >= 2 && parts[1].eq_ignore_ascii_case("ECB") {
        return Some("ECB mode".to_string());
    }
    if parts.len() == 1 && in_ci(&rules.block_ciphers, alg) {
        return Some(format!("block cipher \"{alg}\" defaults to ECB mode"));
    }
    None
}

/// Applies a rule's verifying check to the solver's event set for one seed.
/// Pure in (events, rule, rules, type table); `parse_conversion` is the
/// fixed-fidelity numeric-string coercion.
pub fn apply_verifying_rule(
    events: &EventSet,
    rule: &SinkRule,
    rules: &RuleSet,
    info: &ProgramInfo,
    parse_conversion: bool,
) -> Option<Violation> {
    let constants = || {
        events.iter().filter_map(|e| match e {
            FlowEvent::ConstantSource { literal, ty, loc }
                if literal_compatible(*ty, literal, &rule.expected_type, info, parse_conversion) =>
            {
                Some((literal.clone(), *ty, loc.clone()))
            }
            _ => None,
        })
    };
    let source = |(literal, ty, loc): (String, LiteralType, Location)| SourceRef {
        literal,
        ty: ty.type_ref(),
        loc,
    };
    match rule.check {
        CheckKind::Constant | CheckKind::KeyMaterial => {
            let sources: Vec<SourceRef> = constants().map(source).collect();
            if sources.is_empty() {
                return None;
            }
            let what = if rule.check == CheckKind::KeyMaterial {
                "hardcoded key material"
            } else {
                "hardcoded constant"
            };
            Some(Violation { reason: what.to_string(), sources })
        }
        CheckKind::CipherSpec => {
            let mut sources = Vec::new();
            let mut reason = None;
            for c in constants() {
                if let Some(r) = cipher_spec_reason(&c.0, rules) {
                    reason.get_or_insert(r);
                    sources.push(source(c));
                }
            }
            reason.map(|reason| Violation { reason, sources })
        }
        CheckKind::HashSpec => {
            let mut sources = Vec::new();
            for c in constants() {
                if rules.weak_hashes.iter().any(|h| h.eq_ignore_ascii_case(&c.0)) {
                    sources.push(source(c));
                }
            }
            if sources.is_empty() {
                None
            } else {
                let algs: Vec<&str> = sources.iter().map(|s| s.literal.as_str()).collect();
                Some(Violation { reason: format!("weak hash algorithm \"{}\"", algs.join("\", \"")), sources })
            }
        }
        CheckKind::MinInt => {
            let mut sources = Vec::new();
            for c in constants() {
                let value: Option<i64> = match c.1 {
                    LiteralType::Int => c.0.parse().ok(),
                    LiteralType::Str => {
                        if parse_conversion {
                            c.0.trim().parse().ok()
                        } else {
                            None
                        }
                    }
                };
                if let Some(v) = value {
                    if v < rules.min_iteration {
                        sources.push(source(c));
                    }
                }
            }
            if sources.is_empty() {
                None
            } else {
                Some(Violation {
                    reason: format!("iteration count below {}", rules.min_iteration),
                    sources,
                })
            }
        }
        CheckKind::SeedSource => {
            let const_sources: Vec<SourceRef> = constants().map(source).collect();
            if !const_sources.is_empty() {
                return Some(Violation { reason: "hardcoded seed".to_string(), sources: const_sources });
            }
            // Any origin other than a secure seed source is insufficient.
            for e in events {
                match e {
                    FlowEvent::Sanitized { secure_seed: true, .. } => {}
                    FlowEvent::Sanitized { loc, secure_seed: false } => {
                        return Some(Violation {
                            reason: "seed not obtained from a secure seed source".to_string(),
                            sources: vec![SourceRef {
                                literal: "<prng-output>".to_string(),
                                ty: TypeRef::Bytes,
                                loc: loc.clone(),
                            }],
                        });
                    }
                    FlowEvent::VerifierHit { loc } => {
                        return Some(Violation {
                            reason: "seed derived from a weak PRNG".to_string(),
                            sources: vec![SourceRef {
                                literal: "<weak-prng-output>".to_string(),
                                ty: TypeRef::Bytes,
                                loc: loc.clone(),
                            }],
                        });
                    }
                    _ => {}
                }
            }
            None
        }
    }
}

/// Group 3: a Random (verifier) reaching any Group-1 sink is a weak-PRNG
/// finding at that sink; Random usages that never reach a sink are ignored.
pub fn classify_prng(events: &EventSet) -> Option<Location> {
    events.iter().find_map(|e| match e {
        FlowEvent::VerifierHit { loc } => Some(loc.clone()),
        _ => None,
    })
}
