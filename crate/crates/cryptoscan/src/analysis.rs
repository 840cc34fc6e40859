//! End-to-end pipeline: summarize bottom-up, seed sinks, escalate through
//! callers, apply verifying rules and pattern checks, and assemble the
//! deterministic report.

use crate::callgraph::CallGraph;
use crate::cir::{Program, ProgramInfo};
use crate::detectors::rules::RuleSet;
use crate::detectors::verify::{classify_prng, match_sinks, SinkSeed};
use crate::detectors::{run_patterns, SourceRef};
use crate::ifds::{summarize_program, EngineConfig, FlowEvent, Solver};
use crate::report::{ConfigEcho, Finding, RunReport, SourceJson};
use crate::scheduler::{aggregate_outcome, CandidateResult, Outcome, Scheduler, SchedulerConfig, UnresolvedReason};
use rayon::prelude::*;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    /// Replicates the published tool's behavior, including its two known
    /// false-negative classes (strict literal typing, no staticinit roots).
    Paper,
    /// Default: numeric-string coercion and staticinit fallback enabled.
    Fixed,
}

impl Fidelity {
    pub fn as_str(self) -> &'static str {
        match self {
            Fidelity::Paper => "paper",
            Fidelity::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalysisOptions {
    pub refinements: bool,
    pub fidelity: Fidelity,
    pub library_mode: bool,
    pub max_layers: usize,
    pub workers: usize,
    pub max_access_path: usize,
    pub budget: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            refinements: true,
            fidelity: Fidelity::Fixed,
            library_mode: false,
            max_layers: 20,
            workers: 1,
            max_access_path: 2,
            budget: 100_000,
        }
    }
}

pub fn analyze(p: &Program, rules: &RuleSet, opts: &AnalysisOptions) -> RunReport {
    let start = Instant::now();
    let mut report = RunReport::new(ConfigEcho {
        refinements: opts.refinements,
        fidelity: opts.fidelity.as_str().to_string(),
        library_mode: opts.library_mode,
    });

    let info = ProgramInfo::build(p);
    let cg = CallGraph::build(p, &info);
    let solver = Solver {
        program: p,
        info: &info,
        rules,
        config: EngineConfig {
            refinements: opts.refinements,
            max_k: opts.max_access_path,
            budget: opts.budget,
        },
    };
    let store = summarize_program(p, &info, &cg, &solver);
    report.budget_exhausted |= store.budget_exceeded;

    let seeds = match_sinks(p, &info, rules);
    let sched = Scheduler {
        solver: &solver,
        callgraph: &cg,
        store: &store,
        config: SchedulerConfig {
            max_layers: opts.max_layers,
            library_mode: opts.library_mode,
            clinit_fallback: opts.fidelity == Fidelity::Fixed,
        },
    };

    let candidates: Vec<CandidateResult> = if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .expect("worker pool");
        pool.install(|| seeds.par_iter().map(|s| sched.run_candidate(s)).collect())
    } else {
        seeds.iter().map(|s| sched.run_candidate(s)).collect()
    };

    let parse_conversion = opts.fidelity == Fidelity::Fixed;
    let file_of = |func: &str| p.function(func).map(|f| f.file.clone()).unwrap_or_default();
    for (seed, cand) in seeds.iter().zip(&candidates) {
        let Some(rule) = rules.sink_by_id(&seed.rule_id) else { continue };
        report.stats.layers_used = report.stats.layers_used.max(cand.layers_used);
        if cand.unresolved.contains(&UnresolvedReason::Budget) {
            report.budget_exhausted = true;
        }
        match aggregate_outcome(cand, rule, rules, &info, parse_conversion) {
            Outcome::BugVerified { violation } => {
                report.findings.push(group1_finding(seed, rule.cwe, &rule.severity, &violation.sources, cand));
            }
            Outcome::Unresolved { .. } => {
                report.stats.unresolved_count += 1;
                maybe_prng_finding(&mut report, seed, cand, &file_of);
            }
            Outcome::SanitizedNoBug => {
                maybe_prng_finding(&mut report, seed, cand, &file_of);
            }
        }
    }
    for f in &mut report.findings {
        if f.file.is_empty() {
            f.file = file_of(&f.sink.func);
        }
    }

    for pr in run_patterns(p, &info, rules) {
        report.findings.push(Finding {
            rule_id: pr.pattern.rule_id().to_string(),
            cwe: 295,
            severity: "high".to_string(),
            sink: pr.witnesses[0].clone(),
            sources: vec![],
            trace: pr.witnesses.clone(),
            disposition: "pattern".to_string(),
            file: file_of(&pr.function),
        });
    }

    report.stats.functions_analyzed = p.functions.len();
    report.stats.seeds_created = seeds.len();
    report.stats.summaries_computed = store.functions_summarized();
    report.normalize();
    report.stats.elapsed = start.elapsed().as_secs_f64();
    report
}

fn group1_finding(
    seed: &SinkSeed,
    cwe: u32,
    severity: &str,
    sources: &[SourceRef],
    cand: &CandidateResult,
) -> Finding {
    let mut trace = Vec::new();
    for s in sources {
        // Recover the witness path of the event that produced this source.
        for (ev, t) in &cand.event_traces {
            let matches = match ev {
                FlowEvent::ConstantSource { literal, loc, .. } => {
                    *literal == s.literal && *loc == s.loc
                }
                FlowEvent::Sanitized { loc, .. } | FlowEvent::VerifierHit { loc } => *loc == s.loc,
                _ => false,
            };
            if matches {
                trace.extend(t.iter().cloned());
            }
        }
    }
    Finding {
        rule_id: seed.rule_id.clone(),
        cwe,
        severity: severity.to_string(),
        sink: seed.sink.clone(),
        sources: sources
            .iter()
            .map(|s| SourceJson {
                literal: s.literal.clone(),
                ty: s.ty.to_string(),
                loc: s.loc.clone(),
            })
            .collect(),
        trace,
        disposition: "verified".to_string(),
        file: String::new(),
    }
}

/// Group 3: a weak PRNG feeding this sink is reported once, at the sink,
/// when the sink's own rule did not already turn it into a violation.
fn maybe_prng_finding(
    report: &mut RunReport,
    seed: &SinkSeed,
    cand: &CandidateResult,
    file_of: &dyn Fn(&str) -> String,
) {
    let Some(loc) = classify_prng(&cand.events) else { return };
    let trace = cand
        .event_traces
        .iter()
        .find(|(ev, _)| matches!(ev, FlowEvent::VerifierHit { loc: l } if *l == loc))
        .map(|(_, t)| t.clone())
        .unwrap_or_default();
    report.findings.push(Finding {
        rule_id: "R1".to_string(),
        cwe: 338,
        severity: "medium".to_string(),
        sink: seed.sink.clone(),
        sources: vec![SourceJson {
            literal: "<weak-prng>".to_string(),
            ty: "bytes".to_string(),
            loc: loc.clone(),
        }],
        trace,
        disposition: "verified".to_string(),
        file: file_of(&seed.sink.func),
    });
}

/// Convenience used by tests and the benchmark harness.
pub fn analyze_source(src: &str, opts: &AnalysisOptions) -> RunReport {
    let p = crate::cir::parse_program(src).expect("source parses");
    let diags = crate::cir::validate_program(&p);
    assert!(diags.is_empty(), "source must validate: {diags:?}");
    analyze(&p, &RuleSet::default(), opts)
}

pub use crate::report::{emit, Format as ReportFormat};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weak_prng_reported_only_in_crypto_context() {
        let free_standing = r#"
extern class java.util.Random
extern func @java.util.Random.nextInt() -> int
func @main(%rnd: java.util.Random) -> void {
  bb0:
    %n = callv %rnd .nextInt()
    ret
}
"#;
        let r = analyze_source(free_standing, &AnalysisOptions::default());
        assert!(r.findings.is_empty());

        let feeding_sink = r#"
extern class java.util.Random
extern class javax.crypto.spec.SecretKeySpec
extern func @java.util.Random.nextBytes(bytes) -> void
extern func @javax.crypto.spec.SecretKeySpec.<init>(bytes, String) -> void
extern func @newByteArray(int) -> bytes static
func @main(%rnd: java.util.Random) -> void {
  bb0:
    %n = const.int 16
    %kb = call @newByteArray(%n)
    callv %rnd .nextBytes(%kb)
    %alg = const.str "AES"
    %ks = new javax.crypto.spec.SecretKeySpec
    callv %ks .<init>(%kb, %alg)
    ret
}
"#;
        let r = analyze_source(feeding_sink, &AnalysisOptions::default());
        assert_eq!(r.findings.len(), 1, "{:?}", r.findings);
        assert_eq!(r.findings[0].rule_id, "R1");
        assert_eq!(r.findings[0].cwe, 338);
    }

    #[test]
    fn secure_random_same_position_is_silent() {
        let src = r#"
extern class java.security.SecureRandom
extern class javax.crypto.spec.SecretKeySpec
extern func @java.security.SecureRandom.nextBytes(bytes) -> void
extern func @javax.crypto.spec.SecretKeySpec.<init>(bytes, String) -> void
extern func @newByteArray(int) -> bytes static
func @main(%rnd: java.security.SecureRandom) -> void {
  bb0:
    %n = const.int 16
    %kb = call @newByteArray(%n)
    callv %rnd .nextBytes(%kb)
    %alg = const.str "AES"
    %ks = new javax.crypto.spec.SecretKeySpec
    callv %ks .<init>(%kb, %alg)
    ret
}
"#;
        let r = analyze_source(src, &AnalysisOptions::default());
        assert!(r.findings.is_empty(), "{:?}", r.findings);
    }

    #[test]
    fn keystore_password_constant() {
        let src = r#"
extern class java.security.KeyStore
extern class java.io.InputStream
extern func @java.security.KeyStore.load(java.io.InputStream, String) -> void
func @main(%ks: java.security.KeyStore, %in: java.io.InputStream) -> void {
  bb0:
    %pw = const.str "changeit"
    callv %ks .load(%in, %pw)
    ret
}
"#;
        let r = analyze_source(src, &AnalysisOptions::default());
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].rule_id, "R5");
        assert_eq!(r.findings[0].sources[0].literal, "changeit");
    }
}
