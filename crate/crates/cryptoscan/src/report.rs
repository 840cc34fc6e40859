//! Deterministic findings model and text/JSON emission.

use crate::cir::{Location, TypeRef};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceJson {
    pub literal: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub loc: Location,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Finding {
    pub rule_id: String,
    pub cwe: u32,
    pub severity: String,
    pub sink: Location,
    pub sources: Vec<SourceJson>,
    pub trace: Vec<Location>,
    pub disposition: String,
    /// Source file of the sink's function; used for ordering, not emitted.
    #[serde(skip)]
    pub file: String,
}

pub fn type_name(t: &TypeRef) -> String {
    t.to_string()
}

#[derive(Debug, Clone, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Stats {
    pub functions_analyzed: usize,
    pub seeds_created: usize,
    pub layers_used: usize,
    pub summaries_computed: usize,
    pub unresolved_count: usize,
    /// Wall-clock seconds; isolated here so findings stay byte-stable.
    pub elapsed: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfigEcho {
    pub refinements: bool,
    pub fidelity: String,
    pub library_mode: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub tool: ToolInfo,
    pub config: ConfigEcho,
    pub stats: Stats,
    pub findings: Vec<Finding>,
    #[serde(skip)]
    pub budget_exhausted: bool,
}

impl RunReport {
    pub fn new(config: ConfigEcho) -> Self {
        RunReport {
            schema: 1,
            tool: ToolInfo {
                name: "cryptoscan".to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            config,
            stats: Stats::default(),
            findings: Vec::new(),
            budget_exhausted: false,
        }
    }

    /// Merges duplicates (same rule, sink, and source literals — reachable
    /// via several callers) and applies the canonical order.
    pub fn normalize(&mut self) {
        let mut merged: BTreeMap<(String, Location, Vec<String>), Finding> = BTreeMap::new();
        for f in self.findings.drain(..) {
            let lits: Vec<String> = f.sources.iter().map(|s| s.literal.clone()).collect();
            let key = (f.rule_id.clone(), f.sink.clone(), lits);
            match merged.get_mut(&key) {
                Some(existing) => existing.trace.extend(f.trace),
                None => {
                    merged.insert(key, f);
                }
            }
        }
        self.findings = merged.into_values().collect();
        self.findings.sort_by(|a, b| {
            (&a.file, &a.sink.func, &a.sink.block, a.sink.index, &a.rule_id)
                .cmp(&(&b.file, &b.sink.func, &b.sink.block, b.sink.index, &b.rule_id))
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

pub fn emit(report: &RunReport, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        Format::Text => emit_text(report),
    }
}

fn emit_text(report: &RunReport) -> String {
    let mut out = String::new();
    for f in &report.findings {
        writeln!(out, "[{}] CWE-{} {} ({})", f.rule_id, f.cwe, f.severity, f.disposition).unwrap();
        writeln!(out, "  sink: {}", f.sink).unwrap();
        for s in &f.sources {
            writeln!(out, "  source: {:?} ({}) at {}", s.literal, s.ty, s.loc).unwrap();
        }
        if !f.trace.is_empty() {
            let path: Vec<String> = f.trace.iter().map(|l| l.to_string()).collect();
            writeln!(out, "  trace: {}", path.join(" -> ")).unwrap();
        }
        out.push('\n');
    }
    let s = &report.stats;
    writeln!(
        out,
        "{} finding(s); {} function(s), {} seed(s), {} summar(ies), {} unresolved, {:.2}s",
        report.findings.len(),
        s.functions_analyzed,
        s.seeds_created,
        s.summaries_computed,
        s.unresolved_count,
        s.elapsed
    )
    .unwrap();
    out
}
