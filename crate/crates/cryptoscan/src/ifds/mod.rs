//! Backward IFDS engine: data facts, flow functions, per-function summary
//! edges, and the reachability solver connecting constant sources to seeded
//! sink facts.

mod engine;
mod flow;
mod summary;

pub use engine::{EngineConfig, SeedResult, Solver};
pub use flow::{call_flow, flow, pass_args, phi_flow, return_val, FlowCtx};
pub use summary::{summarize_program, FunctionSummary, SummaryEdge, SummaryStatus, SummaryStore};

use crate::cir::{Location, TypeRef};
use std::collections::BTreeSet;

/// Root of an access path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FactBase {
    /// An SSA value or formal parameter, by name.
    Local(String),
    /// A static field root `class.field`.
    Static { class: String, field: String },
}

/// A tracked access path: base value plus a bounded chain of field names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AccessPath {
    pub base: FactBase,
    pub fields: Vec<String>,
}

impl AccessPath {
    pub fn local(name: impl Into<String>) -> Self {
        AccessPath { base: FactBase::Local(name.into()), fields: Vec::new() }
    }

    pub fn statik(class: impl Into<String>, field: impl Into<String>) -> Self {
        AccessPath {
            base: FactBase::Static { class: class.into(), field: field.into() },
            fields: Vec::new(),
        }
    }

    pub fn with_fields(mut self, fields: Vec<String>) -> Self {
        self.fields = fields;
        self
    }

    /// New path with `field` prepended, truncated to depth `k` (suffix
    /// truncation: fields beyond the bound collapse, weak semantics).
    pub fn push_front(&self, field: &str, k: usize) -> AccessPath {
        let mut fields = Vec::with_capacity(self.fields.len() + 1);
        fields.push(field.to_string());
        fields.extend(self.fields.iter().cloned());
        fields.truncate(k);
        AccessPath { base: self.base.clone(), fields }
    }

    /// New path with the first field stripped (a write to that field
    /// resolved it).
    pub fn pop_front(&self) -> Vec<String> {
        self.fields[1..].to_vec()
    }

    pub fn rebase_local(&self, name: &str) -> AccessPath {
        AccessPath { base: FactBase::Local(name.to_string()), fields: self.fields.clone() }
    }
}

/// The IFDS domain element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum DataFact {
    /// Λ: the sink-side anchor; never propagated as a source.
    Zero,
    Path(AccessPath),
}

impl DataFact {
    pub fn path(&self) -> Option<&AccessPath> {
        match self {
            DataFact::Zero => None,
            DataFact::Path(p) => Some(p),
        }
    }

    pub fn local(name: impl Into<String>) -> Self {
        DataFact::Path(AccessPath::local(name))
    }

    /// The local base name, if this fact is rooted at an SSA value.
    pub fn local_base(&self) -> Option<&str> {
        match self {
            DataFact::Path(AccessPath { base: FactBase::Local(n), .. }) => Some(n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LiteralType {
    Str,
    Int,
}

impl LiteralType {
    pub fn type_ref(self) -> TypeRef {
        match self {
            LiteralType::Str => TypeRef::Str,
            LiteralType::Int => TypeRef::Int,
        }
    }
}

/// A fact that survived to a function's entry, phrased over formals and
/// static roots so callers can re-seed it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntryFact {
    Formal { index: usize, fields: Vec<String> },
    Static { class: String, field: String, fields: Vec<String> },
}

/// Terminal observations made while propagating a seed fact backward.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FlowEvent {
    ConstantSource { literal: String, ty: LiteralType, loc: Location },
    Sanitized { loc: Location, secure_seed: bool },
    VerifierHit { loc: Location },
    EscapedToEntry { fact: EntryFact },
    Exhausted,
}

impl FlowEvent {
    pub fn constant_str(literal: impl Into<String>, loc: Location) -> Self {
        FlowEvent::ConstantSource { literal: literal.into(), ty: LiteralType::Str, loc }
    }

    pub fn constant_int(value: i64, loc: Location) -> Self {
        FlowEvent::ConstantSource { literal: value.to_string(), ty: LiteralType::Int, loc }
    }
}

pub type EventSet = BTreeSet<FlowEvent>;
