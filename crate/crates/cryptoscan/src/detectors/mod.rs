//! Rule catalog and the three detector groups: constant-source sinks with
//! verifying rules, intra-procedural TLS patterns, and PRNG classification.

pub mod patterns;
pub mod rules;
pub mod verify;

pub use patterns::{run_patterns, PatternKind, PatternReport};
pub use rules::{dump_rules, load_rules, CheckKind, RuleSet, RulesError, SinkRule};
pub use verify::{apply_verifying_rule, classify_prng, match_sinks, SinkSeed, SourceRef, Violation};
