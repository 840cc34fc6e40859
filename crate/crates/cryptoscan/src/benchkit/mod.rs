//! Benchmark apparatus: a committed CIR fixture corpus across six
//! benchmark categories, an independent full-inlining oracle for
//! differential testing, and a precision/recall scorer.

pub mod oracle;
pub mod score;

use crate::analysis::{analyze, AnalysisOptions};
use crate::cir::{parse_program_named, validate_program, Program};
use crate::detectors::rules::RuleSet;
use crate::report::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Category {
    Basic,
    MultiMethod,
    MultiClass,
    FieldSensitivity,
    PathSensitivity,
    Heuristics,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Basic,
        Category::MultiMethod,
        Category::MultiClass,
        Category::FieldSensitivity,
        Category::PathSensitivity,
        Category::Heuristics,
    ];

    /// Identifier accepted by `--category`.
    pub fn id(self) -> &'static str {
        match self {
            Category::Basic => "basic",
            Category::MultiMethod => "multi-method",
            Category::MultiClass => "multi-class",
            Category::FieldSensitivity => "field-sensitivity",
            Category::PathSensitivity => "path-sensitivity",
            Category::Heuristics => "heuristics",
        }
    }

    /// Row label in the metrics table.
    pub fn label(self) -> &'static str {
        match self {
            Category::Basic => "Basic",
            Category::MultiMethod => "Multiple Methods",
            Category::MultiClass => "Multiple Classes",
            Category::FieldSensitivity => "Field Sensitivity",
            Category::PathSensitivity => "Path Sensitivity",
            Category::Heuristics => "Heuristics",
        }
    }

    pub fn from_id(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.id() == s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixtureCase {
    pub name: &'static str,
    pub category: Category,
    /// Rule ids a correct analysis should report; empty means the case is
    /// secure and any finding is a false positive.
    pub expected_rules: &'static [&'static str],
    pub source: &'static str,
}

impl FixtureCase {
    pub fn is_insecure(&self) -> bool {
        !self.expected_rules.is_empty()
    }

    pub fn program(&self) -> Program {
        let p = parse_program_named(self.source, self.name)
            .unwrap_or_else(|e| panic!("fixture {}: {e}", self.name));
        let diags = validate_program(&p);
        assert!(diags.is_empty(), "fixture {}: {diags:?}", self.name);
        p
    }
}

macro_rules! cases {
    ($($cat:ident / $name:ident => [$($rule:literal),*];)*) => {
        &[$(FixtureCase {
            name: stringify!($name),
            category: Category::$cat,
            expected_rules: &[$($rule),*],
            source: include_str!(concat!(
                "../../corpus/",
                cases!(@dir $cat),
                "/",
                stringify!($name),
                ".cir"
            )),
        }),*]
    };
    (@dir Basic) => { "basic" };
    (@dir MultiMethod) => { "multi_method" };
    (@dir MultiClass) => { "multi_class" };
    (@dir FieldSensitivity) => { "field_sensitivity" };
    (@dir PathSensitivity) => { "path_sensitivity" };
    (@dir Heuristics) => { "heuristics" };
}

pub const CORPUS: &[FixtureCase] = cases! {
    Basic / ecb_mode_cipher => ["R4"];
    Basic / weak_cipher_des => ["R4"];
    Basic / md5_digest => ["R3"];
    Basic / constant_iv => ["R10"];
    Basic / low_iteration_count => ["R8"];
    Basic / keystore_constant_password => ["R5"];
    Basic / gcm_mode_cipher => [];
    Basic / sha256_digest => [];
    Basic / random_key_bytes => ["R1"];
    Basic / secure_random_key => [];
    Basic / stringified_iteration_count => ["R8"];
    MultiMethod / helper_returns_constant => ["R6"];
    MultiMethod / deep_chain_constant => ["R6"];
    MultiMethod / constant_into_sink_method => ["R6"];
    MultiMethod / identity_wrapper => ["R6"];
    MultiMethod / helper_secure_random => [];
    MultiMethod / sanitized_count_helper => [];
    MultiMethod / default_key_chain => ["R6"];
    MultiClass / constructor_key_escalation => ["R6"];
    MultiClass / field_key_no_caller => [];
    MultiClass / provider_interface_constant => ["R6"];
    MultiClass / provider_secure_override => [];
    MultiClass / static_config_key => ["R6"];
    MultiClass / util_wrapper_secure => [];
    FieldSensitivity / field_constant_key => ["R6"];
    FieldSensitivity / unrelated_field_constant => [];
    FieldSensitivity / nested_field_key => ["R6"];
    FieldSensitivity / overwritten_field => [];
    FieldSensitivity / static_initializer_count => ["R8"];
    FieldSensitivity / sibling_objects_separate => [];
    PathSensitivity / guarded_weak_cipher => [];
    PathSensitivity / guarded_weak_hash => [];
    PathSensitivity / guarded_constant_key => [];
    PathSensitivity / guarded_iteration_count => [];
    PathSensitivity / guarded_constant_iv => [];
    PathSensitivity / guarded_fallback_password => [];
    Heuristics / charset_decoration => [];
    Heuristics / property_name_lookup => [];
    Heuristics / map_resource_identifier => [];
    Heuristics / buffer_size_bookkeeping => [];
    Heuristics / prompt_text_password => [];
    Heuristics / salt_lookup_identifier => [];
    Heuristics / constant_password_spec => ["R7"];
    Heuristics / key_with_charset => ["R6"];
};

pub fn load_corpus() -> Vec<FixtureCase> {
    CORPUS.to_vec()
}

/// Analyzes one fixture with the default rule set.
pub fn run_case(case: &FixtureCase, opts: &AnalysisOptions) -> RunReport {
    analyze(&case.program(), &RuleSet::default(), opts)
}

/// Analyzes every corpus case (optionally one category) and returns the
/// reports in corpus order.
pub fn run_corpus(
    opts: &AnalysisOptions,
    category: Option<Category>,
) -> Vec<(FixtureCase, RunReport)> {
    CORPUS
        .iter()
        .filter(|c| category.map_or(true, |want| c.category == want))
        .map(|c| (*c, run_case(c, opts)))
        .collect()
}

/// Synthetic scalability program: a long chain of void helper calls plus a
/// short value chain feeding one planted key-material sink. Total function
/// count is exactly `n` (n ≥ 12).
pub fn chain_program(n: usize) -> String {
    assert!(n >= 12, "chain needs at least 12 functions");
    let work = n - 11;
    let mut out = String::new();
    out.push_str("extern class javax.crypto.spec.SecretKeySpec\n");
    out.push_str("extern func @javax.crypto.spec.SecretKeySpec.<init>(bytes, String) -> void\n");
    for i in 0..work {
        if i + 1 < work {
            out.push_str(&format!(
                "func @work{i}() -> void {{\n  bb0:\n    call @work{}()\n    ret\n}}\n",
                i + 1
            ));
        } else {
            out.push_str(&format!("func @work{i}() -> void {{\n  bb0:\n    ret\n}}\n"));
        }
    }
    for j in 0..10 {
        if j < 9 {
            out.push_str(&format!(
                "func @key{j}() -> String {{\n  bb0:\n    %k = call @key{}()\n    ret %k\n}}\n",
                j + 1
            ));
        } else {
            out.push_str(&format!(
                "func @key{j}() -> String {{\n  bb0:\n    %k = const.str \"chainkey\"\n    ret %k\n}}\n"
            ));
        }
    }
    out.push_str(
        "func @main() -> void {\n  bb0:\n    call @work0()\n    %key = call @key0()\n    \
         %alg = const.str \"AES\"\n    %ks = new javax.crypto.spec.SecretKeySpec\n    \
         callv %ks .<init>(%key, %alg)\n    ret\n}\n",
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_has_six_categories_with_six_cases_each() {
        for cat in Category::ALL {
            let n = CORPUS.iter().filter(|c| c.category == cat).count();
            assert!(n >= 6, "{} has only {n} cases", cat.id());
        }
    }

    #[test]
    fn every_fixture_parses_and_validates() {
        for case in CORPUS {
            let p = case.program();
            assert!(!p.functions.is_empty(), "{}", case.name);
        }
    }

    #[test]
    fn path_sensitivity_cases_are_all_secure() {
        assert!(CORPUS
            .iter()
            .filter(|c| c.category == Category::PathSensitivity)
            .all(|c| !c.is_insecure()));
    }

    #[test]
    fn chain_program_validates() {
        let src = chain_program(20);
        let p = crate::cir::parse_program(&src).unwrap();
        assert_eq!(p.functions.len(), 20);
        assert!(validate_program(&p).is_empty());
    }
}
