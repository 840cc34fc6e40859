//! Property-based and corpus-wide invariants: printer/parser round-trips
//! and refinement monotonicity.

use cryptoscan::analysis::{analyze, AnalysisOptions};
use cryptoscan::benchkit::CORPUS;
use cryptoscan::cir::{parse_program, print_program};
use cryptoscan::detectors::rules::RuleSet;
use proptest::prelude::*;

proptest! {
    #[test]
    fn string_literals_round_trip(value in "[ -~]*", n in 0i64..1_000_000) {
        let src = format!(
            "func @main() -> void {{\n  bb0:\n    %s = const.str {:?}\n    %n = const.int {n}\n    ret\n}}\n",
            value
        );
        // `{:?}` and the printer agree on the escape set used here.
        let p1 = parse_program(&src).unwrap();
        let printed = print_program(&p1);
        let p2 = parse_program(&printed).unwrap();
        prop_assert_eq!(p1, p2);
    }

    #[test]
    fn identifiers_round_trip(name in "[a-z][a-z0-9_]{0,12}", field in "[a-z][a-z0-9]{0,8}") {
        let src = format!(
            "class Box {{ field {field}: String }}\n\
             func @main(%{name}: Box) -> void {{\n  bb0:\n    %v = getfield %{name} .{field}\n    ret\n}}\n"
        );
        let p1 = parse_program(&src).unwrap();
        let p2 = parse_program(&print_program(&p1)).unwrap();
        prop_assert_eq!(p1, p2);
    }
}

#[test]
fn corpus_round_trips_through_printer() {
    for case in CORPUS {
        let p1 = case.program();
        let printed = print_program(&p1);
        let p2 = parse_program(&printed)
            .unwrap_or_else(|e| panic!("{}: reprint failed to parse: {e}", case.name));
        // File attribution is supplied at parse time, not printed.
        let p1_plain = parse_program(&print_program(&p1)).unwrap();
        assert_eq!(p1_plain, p2, "{}", case.name);
        assert_eq!(print_program(&p2), printed, "{}: printer not a fixpoint", case.name);
    }
}

#[test]
fn refinements_only_remove_constant_sources() {
    let rules = RuleSet::default();
    for case in CORPUS {
        let p = case.program();
        let refined = analyze(&p, &rules, &AnalysisOptions::default());
        let ablated = analyze(
            &p,
            &rules,
            &AnalysisOptions { refinements: false, ..AnalysisOptions::default() },
        );
        let literals = |r: &cryptoscan::report::RunReport| {
            r.findings
                .iter()
                .flat_map(|f| f.sources.iter().map(|s| s.literal.clone()))
                .collect::<std::collections::BTreeSet<_>>()
        };
        let with = literals(&refined);
        let without = literals(&ablated);
        assert!(
            with.is_subset(&without),
            "{}: refined sources {with:?} not a subset of unrefined {without:?}",
            case.name
        );
    }
}
