//! Per-category precision/recall scoring over corpus runs.

use super::{Category, FixtureCase};
use crate::report::RunReport;
use serde::Serialize;
use std::fmt::Write as _;

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsRow {
    pub category: String,
    pub cases: usize,
    pub insecure: usize,
    pub secure: usize,
    pub reported: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

impl MetricsRow {
    fn tally(category: String, runs: &[&(FixtureCase, RunReport)]) -> MetricsRow {
        let mut row = MetricsRow {
            category,
            cases: runs.len(),
            insecure: 0,
            secure: 0,
            reported: 0,
            false_positives: 0,
            false_negatives: 0,
            precision: 0.0,
            recall: 0.0,
        };
        for (case, report) in runs {
            if case.is_insecure() {
                row.insecure += 1;
                let hit = report
                    .findings
                    .iter()
                    .any(|f| case.expected_rules.contains(&f.rule_id.as_str()));
                if hit {
                    row.reported += 1;
                } else {
                    row.false_negatives += 1;
                }
            } else {
                row.secure += 1;
                if !report.findings.is_empty() {
                    row.reported += 1;
                    row.false_positives += 1;
                }
            }
        }
        row.finish();
        row
    }

    fn finish(&mut self) {
        let tp = self.reported - self.false_positives;
        self.precision =
            if self.reported == 0 { 1.0 } else { tp as f64 / self.reported as f64 };
        // With no insecure cases recall is vacuous; report it as perfect so
        // the precision column carries the category's story.
        self.recall =
            if self.insecure == 0 { 1.0 } else { tp as f64 / self.insecure as f64 };
    }
}

/// One row per category (corpus order) plus a totals row.
pub fn score(runs: &[(FixtureCase, RunReport)]) -> (Vec<MetricsRow>, MetricsRow) {
    let mut rows = Vec::new();
    for cat in Category::ALL {
        let subset: Vec<&(FixtureCase, RunReport)> =
            runs.iter().filter(|(c, _)| c.category == cat).collect();
        if !subset.is_empty() {
            rows.push(MetricsRow::tally(cat.label().to_string(), &subset));
        }
    }
    let mut total = MetricsRow {
        category: "Total".to_string(),
        cases: 0,
        insecure: 0,
        secure: 0,
        reported: 0,
        false_positives: 0,
        false_negatives: 0,
        precision: 0.0,
        recall: 0.0,
    };
    for r in &rows {
        total.cases += r.cases;
        total.insecure += r.insecure;
        total.secure += r.secure;
        total.reported += r.reported;
        total.false_positives += r.false_positives;
        total.false_negatives += r.false_negatives;
    }
    total.finish();
    (rows, total)
}

pub fn render_table(rows: &[MetricsRow], total: &MetricsRow) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<18} {:>5} {:>8} {:>6} {:>8} {:>4} {:>4} {:>10} {:>8}",
        "Category", "Cases", "Insecure", "Secure", "Reported", "FPs", "FNs", "Precision", "Recall"
    )
    .unwrap();
    for r in rows.iter().chain(std::iter::once(total)) {
        writeln!(
            out,
            "{:<18} {:>5} {:>8} {:>6} {:>8} {:>4} {:>4} {:>9.2}% {:>7.2}%",
            r.category,
            r.cases,
            r.insecure,
            r.secure,
            r.reported,
            r.false_positives,
            r.false_negatives,
            r.precision * 100.0,
            r.recall * 100.0
        )
        .unwrap();
    }
    out
}

pub fn render_json(rows: &[MetricsRow], total: &MetricsRow) -> String {
    let v = serde_json::json!({ "rows": rows, "total": total });
    serde_json::to_string_pretty(&v).expect("metrics serialize") + "\n"
}
