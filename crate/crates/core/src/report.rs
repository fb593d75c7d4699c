//! Text rendering of metric reports: flat key-value documents and the
//! aligned comparison table. Floats print in shortest round-trip form, so
//! identical runs produce byte-identical reports.

use std::fmt::Write as _;

use crate::metrics::MetricsReport;

pub const REPORT_VERSION: u32 = 1;

/// Flat `key = value` document for one method's evaluation.
pub fn render_report(method: &str, report: &MetricsReport) -> String {
    let mut out = String::new();
    writeln!(out, "report_version = {REPORT_VERSION}").unwrap();
    writeln!(out, "method = {method}").unwrap();
    writeln!(out, "n = {}", report.n).unwrap();
    writeln!(out, "pcoc = {}", report.pcoc).unwrap();
    writeln!(out, "f_rce = {}", report.f_rce).unwrap();
    writeln!(out, "auc = {}", report.auc).unwrap();
    writeln!(out, "ece = {}", report.ece).unwrap();
    writeln!(out, "pcoc_std = {}", report.pcoc_std).unwrap();
    writeln!(out, "diff_std = {}", report.diff_std).unwrap();
    for f in &report.per_field {
        match f.pcoc {
            Some(v) => writeln!(out, "field.{}.pcoc = {v}", f.field).unwrap(),
            None => writeln!(out, "field.{}.pcoc = undefined", f.field).unwrap(),
        }
        writeln!(out, "field.{}.diff = {}", f.field, f.diff).unwrap();
        writeln!(out, "field.{}.count = {}", f.field, f.count).unwrap();
    }
    out
}

/// Aligned plain-text table, one row per method.
pub fn render_comparison(rows: &[(String, MetricsReport)]) -> String {
    let headers = ["method", "PCOC", "F-RCE", "AUC", "ECE", "PCOC-STD"];
    let mut cells: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for (name, r) in rows {
        cells.push(vec![
            name.clone(),
            format!("{:.6}", r.pcoc),
            format!("{:.6}", r.f_rce),
            format!("{:.6}", r.auc),
            format!("{:.6}", r.ece),
            format!("{:.6}", r.pcoc_std),
        ]);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap())
        .collect();
    let mut out = String::new();
    for row in &cells {
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            write!(out, "{:<width$}", cell, width = widths[c]).unwrap();
        }
        // no trailing spaces
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::FieldMetrics;

    fn sample_report() -> MetricsReport {
        MetricsReport {
            n: 100,
            pcoc: 1.02,
            f_rce: 0.05,
            auc: 0.81,
            ece: 0.01,
            per_field: vec![
                FieldMetrics {
                    field: 0,
                    pcoc: Some(1.1),
                    diff: 0.01,
                    count: 60,
                },
                FieldMetrics {
                    field: 1,
                    pcoc: None,
                    diff: -0.02,
                    count: 40,
                },
            ],
            pcoc_std: 0.0,
            diff_std: 0.015,
        }
    }

    #[test]
    fn report_contains_stable_keys() {
        let text = render_report("histogram", &sample_report());
        for key in [
            "report_version = 1",
            "method = histogram",
            "n = 100",
            "pcoc = 1.02",
            "field.0.pcoc = 1.1",
            "field.1.pcoc = undefined",
            "field.1.count = 40",
        ] {
            assert!(text.contains(key), "missing {key:?} in:\n{text}");
        }
    }

    #[test]
    fn comparison_table_has_one_row_per_method() {
        let rows = vec![
            ("histogram".to_string(), sample_report()),
            ("sir".to_string(), sample_report()),
        ];
        let table = render_comparison(&rows);
        assert_eq!(table.lines().count(), 3);
        assert!(table.lines().next().unwrap().starts_with("method"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let r = sample_report();
        assert_eq!(render_report("x", &r), render_report("x", &r));
    }
}
