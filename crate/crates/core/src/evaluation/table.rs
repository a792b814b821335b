use std::fmt::Write;

use super::{ComparisonReport, MetricsReport};
use crate::model::ModelKind;

/// Label, metric, higher-is-better.
type Row = (&'static str, fn(&MetricsReport) -> f64, bool);

const ROWS: [Row; 4] = [
    ("Precision", |m| m.macro_precision, true),
    ("Recall", |m| m.macro_recall, true),
    ("F1 score", |m| m.macro_f1, true),
    ("Hamming loss", |m| m.hamming_loss, false),
];

const COLUMNS: [(ModelKind, bool); 4] = [
    (ModelKind::Rf, false),
    (ModelKind::Transformer, false),
    (ModelKind::Rf, true),
    (ModelKind::Transformer, true),
];

/// Four metric rows by four cells, grouped by feature condition. The best
/// value in each row carries a `*`.
pub fn render_table(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Classification performance on {} test messages (macro-averaged)",
        report.n_test
    );
    let _ = writeln!(
        out,
        "{:<14}| {:^29} | {:^29}",
        "", "Without feature engineering", "With feature engineering"
    );
    let _ = writeln!(
        out,
        "{:<14}| {:>13} {:>15} | {:>13} {:>15}",
        "Metric", "RF", "Transformer", "RF", "Transformer"
    );
    let _ = writeln!(out, "{}", "-".repeat(78));
    for (name, get, higher_better) in ROWS {
        let vals: Vec<Option<f64>> = COLUMNS
            .iter()
            .map(|&(m, f)| report.cell(m, f).map(|c| get(&c.report.metrics)))
            .collect();
        let best = vals.iter().flatten().copied().fold(None, |b: Option<f64>, v| match b {
            Some(b) if (higher_better && b >= v) || (!higher_better && b <= v) => Some(b),
            _ => Some(v),
        });
        let cell = |v: Option<f64>| match v {
            Some(v) => format!("{:.3}{}", v, if Some(v) == best { "*" } else { " " }),
            None => "-".into(),
        };
        let _ = writeln!(
            out,
            "{:<14}| {:>13} {:>15} | {:>13} {:>15}",
            name,
            cell(vals[0]),
            cell(vals[1]),
            cell(vals[2]),
            cell(vals[3])
        );
    }
    out
}
