//! Accuracy, macro precision / recall / F1 and the confusion matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SentimentLabel;

const N: usize = SentimentLabel::COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Rows are gold labels, columns predictions, both in canonical label order.
    pub confusion: [[u64; N]; N],
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-class `(precision, recall, f1)` with `0/0 = 0`.
pub fn per_class(confusion: &[[u64; N]; N]) -> [(f64, f64, f64); N] {
    let mut out = [(0.0, 0.0, 0.0); N];
    for (c, slot) in out.iter_mut().enumerate() {
        let tp = confusion[c][c] as f64;
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        let gold: u64 = confusion[c].iter().sum();
        let p = ratio(tp, predicted as f64);
        let r = ratio(tp, gold as f64);
        *slot = (p, r, ratio(2.0 * p * r, p + r));
    }
    out
}

/// Metrics from a filled confusion matrix.
pub fn metrics_from_confusion(confusion: [[u64; N]; N]) -> Result<Metrics> {
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let correct: u64 = (0..N).map(|i| confusion[i][i]).sum();
    let pc = per_class(&confusion);
    let mean = |f: fn(&(f64, f64, f64)) -> f64| pc.iter().map(f).sum::<f64>() / N as f64;
    Ok(Metrics {
        accuracy: correct as f64 / total as f64,
        macro_precision: mean(|x| x.0),
        macro_recall: mean(|x| x.1),
        macro_f1: mean(|x| x.2),
        confusion,
    })
}

pub fn compute_metrics(pairs: &[(SentimentLabel, SentimentLabel)]) -> Result<Metrics> {
    let mut confusion = [[0u64; N]; N];
    for (gold, pred) in pairs {
        confusion[gold.index()][pred.index()] += 1;
    }
    metrics_from_confusion(confusion)
}

impl Metrics {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// Machine-readable report including per-class scores and the full matrix.
    pub fn to_json(&self) -> serde_json::Value {
        let pc = per_class(&self.confusion);
        let classes: serde_json::Map<String, serde_json::Value> = SentimentLabel::ALL
            .iter()
            .map(|l| {
                let (p, r, f) = pc[l.index()];
                (
                    l.name().to_string(),
                    serde_json::json!({ "precision": p, "recall": r, "f1": f }),
                )
            })
            .collect();
        serde_json::json!({
            "samples": self.total(),
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "labels": SentimentLabel::ALL.iter().map(|l| l.name()).collect::<Vec<_>>(),
            "confusion": self.confusion,
            "per_class": classes,
        })
    }

    /// Confusion matrix as an aligned text grid.
    pub fn confusion_table(&self) -> String {
        let mut s = format!("{:<10}", "gold\\pred");
        for l in SentimentLabel::ALL {
            s.push_str(&format!(" {:>9}", l.name()));
        }
        s.push('\n');
        for l in SentimentLabel::ALL {
            s.push_str(&format!("{:<10}", l.name()));
            for c in self.confusion[l.index()] {
                s.push_str(&format!(" {c:>9}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Aligned results table with one row per `(name, metrics)`; percentages to one decimal.
pub fn format_table(rows: &[(String, Metrics)]) -> String {
    let width = rows
        .iter()
        .map(|(n, _)| n.chars().count())
        .chain(std::iter::once("Model".len()))
        .max()
        .unwrap();
    let pct = |x: f64| format!("{:.1}", 100.0 * x);
    let mut s = format!(
        "{:<width$} | {:>8} | {:>6} | {:>6} | {:>7}\n",
        "Model", "Acc. (%)", "MP (%)", "MR (%)", "MF1 (%)"
    );
    s.push_str(&format!("{}-|-{}-|-{}-|-{}-|-{}\n", "-".repeat(width), "-".repeat(8), "-".repeat(6), "-".repeat(6), "-".repeat(7)));
    for (name, m) in rows {
        s.push_str(&format!(
            "{:<width$} | {:>8} | {:>6} | {:>6} | {:>7}\n",
            name,
            pct(m.accuracy),
            pct(m.macro_precision),
            pct(m.macro_recall),
            pct(m.macro_f1)
        ));
    }
    s
}
