//! Confusion counts, per-class and support-weighted precision/recall/F1, and
//! binary cross-entropy.
//!
//! A metric whose denominator is zero (no predictions of a class, or no
//! support) is defined as 0 for that term.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BCE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts with class 0 treated as positive.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!("length mismatch: {a} labels vs {b} predictions")));
    }
    if a == 0 {
        return Err(Error::InvalidArgument("no items to score".into()));
    }
    Ok(())
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    check_lengths(y_true.len(), y_pred.len())?;
    let mut m = ConfusionMatrix::default();
    for (&y, &p) in y_true.iter().zip(y_pred) {
        match (y, p) {
            (1, 1) => m.tp += 1,
            (0, 1) => m.fp += 1,
            (1, 0) => m.fn_ += 1,
            (0, 0) => m.tn += 1,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "labels must be 0 or 1 (got {y} / {p})"
                )))
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassMetrics {
    /// Metrics for the positive class of `m`.
    pub fn positive_of(m: &ConfusionMatrix) -> Self {
        let precision = ratio(m.tp, m.tp + m.fp);
        let recall = ratio(m.tp, m.tp + m.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: m.tp + m.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub class0: ClassMetrics,
    pub class1: ClassMetrics,
    pub weighted: Averages,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    #[serde(default)]
    pub bce_loss: Option<f64>,
}

pub fn weighted_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<MetricsReport> {
    let confusion = confusion(y_true, y_pred)?;
    Ok(report_from_confusion(confusion))
}

pub fn report_from_confusion(confusion: ConfusionMatrix) -> MetricsReport {
    let class1 = ClassMetrics::positive_of(&confusion);
    let class0 = ClassMetrics::positive_of(&confusion.swapped());
    let (n0, n1) = (class0.support as f64, class1.support as f64);
    let total = n0 + n1;
    let w = |a: f64, b: f64| (n0 * a + n1 * b) / total;
    MetricsReport {
        confusion,
        class0,
        class1,
        weighted: Averages {
            precision: w(class0.precision, class1.precision),
            recall: w(class0.recall, class1.recall),
            f1: w(class0.f1, class1.f1),
        },
        macro_avg: Averages {
            precision: (class0.precision + class1.precision) / 2.0,
            recall: (class0.recall + class1.recall) / 2.0,
            f1: (class0.f1 + class1.f1) / 2.0,
        },
        bce_loss: None,
    }
}

/// Mean binary cross-entropy, with probabilities clamped to `[ε, 1-ε]`.
pub fn bce_loss(y_true: &[u8], y_prob: &[f64]) -> Result<f64> {
    check_lengths(y_true.len(), y_prob.len())?;
    let mut sum = 0.0;
    for (&y, &p) in y_true.iter().zip(y_prob) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
        let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        sum += match y {
            1 => -p.ln(),
            0 => -(1.0 - p).ln(),
            _ => return Err(Error::InvalidArgument(format!("label must be 0 or 1 (got {y})"))),
        };
    }
    Ok(sum / y_true.len() as f64)
}

/// Renders rows as a `Model | Precision | Recall | F1-Score` table with
/// weighted metrics rounded to four decimals.
pub fn render_table(rows: &[(String, MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9}", "Model", "Precision", "Recall", "F1-Score");
    let _ = writeln!(out, "{}", "-".repeat(width + 33));
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}",
            name, r.weighted.precision, r.weighted.recall, r.weighted.f1
        );
    }
    out
}
