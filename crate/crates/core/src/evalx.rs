//! Confusion matrices and one-vs-rest precision, recall and F1 with macro
//! averages.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let k = class_names.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape {
                expected: k,
                got: counts.len(),
            });
        }
        Ok(Self { counts, class_names })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    /// `(tp, fp, fn)` of class `c` read one-vs-rest.
    pub fn one_vs_rest(&self, c: usize) -> (u64, u64, u64) {
        let tp = self.counts[c][c];
        let col: u64 = self.counts.iter().map(|r| r[c]).sum();
        let row: u64 = self.counts[c].iter().sum();
        (tp, col - tp, row - tp)
    }

    /// CSV with a header of predicted class names and one row per true
    /// class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for n in &self.class_names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (n, row) in self.class_names.iter().zip(&self.counts) {
            s.push_str(n);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

fn default_names(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("class_{c}")).collect()
}

/// Count `(truth, prediction)` pairs into a `k x k` matrix with names
/// `class_0 ...`.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    confusion_matrix_named(y_true, y_pred, default_names(k))
}

pub fn confusion_matrix_named(
    y_true: &[usize],
    y_pred: &[usize],
    class_names: Vec<String>,
) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    let k = class_names.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (row, (&t, &p)) in y_true.iter().zip(y_pred).enumerate() {
        if t >= k || p >= k {
            return Err(Error::Label {
                row,
                value: format!("{} (k = {k})", if t >= k { t } else { p }),
            });
        }
        counts[t][p] += 1;
    }
    ConfusionMatrix::new(counts, class_names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Per-class and macro metrics; `0/0` is reported as 0 and flagged.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Contract("metrics of an empty confusion matrix are undefined".into()));
    }
    let k = cm.n_classes();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let (tp, fp, fn_) = cm.one_vs_rest(c);
            let (precision, precision_undefined) = ratio(tp, tp + fp);
            let (recall, recall_undefined) = ratio(tp, tp + fn_);
            let (f1, f1_undefined) = ratio(2 * tp, 2 * tp + fp + fn_);
            ClassMetrics {
                name: cm.class_names[c].clone(),
                precision,
                recall,
                f1,
                support: tp + fn_,
                precision_undefined,
                recall_undefined,
                f1_undefined,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let trace: u64 = (0..k).map(|c| cm.counts[c][c]).sum();
    let macro_avg = MacroMetrics {
        accuracy: trace as f64 / total as f64,
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    Ok(MetricsReport {
        per_class,
        macro_avg,
        total,
    })
}

impl MetricsReport {
    /// Aligned text table, percentages rounded to integers.
    pub fn to_table(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|c| c.name.len())
            .chain([5])
            .max()
            .unwrap_or(5);
        let pct = |v: f64| libm::round(v * 100.0) as i64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>6}  {:>3}  {:>7}",
            "class", "precision", "recall", "f1", "support"
        );
        for c in &self.per_class {
            let flag = if c.precision_undefined || c.recall_undefined { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:<width$}  {:>9}  {:>6}  {:>3}  {:>7}{flag}",
                c.name,
                pct(c.precision),
                pct(c.recall),
                pct(c.f1),
                c.support
            );
        }
        let m = &self.macro_avg;
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>6}  {:>3}  {:>7}",
            "macro",
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
            self.total
        );
        let _ = writeln!(s, "accuracy {}", pct(m.accuracy));
        s
    }
}
