use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldMetrics {
    pub fold: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub size: usize,
}

/// Classification metrics. `confusion[t][p]` counts threads of true class
/// `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub total: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<FoldMetrics>,
    /// Mean of the per-fold macro F1 scores, when folds are present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_mean_macro_f1: Option<f64>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl MetricsReport {
    /// Precision, recall or F1 with an empty denominator is reported as 0.
    pub fn compute(classes: &[&str], gold: &[usize], pred: &[usize]) -> Result<MetricsReport> {
        if gold.len() != pred.len() {
            return Err(Error::dim("metrics", &[gold.len()], &[pred.len()]));
        }
        let k = classes.len();
        if let Some(&bad) = gold.iter().chain(pred).find(|&&c| c >= k) {
            return Err(Error::Label { label: bad, classes: k });
        }
        let mut confusion = vec![vec![0usize; k]; k];
        for (&g, &p) in gold.iter().zip(pred) {
            confusion[g][p] += 1;
        }
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let per_class: Vec<ClassMetrics> = (0..k)
            .map(|c| {
                let tp = confusion[c][c];
                let support: usize = confusion[c].iter().sum();
                let predicted: usize = (0..k).map(|t| confusion[t][c]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    class: classes[c].to_string(),
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / k.max(1) as f64;
        Ok(MetricsReport {
            total: gold.len(),
            accuracy: ratio(correct, gold.len()),
            macro_f1,
            per_class,
            confusion,
            folds: Vec::new(),
            fold_mean_macro_f1: None,
        })
    }

    pub fn with_folds(mut self, folds: Vec<FoldMetrics>) -> Self {
        self.fold_mean_macro_f1 =
            (!folds.is_empty()).then(|| folds.iter().map(|f| f.macro_f1).sum::<f64>() / folds.len() as f64);
        self.folds = folds;
        self
    }

    /// Table with one row per class followed by summary rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for m in &self.per_class {
            writeln!(out, "{},{:.6},{:.6},{:.6},{}", m.class, m.precision, m.recall, m.f1, m.support).unwrap();
        }
        writeln!(out, "accuracy,,,{:.6},{}", self.accuracy, self.total).unwrap();
        writeln!(out, "macro,{:.6},{:.6},{:.6},{}", self.macro_precision(), self.macro_recall(), self.macro_f1, self.total)
            .unwrap();
        for f in &self.folds {
            writeln!(out, "fold:{},,{:.6},{:.6},{}", f.fold, f.accuracy, f.macro_f1, f.size).unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialise")
    }

    fn macro_precision(&self) -> f64 {
        self.per_class.iter().map(|m| m.precision).sum::<f64>() / self.per_class.len().max(1) as f64
    }

    fn macro_recall(&self) -> f64 {
        self.per_class.iter().map(|m| m.recall).sum::<f64>() / self.per_class.len().max(1) as f64
    }
}
