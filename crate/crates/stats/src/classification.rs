use crate::error::{Result, StatsError};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Instances whose truth is this class.
    pub support: usize,
    pub predicted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub per_class: Vec<ClassStats>,
    /// Zero-division notes (classes with no predictions or no instances).
    pub warnings: Vec<String>,
}

/// `k × k` counts, rows = truth, columns = prediction.
pub fn confusion_matrix(preds: &[usize], truths: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if preds.len() != truths.len() {
        return Err(StatsError::LengthMismatch(preds.len(), truths.len()));
    }
    let mut cm = vec![vec![0usize; k]; k];
    for (&p, &t) in preds.iter().zip(truths) {
        for label in [p, t] {
            if label >= k {
                return Err(StatsError::LabelOutOfRange { label, k });
            }
        }
        cm[t][p] += 1;
    }
    Ok(cm)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy plus macro-averaged precision, recall and F1 over all `k`
/// classes. Undefined per-class ratios count as 0. F1 is averaged per class,
/// not recomputed from the macro precision and recall.
pub fn classification_metrics(preds: &[usize], truths: &[usize], k: usize) -> Result<ClassificationMetrics> {
    if preds.is_empty() {
        return Err(StatsError::TooShort { need: 1, have: 0 });
    }
    let cm = confusion_matrix(preds, truths, k)?;
    let mut per_class = Vec::with_capacity(k);
    let mut warnings = Vec::new();
    let mut correct = 0usize;
    for c in 0..k {
        let tp = cm[c][c];
        correct += tp;
        let support: usize = cm[c].iter().sum();
        let predicted: usize = cm.iter().map(|row| row[c]).sum();
        let precision = ratio(tp, predicted).unwrap_or_else(|| {
            warnings.push(format!("class {c}: no predictions, precision set to 0"));
            0.0
        });
        let recall = ratio(tp, support).unwrap_or_else(|| {
            warnings.push(format!("class {c}: no instances, recall set to 0"));
            0.0
        });
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassStats {
            precision,
            recall,
            f1,
            support,
            predicted,
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let mean = |f: fn(&ClassStats) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / preds.len() as f64,
        precision_macro: mean(|c| c.precision),
        recall_macro: mean(|c| c.recall),
        f1_macro: mean(|c| c.f1),
        per_class,
        warnings,
    })
}
