use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassId, SampleTimeline};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Unweighted mean over classes that occur in the ground truth.
    #[default]
    Macro,
    /// Mean weighted by ground-truth support.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `confusion[gt][pred]` frame counts.
    pub confusion: Vec<Vec<u64>>,
    /// Per-class recall in percent; `None` for classes absent from the ground truth.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub null_accuracy: Option<f64>,
}

pub fn confusion_matrix(
    pred: &SampleTimeline,
    gt: &SampleTimeline,
    num_classes: usize,
) -> Result<Vec<Vec<u64>>> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "prediction has {} samples, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        if p >= num_classes || g >= num_classes {
            return Err(Error::invalid(format!(
                "label {} outside {num_classes} classes",
                p.max(g)
            )));
        }
        confusion[g][p] += 1;
    }
    Ok(confusion)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-sample precision, recall and F1 over all classes (NULL included).
pub fn sample_metrics(
    pred: &SampleTimeline,
    gt: &SampleTimeline,
    num_classes: usize,
    null_class: Option<ClassId>,
    averaging: Averaging,
) -> Result<SampleMetrics> {
    let confusion = confusion_matrix(pred, gt, num_classes)?;
    let support: Vec<u64> = confusion.iter().map(|row| row.iter().sum()).collect();
    let predicted: Vec<u64> = (0..num_classes)
        .map(|c| confusion.iter().map(|row| row[c]).sum())
        .collect();

    let mut per_class_accuracy = Vec::with_capacity(num_classes);
    let (mut p_sum, mut r_sum, mut f_sum, mut w_sum) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..num_classes {
        if support[c] == 0 {
            per_class_accuracy.push(None);
            continue;
        }
        let tp = confusion[c][c];
        let p = ratio(tp, predicted[c]);
        let r = ratio(tp, support[c]);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        per_class_accuracy.push(Some(r * 100.0));
        let w = match averaging {
            Averaging::Macro => 1.0,
            Averaging::Weighted => support[c] as f64,
        };
        p_sum += w * p;
        r_sum += w * r;
        f_sum += w * f;
        w_sum += w;
    }
    let avg = |s: f64| if w_sum > 0.0 { 100.0 * s / w_sum } else { 0.0 };
    Ok(SampleMetrics {
        precision: avg(p_sum),
        recall: avg(r_sum),
        f1: avg(f_sum),
        null_accuracy: null_class.and_then(|n| per_class_accuracy.get(n).copied().flatten()),
        per_class_accuracy,
        confusion,
    })
}
