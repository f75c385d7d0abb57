//! Average precision of temporal segments at a tIoU threshold and the mAP
//! suite averaged over several thresholds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{tiou_unchecked, ClassId, Segment};

pub const DEFAULT_TIOU_THRESHOLDS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];

/// Segments keyed by evaluation sequence (a subject, or a chunk of one).
/// Predictions never match ground truth of another sequence.
pub type SegmentSet = BTreeMap<String, Vec<Segment>>;

fn check_non_overlapping(gt: &[Segment]) -> Result<()> {
    let mut sorted: Vec<&Segment> = gt.iter().collect();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    for pair in sorted.windows(2) {
        if pair[0].end > pair[1].start {
            return Err(Error::invalid(format!(
                "overlapping ground-truth segments [{}, {}) and [{}, {})",
                pair[0].start, pair[0].end, pair[1].start, pair[1].end
            )));
        }
    }
    Ok(())
}

/// Ranks `(sequence index, segment)` predictions by descending score and
/// greedily matches each to the unmatched same-sequence ground truth with
/// the highest tIoU. Returns `(prediction index, is true positive)` in rank
/// order.
pub(crate) fn match_predictions(
    preds: &[(usize, Segment)],
    gt: &[(usize, Segment)],
    threshold: f64,
) -> Vec<(usize, bool)> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&preds[a].1, &preds[b].1);
        pb.score
            .total_cmp(&pa.score)
            .then(pa.start.total_cmp(&pb.start))
            .then(preds[a].0.cmp(&preds[b].0))
            .then(pa.end.total_cmp(&pb.end))
    });

    let mut matched = vec![false; gt.len()];
    order
        .into_iter()
        .map(|i| {
            let (seq, p) = &preds[i];
            let mut best: Option<(usize, f64)> = None;
            for (j, (gseq, g)) in gt.iter().enumerate() {
                if gseq != seq || matched[j] {
                    continue;
                }
                let iou = tiou_unchecked(p.interval(), g.interval());
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            match best {
                Some((j, iou)) if iou >= threshold => {
                    matched[j] = true;
                    (i, true)
                }
                _ => (i, false),
            }
        })
        .collect()
}

/// AP for one class pooled over several sequences.
pub(crate) fn pooled_average_precision(
    preds: &[(usize, Segment)],
    gt: &[(usize, Segment)],
    threshold: f64,
) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let hits: Vec<bool> = match_predictions(preds, gt, threshold)
        .into_iter()
        .map(|(_, hit)| hit)
        .collect();
    interpolated_ap(&hits, gt.len())
}

/// All-point interpolated AP from a ranked list of hit/miss flags.
fn interpolated_ap(hits: &[bool], positives: usize) -> f64 {
    let mut precision = Vec::with_capacity(hits.len() + 2);
    let mut recall = Vec::with_capacity(hits.len() + 2);
    precision.push(0.0);
    recall.push(0.0);
    let (mut tp, mut fp) = (0usize, 0usize);
    for &hit in hits {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / positives as f64);
    }
    precision.push(0.0);
    recall.push(1.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .filter(|&i| recall[i] != recall[i - 1])
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}

/// AP of one class's predictions against that class's ground truth within a
/// single sequence. Returns a value in `[0, 1]`.
pub fn average_precision(preds: &[Segment], gt: &[Segment], threshold: f64) -> Result<f64> {
    check_non_overlapping(gt)?;
    let p: Vec<(usize, Segment)> = preds.iter().map(|s| (0, *s)).collect();
    let g: Vec<(usize, Segment)> = gt.iter().map(|s| (0, *s)).collect();
    Ok(pooled_average_precision(&p, &g, threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    /// `(threshold, mAP in percent)` in threshold order.
    pub per_tiou: Vec<(f64, f64)>,
    pub avg_map: f64,
    /// Per-class AP (fraction) at each threshold, keyed by class id.
    pub per_class: BTreeMap<ClassId, Vec<f64>>,
}

impl MapResult {
    pub fn per_tiou_map(&self) -> BTreeMap<String, f64> {
        self.per_tiou
            .iter()
            .map(|(t, m)| (format!("{t:.2}"), *m))
            .collect()
    }
}

/// mAP at each threshold (mean AP over classes with at least one
/// ground-truth instance) and its average, both as percentages.
pub fn map_suite(preds: &SegmentSet, gt: &SegmentSet, thresholds: &[f64]) -> Result<MapResult> {
    for segs in gt.values() {
        for class in segs.iter().map(|s| s.label).collect::<BTreeSet<_>>() {
            let of_class: Vec<Segment> = segs.iter().filter(|s| s.label == class).copied().collect();
            check_non_overlapping(&of_class)?;
        }
    }
    let seq_index: BTreeMap<&str, usize> = gt
        .keys()
        .chain(preds.keys())
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, k)| (k, i))
        .collect();
    let flatten = |set: &SegmentSet, class: ClassId| -> Vec<(usize, Segment)> {
        set.iter()
            .flat_map(|(k, segs)| {
                let idx = seq_index[k.as_str()];
                segs.iter()
                    .filter(move |s| s.label == class)
                    .map(move |s| (idx, *s))
            })
            .collect()
    };
    let classes: BTreeSet<ClassId> = gt.values().flatten().map(|s| s.label).collect();

    let mut per_class = BTreeMap::new();
    for &class in &classes {
        let p = flatten(preds, class);
        let g = flatten(gt, class);
        let aps = thresholds
            .iter()
            .map(|&t| pooled_average_precision(&p, &g, t))
            .collect();
        per_class.insert(class, aps);
    }
    let per_tiou: Vec<(f64, f64)> = thresholds
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let m = if per_class.is_empty() {
                0.0
            } else {
                per_class.values().map(|aps: &Vec<f64>| aps[k]).sum::<f64>() / per_class.len() as f64
            };
            (t, 100.0 * m)
        })
        .collect();
    let avg_map = if per_tiou.is_empty() {
        0.0
    } else {
        per_tiou.iter().map(|(_, m)| m).sum::<f64>() / per_tiou.len() as f64
    };
    Ok(MapResult {
        per_tiou,
        avg_map,
        per_class,
    })
}
