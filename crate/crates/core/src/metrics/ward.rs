//! Frame-level misalignment taxonomy for continuous activity recognition.
//!
//! Every class is scored one-vs-rest. A missed ground-truth frame is a
//! Deletion when its event is never hit, Fragmentation when two or more
//! predicted events hit it, and Underfill otherwise. A spurious predicted
//! frame is an Insertion when its event touches no ground truth, Merge when
//! it touches two or more events, and Overfill otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::runs;
use crate::types::{ClassId, SampleTimeline};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WardCounts {
    pub underfill: u64,
    pub overfill: u64,
    pub deletion: u64,
    pub insertion: u64,
    pub fragmentation: u64,
    pub merge: u64,
}

impl WardCounts {
    pub fn total(&self) -> u64 {
        self.underfill
            + self.overfill
            + self.deletion
            + self.insertion
            + self.fragmentation
            + self.merge
    }

    fn add(&mut self, other: &WardCounts) {
        self.underfill += other.underfill;
        self.overfill += other.overfill;
        self.deletion += other.deletion;
        self.insertion += other.insertion;
        self.fragmentation += other.fragmentation;
        self.merge += other.merge;
    }
}

/// Ratios in percent of all frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WardRatios {
    pub ur: f64,
    pub or: f64,
    pub dr: f64,
    pub ir: f64,
    pub fr: f64,
    pub mr: f64,
}

impl WardRatios {
    pub fn from_counts(counts: &WardCounts, frames: usize) -> Self {
        let pct = |c: u64| {
            if frames == 0 {
                0.0
            } else {
                100.0 * c as f64 / frames as f64
            }
        };
        Self {
            ur: pct(counts.underfill),
            or: pct(counts.overfill),
            dr: pct(counts.deletion),
            ir: pct(counts.insertion),
            fr: pct(counts.fragmentation),
            mr: pct(counts.merge),
        }
    }
}

/// Error-frame counts for a single binarized class.
pub fn ward_counts_binary(pred: &[bool], gt: &[bool]) -> WardCounts {
    let n = gt.len();
    let event_ids = |mask: &[bool]| -> (Vec<Option<usize>>, Vec<(usize, usize)>) {
        let mut ids = vec![None; n];
        let mut events = Vec::new();
        let as_u: Vec<usize> = mask.iter().map(|&b| usize::from(b)).collect();
        for (v, s, e) in runs(&as_u) {
            if v == 1 {
                ids[s..e].fill(Some(events.len()));
                events.push((s, e));
            }
        }
        (ids, events)
    };
    let (pred_ids, pred_events) = event_ids(pred);
    let (gt_ids, gt_events) = event_ids(gt);

    // Number of distinct events of `other` overlapping `range`. Events are
    // numbered in temporal order, so distinct ids within a range are a
    // contiguous ascending sequence.
    let overlaps = |ids: &[Option<usize>], (s, e): (usize, usize)| -> usize {
        let mut count = 0;
        let mut last = None;
        for id in ids[s..e].iter().flatten() {
            if last != Some(*id) {
                count += 1;
                last = Some(*id);
            }
        }
        count
    };

    let mut counts = WardCounts::default();
    for &ev in &gt_events {
        let missed = (ev.0..ev.1).filter(|&i| !pred[i]).count() as u64;
        match overlaps(&pred_ids, ev) {
            0 => counts.deletion += missed,
            1 => counts.underfill += missed,
            _ => counts.fragmentation += missed,
        }
    }
    for &ev in &pred_events {
        let spurious = (ev.0..ev.1).filter(|&i| !gt[i]).count() as u64;
        match overlaps(&gt_ids, ev) {
            0 => counts.insertion += spurious,
            1 => counts.overfill += spurious,
            _ => counts.merge += spurious,
        }
    }
    counts
}

/// Summed error frames over every non-NULL class. Without a NULL class every
/// class is scored.
pub fn ward_counts(
    pred: &SampleTimeline,
    gt: &SampleTimeline,
    null_class: Option<ClassId>,
) -> Result<WardCounts> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "prediction has {} samples, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let max_label = pred
        .labels
        .iter()
        .chain(&gt.labels)
        .copied()
        .max()
        .unwrap_or(0);
    let mut total = WardCounts::default();
    for c in 0..=max_label {
        if Some(c) == null_class {
            continue;
        }
        let p: Vec<bool> = pred.labels.iter().map(|&l| l == c).collect();
        let g: Vec<bool> = gt.labels.iter().map(|&l| l == c).collect();
        total.add(&ward_counts_binary(&p, &g));
    }
    Ok(total)
}

pub fn ward_errors(
    pred: &SampleTimeline,
    gt: &SampleTimeline,
    null_class: Option<ClassId>,
) -> Result<WardRatios> {
    let counts = ward_counts(pred, gt, null_class)?;
    Ok(WardRatios::from_counts(&counts, gt.len()))
}
