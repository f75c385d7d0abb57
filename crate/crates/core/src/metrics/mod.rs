//! Evaluation battery: per-sample classification metrics, misalignment
//! ratios, mAP over tIoU thresholds and segment length statistics.

mod ap;
mod bins;
mod classification;
mod ward;

pub use ap::{average_precision, map_suite, MapResult, SegmentSet, DEFAULT_TIOU_THRESHOLDS};
pub use bins::{length_bins, segment_seconds, LengthBin, LengthBinCounts};
pub use classification::{confusion_matrix, sample_metrics, Averaging, SampleMetrics};
pub use ward::{ward_counts, ward_counts_binary, ward_errors, WardCounts, WardRatios};

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassId, SampleTimeline, Segment};

/// All metrics for one evaluation sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub null_accuracy: Option<f64>,
    pub confusion: Vec<Vec<u64>>,
    pub ward: WardRatios,
    pub map_per_tiou: BTreeMap<String, f64>,
    pub avg_map: f64,
    /// Ground-truth segments per duration bin.
    pub length_bin_counts: LengthBinCounts,
    /// Predicted segments per duration bin.
    pub predicted_length_bin_counts: LengthBinCounts,
}

/// Inputs of one evaluation: timelines at sample granularity and segments
/// on the window grid.
#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub pred_timeline: &'a SampleTimeline,
    pub gt_timeline: &'a SampleTimeline,
    pub pred_segments: &'a [Segment],
    pub gt_segments: &'a [Segment],
    pub num_classes: usize,
    pub null_class: Option<ClassId>,
    pub stride: usize,
}

pub fn evaluate(
    input: EvalInput<'_>,
    thresholds: &[f64],
    averaging: Averaging,
) -> Result<EvalReport> {
    let sm = sample_metrics(
        input.pred_timeline,
        input.gt_timeline,
        input.num_classes,
        input.null_class,
        averaging,
    )?;
    let ward = ward_errors(input.pred_timeline, input.gt_timeline, input.null_class)?;
    let key = "sequence".to_string();
    let preds = SegmentSet::from([(key.clone(), input.pred_segments.to_vec())]);
    let gt = SegmentSet::from([(key, input.gt_segments.to_vec())]);
    let map = map_suite(&preds, &gt, thresholds)?;
    let rate = input.gt_timeline.sampling_rate;
    Ok(EvalReport {
        precision: sm.precision,
        recall: sm.recall,
        f1: sm.f1,
        per_class_accuracy: sm.per_class_accuracy,
        null_accuracy: sm.null_accuracy,
        confusion: sm.confusion,
        ward,
        map_per_tiou: map.per_tiou_map(),
        avg_map: map.avg_map,
        length_bin_counts: length_bins(input.gt_segments, input.stride, rate),
        predicted_length_bin_counts: length_bins(input.pred_segments, input.stride, rate),
    })
}

impl EvalReport {
    /// Named scalar metrics, in a fixed order.
    pub fn scalars(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("precision".to_string(), self.precision),
            ("recall".to_string(), self.recall),
            ("f1".to_string(), self.f1),
        ];
        if let Some(n) = self.null_accuracy {
            out.push(("null_accuracy".to_string(), n));
        }
        let w = &self.ward;
        for (name, v) in [
            ("ur", w.ur),
            ("or", w.or),
            ("dr", w.dr),
            ("ir", w.ir),
            ("fr", w.fr),
            ("mr", w.mr),
        ] {
            out.push((name.to_string(), v));
        }
        for (t, m) in &self.map_per_tiou {
            out.push((format!("map@{t}"), *m));
        }
        out.push(("avg_map".to_string(), self.avg_map));
        out
    }

    pub fn write_confusion_csv<W: Write>(&self, class_names: &[String], writer: W) -> Result<()> {
        if class_names.len() != self.confusion.len() {
            return Err(Error::Shape(format!(
                "{} class names for a {}-class confusion matrix",
                class_names.len(),
                self.confusion.len()
            )));
        }
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["gt\\pred".to_string()];
        header.extend(class_names.iter().cloned());
        wtr.write_record(&header)?;
        for (name, row) in class_names.iter().zip(&self.confusion) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<confusion>", e))
    }
}
