//! Turning predicted segments or per-window predictions into per-sample
//! timelines, plus score thresholding and majority-vote smoothing.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingestion::runs;
use crate::types::{
    segment_to_time_range, ClassId, DatasetManifest, SampleTimeline, Segment, WindowGrid,
};

/// Majority-filter widths (seconds) used for window-based models on the
/// public benchmarks.
pub const MAJORITY_FILTER_PRESETS: [(&str, f64); 6] = [
    ("opportunity", 2.5),
    ("wetlab", 20.0),
    ("sbhar", 5.0),
    ("wear", 15.0),
    ("hangtime", 5.0),
    ("rwhar", 40.0),
];

pub fn majority_filter_preset(dataset: &str) -> Option<f64> {
    let key: String = dataset
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    MAJORITY_FILTER_PRESETS
        .iter()
        .find(|(name, _)| *name == key)
        .map(|&(_, w)| w)
}

pub fn threshold_segments(segs: &[Segment], theta: f64) -> Vec<Segment> {
    segs.iter().filter(|s| s.score >= theta).copied().collect()
}

fn paint_order(a: &Segment, b: &Segment) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.start.total_cmp(&b.start))
        .then(a.label.cmp(&b.label))
        .then(a.end.total_cmp(&b.end))
}

/// Paints segments lowest-confidence first so that the most confident
/// segment owns every overlap. Returns the timeline together with the score
/// of the segment that painted each sample (0 for background).
pub fn rasterize_scored(
    segs: &[Segment],
    grid: &WindowGrid,
    background: ClassId,
    sampling_rate: f64,
) -> (SampleTimeline, Vec<f64>) {
    let mut order: Vec<&Segment> = segs.iter().collect();
    order.sort_by(|a, b| paint_order(a, b));
    let mut labels = vec![background; grid.stream_len];
    let mut scores = vec![0.0; grid.stream_len];
    for seg in order {
        let range = segment_to_time_range(seg, grid);
        labels[range.clone()].fill(seg.label);
        scores[range].fill(seg.score);
    }
    (SampleTimeline::new(labels, sampling_rate), scores)
}

pub fn rasterize_segments(
    segs: &[Segment],
    grid: &WindowGrid,
    background: ClassId,
    sampling_rate: f64,
) -> SampleTimeline {
    rasterize_scored(segs, grid, background, sampling_rate).0
}

/// Paints window predictions in temporal order, later windows overwriting
/// the overlap. Samples after the last complete window take its label.
pub fn rasterize_windows(
    window_preds: &[ClassId],
    grid: &WindowGrid,
    sampling_rate: f64,
) -> Result<SampleTimeline> {
    if window_preds.len() != grid.num_windows() {
        return Err(Error::Shape(format!(
            "{} window predictions for {} windows",
            window_preds.len(),
            grid.num_windows()
        )));
    }
    let Some(&last) = window_preds.last() else {
        return Err(Error::invalid("no windows to rasterize"));
    };
    let mut labels = vec![last; grid.stream_len];
    for (t, &label) in window_preds.iter().enumerate() {
        labels[grid.window_span(t)].fill(label);
    }
    Ok(SampleTimeline::new(labels, sampling_rate))
}

/// Odd number of samples covered by a majority filter of `width_seconds`.
pub fn majority_kernel(width_seconds: f64, sampling_rate: f64) -> usize {
    2 * ((width_seconds * sampling_rate / 2.0).floor().max(0.0) as usize) + 1
}

/// Centered majority vote. Windows are truncated at the boundaries; on a
/// tie the sample keeps its own label when it is among the most frequent.
pub fn majority_filter(timeline: &SampleTimeline, width_seconds: f64) -> SampleTimeline {
    let k = majority_kernel(width_seconds, timeline.sampling_rate);
    let n = timeline.len();
    if k <= 1 || n == 0 {
        return timeline.clone();
    }
    let half = k / 2;
    let labels = &timeline.labels;
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max_label + 1];
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let want_lo = i.saturating_sub(half);
        let want_hi = (i + half + 1).min(n);
        while hi < want_hi {
            counts[labels[hi]] += 1;
            hi += 1;
        }
        while lo < want_lo {
            counts[labels[lo]] -= 1;
            lo += 1;
        }
        let best = *counts.iter().max().unwrap();
        let own = labels[i];
        out.push(if counts[own] == best {
            own
        } else {
            counts.iter().position(|&c| c == best).unwrap()
        });
    }
    SampleTimeline::new(out, timeline.sampling_rate)
}

/// Maximal non-NULL runs of a timeline as score-1 segments on the window grid.
pub fn timeline_to_segments(
    timeline: &SampleTimeline,
    stride: usize,
    null_class: Option<ClassId>,
) -> Vec<Segment> {
    crate::ingestion::labels_to_segments(timeline, stride, null_class)
}

/// Raster-based duplicate resolution: thresholds the decoded segments,
/// paints them by confidence and reads the result back as segments. Each
/// output segment carries the mean confidence of the samples it covers.
#[derive(Debug, Clone)]
pub struct RasterizedPrediction {
    pub timeline: SampleTimeline,
    pub segments: Vec<Segment>,
}

pub fn rasterize_prediction(
    decoded: &[Segment],
    theta: f64,
    grid: &WindowGrid,
    null_class: Option<ClassId>,
    sampling_rate: f64,
) -> RasterizedPrediction {
    let kept = threshold_segments(decoded, theta);
    let background = null_class.unwrap_or(0);
    let (timeline, scores) = rasterize_scored(&kept, grid, background, sampling_rate);
    let mut segments = Vec::new();
    for (label, start, end) in runs(&timeline.labels) {
        if Some(label) == null_class {
            continue;
        }
        let painted = &scores[start..end];
        // Background-labelled runs without a NULL class have score 0.
        if painted.iter().all(|&s| s == 0.0) {
            continue;
        }
        let score = painted.iter().sum::<f64>() / painted.len() as f64;
        let stride = grid.stride as f64;
        segments.push(Segment::new(
            start as f64 / stride,
            end as f64 / stride,
            label,
            score,
        ));
    }
    RasterizedPrediction { timeline, segments }
}

/// One row of the segment interchange CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub subject_id: String,
    pub segment: Segment,
}

const SEGMENT_HEADER: [&str; 5] = ["subject_id", "start_window", "end_window", "label", "score"];

pub fn write_segments_csv(
    records: &[SegmentRecord],
    manifest: Option<&DatasetManifest>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_segments(records, manifest, BufWriter::new(file))
}

pub fn write_segments<W: std::io::Write>(
    records: &[SegmentRecord],
    manifest: Option<&DatasetManifest>,
    writer: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SEGMENT_HEADER)?;
    for r in records {
        let label = match manifest {
            Some(m) => m.class_names[r.segment.label].clone(),
            None => r.segment.label.to_string(),
        };
        wtr.write_record([
            r.subject_id.clone(),
            r.segment.start.to_string(),
            r.segment.end.to_string(),
            label,
            r.segment.score.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<segments>", e))
}

pub fn read_segments_csv(
    path: impl AsRef<Path>,
    manifest: Option<&DatasetManifest>,
) -> Result<Vec<SegmentRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_segments(file, manifest, &path.to_string_lossy())
}

/// Labels may be class names (resolved through `manifest`) or numeric ids.
pub fn read_segments<R: std::io::Read>(
    reader: R,
    manifest: Option<&DatasetManifest>,
    source: &str,
) -> Result<Vec<SegmentRecord>> {
    let names: HashMap<&str, ClassId> = manifest
        .map(|m| {
            m.class_names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.as_str(), i))
                .collect()
        })
        .unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SEGMENT_HEADER {
        return Err(Error::format(
            "segment header",
            source,
            format!("expected {SEGMENT_HEADER:?}, found {header:?}"),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let loc = format!("{source}:{}", i + 2);
        let num = |j: usize| -> Result<f64> {
            record[j].parse().map_err(|_| {
                Error::format("segment row", loc.clone(), format!("bad number {:?}", &record[j]))
            })
        };
        let (start, end, score) = (num(1)?, num(2)?, num(4)?);
        let label_text = &record[3];
        let label = match names.get(label_text) {
            Some(&id) => id,
            None => label_text.parse::<ClassId>().map_err(|_| {
                Error::format("segment row", loc.clone(), format!("unknown label {label_text:?}"))
            })?,
        };
        if let Some(m) = manifest {
            if label >= m.num_classes() {
                return Err(Error::format("segment row", loc, format!("label {label} out of range")));
            }
        }
        if !(start < end) {
            return Err(Error::format("segment row", loc, "start must precede end"));
        }
        out.push(SegmentRecord {
            subject_id: record[0].to_string(),
            segment: Segment::new(start, end, label, score),
        });
    }
    Ok(out)
}
