//! Domain types shared by every stage of the pipeline, plus the interval
//! arithmetic that ties window-unit segments to raw sample indices.
//!
//! Segment boundaries live on the window grid: position `u` corresponds to
//! raw sample `u * stride`. Conversion to samples only happens when a segment
//! is painted onto a [`SampleTimeline`].

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into [`DatasetManifest::class_names`]. When a dataset has a NULL
/// class it is always id 0.
pub type ClassId = usize;

/// One subject's raw multi-axis recording with per-sample labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub subject_id: String,
    pub sampling_rate: f64,
    pub axes: Vec<String>,
    /// Row-major `len() x axes.len()` matrix.
    pub samples: Vec<f64>,
    pub labels: Vec<ClassId>,
}

impl SensorStream {
    pub fn new(
        subject_id: impl Into<String>,
        sampling_rate: f64,
        axes: Vec<String>,
        samples: Vec<f64>,
        labels: Vec<ClassId>,
        num_classes: usize,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if !(sampling_rate > 0.0) || !sampling_rate.is_finite() {
            return Err(Error::invalid(format!(
                "sampling rate must be positive, got {sampling_rate}"
            )));
        }
        if axes.is_empty() {
            return Err(Error::invalid("stream needs at least one axis"));
        }
        if labels.is_empty() {
            return Err(Error::invalid(format!("stream {subject_id} is empty")));
        }
        if samples.len() != labels.len() * axes.len() {
            return Err(Error::Shape(format!(
                "stream {subject_id}: {} values for {} rows x {} axes",
                samples.len(),
                labels.len(),
                axes.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "stream {subject_id}: label {bad} outside {num_classes} classes"
            )));
        }
        Ok(Self {
            subject_id,
            sampling_rate,
            axes,
            samples,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn row(&self, index: usize) -> &[f64] {
        let s = self.num_axes();
        &self.samples[index * s..(index + 1) * s]
    }

    pub fn timeline(&self) -> SampleTimeline {
        SampleTimeline {
            labels: self.labels.clone(),
            sampling_rate: self.sampling_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub class_names: Vec<String>,
    #[serde(default)]
    pub null_class: Option<ClassId>,
    pub sampling_rate: f64,
    pub axes: Vec<String>,
    pub subjects: Vec<SubjectEntry>,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Classes the localizer predicts: everything except NULL.
    pub fn foreground(&self) -> ForegroundClasses {
        ForegroundClasses::new(self.num_classes(), self.null_class)
    }

    pub fn background_label(&self) -> ClassId {
        self.null_class.unwrap_or(0)
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }
}

/// Mapping between dataset class ids and the localizer's foreground channel
/// indices. With a NULL class (always id 0) channel `k` is class `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForegroundClasses {
    pub num_classes: usize,
    pub has_null: bool,
}

impl ForegroundClasses {
    pub fn new(num_classes: usize, null_class: Option<ClassId>) -> Self {
        debug_assert!(null_class.is_none_or(|c| c == 0));
        Self {
            num_classes,
            has_null: null_class.is_some(),
        }
    }

    pub fn len(&self) -> usize {
        self.num_classes - usize::from(self.has_null)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_of(&self, class: ClassId) -> Option<usize> {
        if self.has_null {
            class.checked_sub(1)
        } else {
            Some(class)
        }
    }

    pub fn class_of(&self, channel: usize) -> ClassId {
        channel + usize::from(self.has_null)
    }

    pub fn null_class(&self) -> Option<ClassId> {
        self.has_null.then_some(0)
    }

    pub fn background(&self) -> ClassId {
        0
    }
}

/// Sliding-window geometry over a raw stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowGrid {
    pub window: usize,
    pub stride: usize,
    /// Raw sample count of the underlying stream.
    pub stream_len: usize,
}

impl WindowGrid {
    /// Number of complete windows; trailing partial windows are dropped.
    pub fn num_windows(&self) -> usize {
        if self.stream_len < self.window || self.stride == 0 {
            0
        } else {
            (self.stream_len - self.window) / self.stride + 1
        }
    }

    pub fn window_span(&self, t: usize) -> Range<usize> {
        let start = t * self.stride;
        start..start + self.window
    }

    /// Length of the whole stream in window-grid units.
    pub fn time_extent(&self) -> f64 {
        self.stream_len as f64 / self.stride as f64
    }

    /// Duration of one window in window-grid units.
    pub fn window_units(&self) -> f64 {
        self.window as f64 / self.stride as f64
    }

    /// Raw sample index of a window-grid position.
    pub fn to_sample(&self, units: f64) -> usize {
        let s = (units * self.stride as f64).round();
        if s <= 0.0 {
            0
        } else {
            (s as usize).min(self.stream_len)
        }
    }
}

/// Ordered per-window feature vectors for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSequence {
    pub subject_id: String,
    pub window_size: usize,
    pub stride: usize,
    pub stream_len: usize,
    pub dim: usize,
    /// Row-major `len() x dim`.
    pub features: Vec<f64>,
    pub window_starts: Vec<usize>,
}

impl WindowSequence {
    pub fn new(
        subject_id: impl Into<String>,
        grid: WindowGrid,
        dim: usize,
        features: Vec<f64>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        let count = grid.num_windows();
        if count == 0 {
            return Err(Error::invalid(format!(
                "{subject_id}: stream of {} samples holds no window of {}",
                grid.stream_len, grid.window
            )));
        }
        if dim == 0 || features.len() != count * dim {
            return Err(Error::Shape(format!(
                "{subject_id}: expected {count} x {dim} features, got {} values",
                features.len()
            )));
        }
        Ok(Self {
            subject_id,
            window_size: grid.window,
            stride: grid.stride,
            stream_len: grid.stream_len,
            dim,
            features,
            window_starts: (0..count).map(|t| t * grid.stride).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.window_starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window_starts.is_empty()
    }

    pub fn grid(&self) -> WindowGrid {
        WindowGrid {
            window: self.window_size,
            stride: self.stride,
            stream_len: self.stream_len,
        }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.features[t * self.dim..(t + 1) * self.dim]
    }

    /// Consecutive windows `range` as their own sequence. The chunk's stream
    /// starts at its first window and ends where its last window ends.
    pub fn slice(&self, range: Range<usize>) -> WindowSequence {
        let first = self.window_starts[range.start];
        let last = self.window_starts[range.end - 1];
        WindowSequence {
            subject_id: self.subject_id.clone(),
            window_size: self.window_size,
            stride: self.stride,
            stream_len: last + self.window_size - first,
            dim: self.dim,
            features: self.features[range.start * self.dim..range.end * self.dim].to_vec(),
            window_starts: self.window_starts[range.clone()]
                .iter()
                .map(|s| s - first)
                .collect(),
        }
    }
}

/// An activity instance on the window grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: ClassId,
    pub score: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64, label: ClassId, score: f64) -> Self {
        Self {
            start,
            end,
            label,
            score,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.start, self.end)
    }
}

/// Per-sample class labels at the stream's sampling rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTimeline {
    pub labels: Vec<ClassId>,
    pub sampling_rate: f64,
}

impl SampleTimeline {
    pub fn new(labels: Vec<ClassId>, sampling_rate: f64) -> Self {
        Self {
            labels,
            sampling_rate,
        }
    }

    pub fn filled(len: usize, label: ClassId, sampling_rate: f64) -> Self {
        Self::new(vec![label; len], sampling_rate)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Localizer output at one pyramid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqLabel {
    pub class_probs: Vec<f64>,
    pub d_start: f64,
    pub d_end: f64,
    pub timestamp: f64,
    pub level_stride: usize,
}

/// Temporal IoU of two half-open intervals.
pub fn tiou(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    if !(a.0 < a.1) || !(b.0 < b.1) {
        return Err(Error::invalid(format!(
            "degenerate interval in tiou: {a:?} vs {b:?}"
        )));
    }
    Ok(tiou_unchecked(a, b))
}

pub(crate) fn tiou_unchecked(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Raw samples touched by the windows a segment spans: the start maps to the
/// first covered window's first sample and the end is extended by the
/// window overhang `W - stride`. Clipped to the stream.
pub fn segment_to_sample_range(seg: &Segment, grid: &WindowGrid) -> Range<usize> {
    let stride = grid.stride as f64;
    let clip = |x: f64| -> usize {
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(grid.stream_len)
        }
    };
    let start = clip((seg.start * stride).round());
    let overhang = grid.window.saturating_sub(grid.stride) as f64;
    let end = clip((seg.end * stride).round() + overhang);
    start..end.max(start)
}

/// Raw samples occupied by a segment read as a time interval on the grid:
/// `[round(start * stride), round(end * stride))`. Used for painting.
pub fn segment_to_time_range(seg: &Segment, grid: &WindowGrid) -> Range<usize> {
    let start = grid.to_sample(seg.start);
    let end = grid.to_sample(seg.end);
    start..end.max(start)
}
