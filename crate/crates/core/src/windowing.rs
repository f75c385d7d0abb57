//! Sliding-window segmentation and vectorization of raw streams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassId, SensorStream, WindowGrid, WindowSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_seconds: f64,
    pub overlap_fraction: f64,
    pub normalize: bool,
    /// Flatten axis by axis instead of sample by sample.
    pub axis_major: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_seconds: 1.0,
            overlap_fraction: 0.5,
            normalize: true,
            axis_major: false,
        }
    }
}

impl WindowConfig {
    /// Window length and stride in samples at `sampling_rate`.
    pub fn geometry(&self, sampling_rate: f64) -> Result<(usize, usize)> {
        if !(self.window_seconds > 0.0) {
            return Err(Error::invalid(format!(
                "window_seconds must be positive, got {}",
                self.window_seconds
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::invalid(format!(
                "overlap_fraction must be in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        let window = (self.window_seconds * sampling_rate).round() as usize;
        if window < 2 {
            return Err(Error::invalid(format!(
                "window of {}s at {sampling_rate} Hz has fewer than 2 samples",
                self.window_seconds
            )));
        }
        let stride = (window as f64 * (1.0 - self.overlap_fraction)).round() as usize;
        if stride < 1 {
            return Err(Error::invalid("overlap leaves a stride below one sample"));
        }
        Ok((window, stride))
    }

    pub fn grid(&self, sampling_rate: f64, stream_len: usize) -> Result<WindowGrid> {
        let (window, stride) = self.geometry(sampling_rate)?;
        Ok(WindowGrid {
            window,
            stride,
            stream_len,
        })
    }

    pub fn layout(&self) -> Layout {
        if self.axis_major {
            Layout::AxisMajor
        } else {
            Layout::SampleMajor
        }
    }
}

/// Order in which a `W x S` window is flattened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// All axes of sample 1, then all axes of sample 2, ...
    SampleMajor,
    /// All samples of axis 1, then all samples of axis 2, ...
    AxisMajor,
}

/// Flattens a row-major `rows x cols` window into one vector.
pub fn vectorize(window: &[f64], rows: usize, cols: usize, layout: Layout) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 || window.is_empty() {
        return Err(Error::invalid("cannot vectorize an empty window"));
    }
    if window.len() != rows * cols {
        return Err(Error::Shape(format!(
            "window has {} values, expected {rows} x {cols}",
            window.len()
        )));
    }
    Ok(match layout {
        Layout::SampleMajor => window.to_vec(),
        Layout::AxisMajor => (0..cols)
            .flat_map(|c| (0..rows).map(move |r| window[r * cols + c]))
            .collect(),
    })
}

/// Inverse of [`vectorize`]: returns the row-major `rows x cols` window.
pub fn devectorize(vector: &[f64], rows: usize, cols: usize, layout: Layout) -> Result<Vec<f64>> {
    if vector.len() != rows * cols || vector.is_empty() {
        return Err(Error::Shape(format!(
            "vector of {} values cannot form a {rows} x {cols} window",
            vector.len()
        )));
    }
    Ok(match layout {
        Layout::SampleMajor => vector.to_vec(),
        Layout::AxisMajor => (0..rows)
            .flat_map(|r| (0..cols).map(move |c| vector[c * rows + r]))
            .collect(),
    })
}

/// Cuts a stream into windows and vectorizes each one. When `norm` is given
/// the features are z-scored with those (training-fold) statistics.
pub fn make_windows(
    stream: &SensorStream,
    cfg: &WindowConfig,
    norm: Option<&FeatureNorm>,
) -> Result<WindowSequence> {
    let grid = cfg.grid(stream.sampling_rate, stream.len())?;
    let count = grid.num_windows();
    if count == 0 {
        return Err(Error::invalid(format!(
            "stream {} has {} samples, shorter than one window of {}",
            stream.subject_id,
            stream.len(),
            grid.window
        )));
    }
    let s = stream.num_axes();
    let dim = grid.window * s;
    let mut features = Vec::with_capacity(count * dim);
    for t in 0..count {
        let span = grid.window_span(t);
        let raw = &stream.samples[span.start * s..span.end * s];
        features.extend(vectorize(raw, grid.window, s, cfg.layout())?);
    }
    let mut ws = WindowSequence::new(stream.subject_id.clone(), grid, dim, features)?;
    if let Some(norm) = norm {
        norm.apply(&mut ws)?;
    }
    Ok(ws)
}

/// Per-dimension mean and standard deviation of window features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNorm {
    pub fn fit(sequences: &[&WindowSequence]) -> Result<Self> {
        let first = sequences
            .first()
            .ok_or_else(|| Error::invalid("no sequences to fit normalization on"))?;
        let dim = first.dim;
        let mut sum = vec![0.0; dim];
        let mut n = 0usize;
        for ws in sequences {
            if ws.dim != dim {
                return Err(Error::Shape(format!(
                    "feature dimension {} differs from {dim}",
                    ws.dim
                )));
            }
            for row in ws.features.chunks_exact(dim) {
                sum.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
            n += ws.len();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; dim];
        for ws in sequences {
            for row in ws.features.chunks_exact(dim) {
                for ((a, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *a += (v - m) * (v - m);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, ws: &mut WindowSequence) -> Result<()> {
        if ws.dim != self.mean.len() {
            return Err(Error::Shape(format!(
                "normalization fitted on {} dims, sequence has {}",
                self.mean.len(),
                ws.dim
            )));
        }
        for row in ws.features.chunks_exact_mut(ws.dim) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(())
    }
}

/// Most frequent sample label inside window `index`; ties go to the label of
/// the window's center sample, then to the smallest class id.
pub fn window_majority_label(
    stream: &SensorStream,
    index: usize,
    cfg: &WindowConfig,
) -> Result<ClassId> {
    let grid = cfg.grid(stream.sampling_rate, stream.len())?;
    if index >= grid.num_windows() {
        return Err(Error::invalid(format!(
            "window {index} out of range ({} windows)",
            grid.num_windows()
        )));
    }
    let span = grid.window_span(index);
    let labels = &stream.labels[span.clone()];
    let mut counts = std::collections::BTreeMap::<ClassId, usize>::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    let center = labels[labels.len() / 2];
    if counts.get(&center) == Some(&best) {
        return Ok(center);
    }
    Ok(counts
        .into_iter()
        .find(|&(_, c)| c == best)
        .map(|(l, _)| l)
        .unwrap_or(center))
}
