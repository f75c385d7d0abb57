//! Near-online evaluation: a model trained on whole streams predicts each
//! fixed-length chunk of the validation stream on its own.

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::data::Dataset;
use super::loso::TrainedFold;
use crate::error::Result;
use crate::localizer::decode;
use crate::metrics::{map_suite, sample_metrics, SegmentSet};
use crate::postprocess::{majority_filter, rasterize_prediction};
use crate::types::{Segment, WindowGrid};

/// Metrics of one fold at one chunk size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkMetrics {
    pub f1: f64,
    pub c_map: f64,
    pub reconstructed_map: f64,
    /// The chunk size is below one window stride, so no chunk holds a window
    /// and nothing is predicted.
    pub too_short: bool,
}

/// Window ranges of consecutive chunks of `per_chunk` windows.
pub fn chunk_ranges(num_windows: usize, per_chunk: usize) -> Vec<std::ops::Range<usize>> {
    if per_chunk == 0 {
        return Vec::new();
    }
    (0..num_windows)
        .step_by(per_chunk)
        .map(|s| s..(s + per_chunk).min(num_windows))
        .collect()
}

/// Windows per chunk: `floor(chunk_seconds / stride_seconds)`; `None` means
/// one chunk spanning the whole stream.
pub fn windows_per_chunk(chunk_seconds: Option<f64>, grid: &WindowGrid, rate: f64) -> usize {
    match chunk_seconds {
        None => grid.num_windows(),
        Some(s) => {
            let stride_s = grid.stride as f64 / rate;
            // Tolerate representation error, e.g. 0.3 / 0.1.
            ((s / stride_s) + 1e-9).floor() as usize
        }
    }
}

/// Clips ground truth to `[lo, hi)` and rebases it to `lo`. Fragments that
/// were cut and end up shorter than `min_len` are dropped.
pub fn clip_ground_truth(gt: &[Segment], lo: f64, hi: f64, min_len: f64) -> Vec<Segment> {
    gt.iter()
        .filter_map(|s| {
            let start = s.start.max(lo);
            let end = s.end.min(hi);
            if end <= start {
                return None;
            }
            let cut = start != s.start || end != s.end;
            if cut && end - start < min_len {
                return None;
            }
            Some(Segment::new(start - lo, end - lo, s.label, s.score))
        })
        .collect()
}

/// Chunked metrics for one trained fold with fixed postprocessing.
pub fn evaluate_chunked_fold(
    dataset: &Dataset,
    cfg: &RunConfig,
    subject: &str,
    fold: &TrainedFold,
    chunk_seconds: Option<f64>,
    theta: f64,
    majority_width: f64,
) -> Result<ChunkMetrics> {
    let data = dataset.subject(subject)?;
    let grid = data.grid;
    let rate = dataset.manifest.sampling_rate;
    let null = dataset.manifest.null_class;
    let stride = grid.stride;
    let ws = &fold.validation;
    let per_chunk = windows_per_chunk(chunk_seconds, &grid, rate);
    let ranges = chunk_ranges(ws.len(), per_chunk);

    let mut reconstructed = Vec::new();
    let mut chunk_preds = SegmentSet::new();
    let mut chunk_gt = SegmentSet::new();
    for (k, range) in ranges.iter().enumerate() {
        let last = k + 1 == ranges.len();
        let c0 = range.start as f64;
        let chunk = ws.slice(range.clone());
        // The final chunk owns the stream up to its true end.
        let (owned_samples, extent) = if last {
            (grid.stream_len - range.start * stride, grid.time_extent() - c0)
        } else {
            (range.len() * stride, chunk.grid().time_extent())
        };
        let labels = fold.model.forward(&chunk)?;
        let local = decode(
            &labels,
            &fold.model.classes,
            fold.model.config.decode_min_prob,
            extent,
        );
        reconstructed.extend(
            local
                .iter()
                .map(|s| Segment::new(s.start + c0, s.end + c0, s.label, s.score)),
        );

        let chunk_grid = WindowGrid {
            window: grid.window,
            stride,
            stream_len: owned_samples,
        };
        let key = format!("{subject}#{k:06}");
        let rp = rasterize_prediction(&local, theta, &chunk_grid, null, rate);
        let owned_units = owned_samples as f64 / stride as f64;
        let gt = clip_ground_truth(
            &data.ground_truth.segments,
            c0,
            c0 + owned_units,
            grid.window_units(),
        );
        chunk_preds.insert(key.clone(), rp.segments);
        chunk_gt.insert(key, gt);
    }
    let c_map = map_suite(&chunk_preds, &chunk_gt, &cfg.tiou_thresholds)?.avg_map;

    let rp = rasterize_prediction(&reconstructed, theta, &grid, null, rate);
    let preds = SegmentSet::from([(subject.to_string(), rp.segments)]);
    let gt = SegmentSet::from([(subject.to_string(), data.ground_truth.segments.clone())]);
    let reconstructed_map = map_suite(&preds, &gt, &cfg.tiou_thresholds)?.avg_map;
    let timeline = if majority_width > 0.0 {
        majority_filter(&rp.timeline, majority_width)
    } else {
        rp.timeline
    };
    let f1 = sample_metrics(
        &timeline,
        &data.ground_truth.timeline,
        dataset.manifest.num_classes(),
        null,
        cfg.averaging,
    )?
    .f1;
    Ok(ChunkMetrics {
        f1,
        c_map,
        reconstructed_map,
        too_short: per_chunk == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_everything() {
        assert_eq!(chunk_ranges(7, 3), vec![0..3, 3..6, 6..7]);
        assert_eq!(chunk_ranges(6, 10), vec![0..6]);
        assert!(chunk_ranges(5, 0).is_empty());
    }

    #[test]
    fn chunk_window_counts() {
        let grid = WindowGrid {
            window: 50,
            stride: 25,
            stream_len: 5000,
        };
        assert_eq!(windows_per_chunk(Some(1.0), &grid, 50.0), 2);
        assert_eq!(windows_per_chunk(Some(5.0), &grid, 50.0), 10);
        assert_eq!(windows_per_chunk(Some(0.3), &grid, 50.0), 0);
        assert_eq!(windows_per_chunk(None, &grid, 50.0), 199);
    }

    #[test]
    fn forty_seconds_in_five_second_chunks() {
        // 0.5 s per unit: a 40 s segment is 80 units, a 5 s chunk 10 units.
        let gt = [Segment::new(20.0, 100.0, 1, 1.0)];
        let pieces: Vec<Segment> = (0..20)
            .flat_map(|k| clip_ground_truth(&gt, k as f64 * 10.0, (k + 1) as f64 * 10.0, 2.0))
            .collect();
        assert_eq!(pieces.len(), 8);
        assert!(pieces.iter().all(|s| s.start == 0.0 && s.end == 10.0));
    }

    #[test]
    fn short_cut_fragments_are_dropped() {
        let gt = [Segment::new(9.0, 12.0, 1, 1.0), Segment::new(14.0, 15.0, 2, 1.0)];
        let clipped = clip_ground_truth(&gt, 10.0, 20.0, 2.0);
        // [10, 12) is cut and exactly one window long; the short uncut
        // segment survives.
        assert_eq!(
            clipped,
            vec![Segment::new(0.0, 2.0, 1, 1.0), Segment::new(4.0, 5.0, 2, 1.0)]
        );
        assert!(clip_ground_truth(&gt, 11.5, 20.0, 2.0).iter().all(|s| s.label == 2));
    }
}
