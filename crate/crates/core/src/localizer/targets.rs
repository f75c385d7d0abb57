use serde::{Deserialize, Serialize};

use super::config::RegressionRange;
use crate::types::{ClassId, Segment};

/// A position in the feature pyramid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PyramidPoint {
    pub level: usize,
    pub index_in_level: usize,
    /// Window-grid position of the point: the middle of the time span its
    /// pooled windows cover.
    pub timestamp: f64,
    pub stride: usize,
}

/// Level sizes `ceil(T / 2^l)` for `l = 0..levels`.
pub fn level_sizes(num_windows: usize, levels: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(levels);
    let mut n = num_windows;
    for _ in 0..levels {
        sizes.push(n);
        n = n.div_ceil(2);
    }
    sizes
}

/// Pyramid points in level order. `window_units` is the duration of one
/// window on the grid (`W / stride`).
pub fn pyramid_points(num_windows: usize, levels: usize, window_units: f64) -> Vec<PyramidPoint> {
    let mut points = Vec::new();
    for (level, &n) in level_sizes(num_windows, levels).iter().enumerate() {
        let stride = 1usize << level;
        let offset = ((stride - 1) as f64 + window_units) / 2.0;
        for i in 0..n {
            points.push(PyramidPoint {
                level,
                index_in_level: i,
                timestamp: (i * stride) as f64 + offset,
                stride,
            });
        }
    }
    points
}

/// Training target of one pyramid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointTarget {
    /// `None` for background.
    pub label: Option<ClassId>,
    pub d_start: f64,
    pub d_end: f64,
}

impl PointTarget {
    pub const BACKGROUND: PointTarget = PointTarget {
        label: None,
        d_start: 0.0,
        d_end: 0.0,
    };
}

/// A point is positive for a segment when its timestamp lies in `[s, e)` and
/// `max(t - s, e - t)` falls in its level's regression range. The shortest
/// matching segment wins.
pub fn assign_targets(
    points: &[PyramidPoint],
    gt: &[Segment],
    ranges: &[RegressionRange],
) -> Vec<PointTarget> {
    points
        .iter()
        .map(|p| {
            let t = p.timestamp;
            let range = ranges[p.level];
            gt.iter()
                .filter(|s| s.start <= t && t < s.end && range.contains((t - s.start).max(s.end - t)))
                .min_by(|a, b| a.duration().total_cmp(&b.duration()))
                .map_or(PointTarget::BACKGROUND, |s| PointTarget {
                    label: Some(s.label),
                    d_start: t - s.start,
                    d_end: s.end - t,
                })
        })
        .collect()
}
