use crate::types::{ForegroundClasses, Segment, SeqLabel};

/// Turns per-point predictions into scored segments: one per point and class
/// with probability at least `min_prob`, clipped to `[0, extent]`. Points
/// that predict a zero-length interval are skipped. No suppression happens
/// here; overlapping candidates are resolved later by rasterization.
pub fn decode(
    labels: &[SeqLabel],
    classes: &ForegroundClasses,
    min_prob: f64,
    extent: f64,
) -> Vec<Segment> {
    let mut out = Vec::new();
    for point in labels {
        if !(point.d_start + point.d_end > 0.0) {
            continue;
        }
        let start = (point.timestamp - point.d_start).clamp(0.0, extent);
        let end = (point.timestamp + point.d_end).clamp(0.0, extent);
        if end <= start {
            continue;
        }
        for (channel, &p) in point.class_probs.iter().enumerate() {
            if p >= min_prob {
                out.push(Segment::new(start, end, classes.class_of(channel), p));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(t: f64, d: (f64, f64), probs: Vec<f64>) -> SeqLabel {
        SeqLabel {
            class_probs: probs,
            d_start: d.0,
            d_end: d.1,
            timestamp: t,
            level_stride: 1,
        }
    }

    #[test]
    fn single_point() {
        let classes = ForegroundClasses::new(3, Some(0));
        let segs = decode(&[label(10.0, (3.0, 5.0), vec![0.9, 0.0])], &classes, 1e-3, 100.0);
        assert_eq!(segs, vec![Segment::new(7.0, 15.0, 1, 0.9)]);
    }

    #[test]
    fn filters_and_skips() {
        let classes = ForegroundClasses::new(3, Some(0));
        let low = label(10.0, (3.0, 5.0), vec![1e-4, 5e-4]);
        assert!(decode(&[low], &classes, 1e-3, 100.0).is_empty());
        let flat = label(10.0, (0.0, 0.0), vec![0.9, 0.9]);
        assert!(decode(&[flat], &classes, 1e-3, 100.0).is_empty());
    }

    #[test]
    fn clips_and_keeps_every_class() {
        let classes = ForegroundClasses::new(2, None);
        let segs = decode(&[label(1.0, (3.0, 50.0), vec![0.4, 0.6])], &classes, 1e-3, 20.0);
        assert_eq!(
            segs,
            vec![Segment::new(0.0, 20.0, 0, 0.4), Segment::new(0.0, 20.0, 1, 0.6)]
        );
    }

    #[test]
    fn inverse_before_clipping() {
        let classes = ForegroundClasses::new(2, Some(0));
        for i in 0..50 {
            let t = 5.0 + i as f64 * 0.37;
            let d = (0.1 + (i % 7) as f64 * 0.61, 0.2 + (i % 5) as f64 * 0.43);
            let s = &decode(&[label(t, d, vec![0.5])], &classes, 1e-3, 1e6)[0];
            assert_eq!(t - s.start, t - (t - d.0));
            assert_eq!(s.end - t, (t + d.1) - t);
        }
    }
}
