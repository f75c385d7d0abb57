use serde::{Deserialize, Serialize};

use crate::types::Segment;

/// Segment duration bins with closed upper edges (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LengthBin {
    XS,
    S,
    M,
    L,
    XL,
}

impl LengthBin {
    pub const ALL: [LengthBin; 5] = [Self::XS, Self::S, Self::M, Self::L, Self::XL];

    /// Upper edges of XS..L; everything longer is XL.
    const EDGES: [f64; 4] = [3.0, 6.0, 12.0, 18.0];

    pub fn of_duration(seconds: f64) -> Self {
        // Absorbs rounding from the window-unit to seconds conversion.
        const EPS: f64 = 1e-9;
        match Self::EDGES.iter().position(|&edge| seconds <= edge + EPS) {
            Some(0) => Self::XS,
            Some(1) => Self::S,
            Some(2) => Self::M,
            Some(3) => Self::L,
            _ => Self::XL,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::XS => "XS",
            Self::S => "S",
            Self::M => "M",
            Self::L => "L",
            Self::XL => "XL",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct LengthBinCounts {
    pub XS: usize,
    pub S: usize,
    pub M: usize,
    pub L: usize,
    pub XL: usize,
}

impl LengthBinCounts {
    pub fn get(&self, bin: LengthBin) -> usize {
        match bin {
            LengthBin::XS => self.XS,
            LengthBin::S => self.S,
            LengthBin::M => self.M,
            LengthBin::L => self.L,
            LengthBin::XL => self.XL,
        }
    }

    fn bump(&mut self, bin: LengthBin) {
        match bin {
            LengthBin::XS => self.XS += 1,
            LengthBin::S => self.S += 1,
            LengthBin::M => self.M += 1,
            LengthBin::L => self.L += 1,
            LengthBin::XL => self.XL += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.XS + self.S + self.M + self.L + self.XL
    }
}

/// Duration in seconds of a window-unit segment.
pub fn segment_seconds(seg: &Segment, stride: usize, sampling_rate: f64) -> f64 {
    seg.duration() * stride as f64 / sampling_rate
}

pub fn length_bins(segs: &[Segment], stride: usize, sampling_rate: f64) -> LengthBinCounts {
    let mut counts = LengthBinCounts::default();
    for s in segs {
        counts.bump(LengthBin::of_duration(segment_seconds(s, stride, sampling_rate)));
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges() {
        let cases = [
            (0.5, LengthBin::XS),
            (3.0, LengthBin::XS),
            (3.001, LengthBin::S),
            (6.0, LengthBin::S),
            (12.0, LengthBin::M),
            (18.0, LengthBin::L),
            (18.001, LengthBin::XL),
            (19.0, LengthBin::XL),
        ];
        for (d, bin) in cases {
            assert_eq!(LengthBin::of_duration(d), bin, "{d}");
        }
    }

    #[test]
    fn counts_from_window_units() {
        // stride 25 at 50 Hz: one unit = 0.5 s.
        let segs = [
            Segment::new(0.0, 6.0, 1, 1.0),  // 3 s
            Segment::new(0.0, 6.5, 1, 1.0),  // 3.25 s
            Segment::new(1.0, 41.0, 1, 1.0), // 20 s
        ];
        let c = length_bins(&segs, 25, 50.0);
        assert_eq!((c.XS, c.S, c.M, c.L, c.XL), (1, 1, 0, 0, 1));
        assert_eq!(c.total(), 3);
    }
}
