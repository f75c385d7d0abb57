//! Synthetic inertial datasets with exact ground truth.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{save_manifest, write_stream};
use crate::metrics::LengthBin;
use crate::types::{DatasetManifest, SensorStream, SubjectEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub name: String,
    /// Activity classes, not counting NULL.
    pub num_classes: usize,
    pub num_subjects: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
    pub sampling_rate: f64,
    pub num_axes: usize,
    /// Segments per subject in each duration bin, keyed by bin name
    /// (`XS`, `S`, `M`, `L`, `XL`).
    pub segments_per_bin: BTreeMap<String, usize>,
    /// NULL gap duration range in seconds, drawn uniformly.
    pub gap_seconds: (f64, f64),
    /// Longest XL segment in seconds.
    pub max_seconds: f64,
    /// Shortest XS segment in seconds.
    pub min_seconds: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            name: "synthetic".to_string(),
            num_classes: 3,
            num_subjects: 5,
            noise: 0.05,
            seed: 1,
            sampling_rate: 50.0,
            num_axes: 3,
            segments_per_bin: [("XS", 3), ("S", 3), ("M", 2), ("L", 1), ("XL", 1)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            gap_seconds: (4.0, 7.0),
            max_seconds: 30.0,
            min_seconds: 1.5,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<Vec<(LengthBin, usize)>> {
        if self.num_classes == 0 || self.num_subjects == 0 || self.num_axes == 0 {
            return Err(Error::invalid("synthetic spec needs classes, subjects and axes"));
        }
        if !(self.noise >= 0.0) || !(self.sampling_rate > 0.0) {
            return Err(Error::invalid("noise must be >= 0 and sampling rate positive"));
        }
        let (lo, hi) = self.gap_seconds;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::invalid("gap range must be positive and ordered"));
        }
        if !(self.min_seconds > 0.0 && self.min_seconds <= 3.0 && self.max_seconds > 18.0) {
            return Err(Error::invalid("segment length limits must admit every bin"));
        }
        let mut bins = Vec::new();
        for (name, &count) in &self.segments_per_bin {
            let bin = LengthBin::ALL
                .into_iter()
                .find(|b| b.name() == name)
                .ok_or_else(|| Error::invalid(format!("unknown length bin {name:?}")))?;
            bins.push((bin, count));
        }
        if bins.iter().all(|&(_, n)| n == 0) {
            return Err(Error::invalid("synthetic spec asks for no segments"));
        }
        bins.sort_by_key(|&(b, _)| b);
        Ok(bins)
    }

    fn duration_range(&self, bin: LengthBin) -> (f64, f64) {
        match bin {
            LengthBin::XS => (self.min_seconds, 3.0),
            LengthBin::S => (3.0, 6.0),
            LengthBin::M => (6.0, 12.0),
            LengthBin::L => (12.0, 18.0),
            LengthBin::XL => (18.0, self.max_seconds),
        }
    }
}

/// Per-class axis signature: a constant offset on one axis plus a sinusoid
/// whose frequency identifies the class. NULL is flat.
fn signature(class: usize, axis: usize, num_axes: usize, t: f64) -> f64 {
    if class == 0 {
        return 0.0;
    }
    let k = class - 1;
    let offset = if axis == k % num_axes { 1.5 } else { 0.0 };
    let freq = 0.5 + 0.75 * k as f64;
    let phase = axis as f64 * TAU / num_axes as f64;
    offset + 0.8 * (TAU * freq * t + phase).sin()
}

/// Generates manifest and streams in memory. Labels are exact by
/// construction; class ids are 0 = NULL, then 1..=num_classes.
pub fn synthesize(spec: &SyntheticSpec) -> Result<(DatasetManifest, Vec<SensorStream>)> {
    let bins = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let axes: Vec<String> = (0..spec.num_axes).map(|a| format!("acc_{a}")).collect();
    let mut class_names = vec!["null".to_string()];
    class_names.extend((1..=spec.num_classes).map(|c| format!("activity_{c}")));
    let num_classes = class_names.len();
    let rate = spec.sampling_rate;

    let mut streams = Vec::with_capacity(spec.num_subjects);
    let mut subjects = Vec::with_capacity(spec.num_subjects);
    for s in 0..spec.num_subjects {
        let id = format!("subject_{:02}", s + 1);
        let mut plan: Vec<(usize, usize)> = Vec::new();
        for &(bin, count) in &bins {
            let (lo, hi) = spec.duration_range(bin);
            for _ in 0..count {
                // Stay strictly inside the bin after rounding to samples.
                let lo_n = (lo * rate).floor() as usize + 1;
                let hi_n = ((hi * rate).floor() as usize).max(lo_n);
                let len = rng.random_range(lo_n..=hi_n);
                let class = rng.random_range(1..=spec.num_classes);
                plan.push((class, len));
            }
        }
        plan.shuffle(&mut rng);

        let mut labels = Vec::new();
        let gap = |rng: &mut ChaCha8Rng| {
            let (lo, hi) = spec.gap_seconds;
            (rng.random_range(lo..=hi) * rate).round() as usize
        };
        for (class, len) in plan {
            let g = gap(&mut rng);
            labels.extend(std::iter::repeat_n(0, g));
            labels.extend(std::iter::repeat_n(class, len));
        }
        let g = gap(&mut rng);
        labels.extend(std::iter::repeat_n(0, g));

        let mut samples = Vec::with_capacity(labels.len() * spec.num_axes);
        for (i, &label) in labels.iter().enumerate() {
            let t = i as f64 / rate;
            for a in 0..spec.num_axes {
                let v = signature(label, a, spec.num_axes, t);
                let n = if spec.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                samples.push(v + n);
            }
        }
        streams.push(SensorStream::new(
            id.clone(),
            rate,
            axes.clone(),
            samples,
            labels,
            num_classes,
        )?);
        subjects.push(SubjectEntry {
            path: format!("{id}.csv"),
            id,
        });
    }
    let manifest = DatasetManifest {
        name: spec.name.clone(),
        class_names,
        null_class: Some(0),
        sampling_rate: rate,
        axes,
        subjects,
    };
    Ok((manifest, streams))
}

/// Writes `manifest.json` and one CSV per subject into `dir` and returns the
/// manifest with paths resolved against `dir`.
pub fn make_synthetic_dataset(spec: &SyntheticSpec, dir: &Path) -> Result<DatasetManifest> {
    let (mut manifest, streams) = synthesize(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (entry, stream) in manifest.subjects.iter().zip(&streams) {
        write_stream(&manifest, stream, dir.join(&entry.path))?;
    }
    save_manifest(&manifest, dir.join("manifest.json"))?;
    for entry in &mut manifest.subjects {
        entry.path = dir.join(&entry.path).to_string_lossy().into_owned();
    }
    Ok(manifest)
}
