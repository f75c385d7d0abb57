use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localizer::LocalizerConfig;
use crate::metrics::{Averaging, DEFAULT_TIOU_THRESHOLDS};
use crate::windowing::WindowConfig;

/// Where window features come from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSource {
    /// Vectorized raw sensor windows.
    #[default]
    Raw,
    /// Pre-extracted per-window embeddings, one file `<subject>.<extension>`
    /// per subject in `dir`.
    External { dir: PathBuf, extension: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Offline,
    /// Offline run plus chunked re-prediction for each chunk size (seconds).
    Chunked { sizes: Vec<f64> },
}

pub const DEFAULT_CHUNK_SECONDS: [f64; 4] = [1.0, 5.0, 30.0, 60.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub window: WindowConfig,
    pub localizer: LocalizerConfig,
    pub seeds: Vec<u64>,
    pub protocol: Protocol,
    /// Score thresholds tried by the postprocessing search.
    pub thresholds: Vec<f64>,
    /// Majority filter widths in seconds; 0 disables the filter.
    pub majority_widths: Vec<f64>,
    pub features: FeatureSource,
    pub averaging: Averaging,
    pub tiou_thresholds: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.json"),
            window: WindowConfig::default(),
            localizer: LocalizerConfig::default(),
            seeds: vec![1, 2, 3],
            protocol: Protocol::Offline,
            thresholds: (1..=10).map(|i| (5 * i) as f64 / 100.0).collect(),
            majority_widths: vec![0.0, 1.0, 2.5, 5.0],
            features: FeatureSource::Raw,
            averaging: Averaging::Macro,
            tiou_thresholds: DEFAULT_TIOU_THRESHOLDS.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        if cfg.manifest.is_relative() {
            if let Some(base) = path.parent() {
                cfg.manifest = base.join(&cfg.manifest);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.localizer.validate()?;
        let w = &self.window;
        if !(w.window_seconds > 0.0) || !(0.0..1.0).contains(&w.overlap_fraction) {
            return Err(Error::invalid("window length must be positive and overlap in [0, 1)"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.thresholds.is_empty() || self.majority_widths.is_empty() {
            return Err(Error::invalid("postprocessing grids must be non-empty"));
        }
        if self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::invalid("score thresholds must lie in [0, 1]"));
        }
        if self.majority_widths.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("majority widths must be finite and >= 0"));
        }
        if self.tiou_thresholds.is_empty() || self.tiou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::invalid("tIoU thresholds must be non-empty and in (0, 1]"));
        }
        if let Protocol::Chunked { sizes } = &self.protocol {
            if sizes.is_empty() || sizes.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::invalid("chunk sizes must be positive"));
            }
        }
        Ok(())
    }
}
