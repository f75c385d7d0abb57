//! Loading a dataset into per-subject window sequences and ground truth.

use std::path::Path;

use super::config::FeatureSource;
use crate::error::{Error, Result};
use crate::ingestion::{load_manifest, load_stream, EmbeddingLoader, GroundTruth};
use crate::types::{DatasetManifest, SensorStream, WindowGrid, WindowSequence};
use crate::windowing::{make_windows, FeatureNorm, WindowConfig};

/// One subject ready for training or evaluation. Features are not
/// normalized; fold statistics are applied later.
#[derive(Debug, Clone)]
pub struct SubjectData {
    pub subject_id: String,
    pub grid: WindowGrid,
    pub windows: WindowSequence,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub window: WindowConfig,
    pub subjects: Vec<SubjectData>,
}

impl Dataset {
    /// Builds subjects from in-memory streams, in manifest order.
    pub fn from_streams(
        manifest: DatasetManifest,
        streams: Vec<SensorStream>,
        window: WindowConfig,
        features: &FeatureSource,
    ) -> Result<Self> {
        let (w, stride) = window.geometry(manifest.sampling_rate)?;
        let mut loader = EmbeddingLoader::new(w, stride);
        let raw = WindowConfig {
            normalize: false,
            ..window
        };
        let mut subjects = Vec::with_capacity(manifest.subjects.len());
        for entry in &manifest.subjects {
            let stream = streams
                .iter()
                .find(|s| s.subject_id == entry.id)
                .ok_or_else(|| Error::invalid(format!("no stream for subject {:?}", entry.id)))?;
            let windows = match features {
                FeatureSource::Raw => make_windows(stream, &raw, None)?,
                FeatureSource::External { dir, extension } => {
                    let path = dir.join(format!("{}.{extension}", entry.id));
                    loader.load(&path, &entry.id, stream.len())?
                }
            };
            subjects.push(SubjectData {
                subject_id: entry.id.clone(),
                grid: windows.grid(),
                ground_truth: GroundTruth::from_stream(stream, stride, manifest.null_class),
                windows,
            });
        }
        Ok(Self {
            manifest,
            window,
            subjects,
        })
    }

    pub fn load(manifest_path: &Path, window: WindowConfig, features: &FeatureSource) -> Result<Self> {
        let manifest = load_manifest(manifest_path)?;
        let streams = manifest
            .subjects
            .iter()
            .map(|s| load_stream(&manifest, &s.id))
            .collect::<Result<Vec<_>>>()?;
        Self::from_streams(manifest, streams, window, features)
    }

    pub fn subject(&self, id: &str) -> Result<&SubjectData> {
        self.subjects
            .iter()
            .find(|s| s.subject_id == id)
            .ok_or_else(|| Error::invalid(format!("subject {id:?} not in dataset")))
    }

    pub fn dim(&self) -> usize {
        self.subjects.first().map_or(0, |s| s.windows.dim)
    }

    /// Normalization statistics fitted on the given subjects only, or `None`
    /// when normalization is off.
    pub fn fold_norm(&self, training: &[String]) -> Result<Option<FeatureNorm>> {
        if !self.window.normalize {
            return Ok(None);
        }
        let seqs = training
            .iter()
            .map(|id| self.subject(id).map(|s| &s.windows))
            .collect::<Result<Vec<_>>>()?;
        FeatureNorm::fit(&seqs).map(Some)
    }

    /// A subject's windows with fold statistics applied.
    pub fn normalized(&self, id: &str, norm: Option<&FeatureNorm>) -> Result<WindowSequence> {
        let mut ws = self.subject(id)?.windows.clone();
        if let Some(norm) = norm {
            norm.apply(&mut ws)?;
        }
        Ok(ws)
    }
}
