//! Dataset manifests, per-subject sensor CSVs, externally extracted window
//! embeddings, ground-truth segments and leave-one-subject-out splits.
//!
//! Stream files are UTF-8 CSV with header `sample_index,<axis...>,label`,
//! labels given by class name. Embedding files are either a row-per-window
//! CSV or raw little-endian `f32` preceded by a 12-byte header
//! `(T: u32, D: u32, fnv1a32(subject_id): u32)`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    ClassId, DatasetManifest, SampleTimeline, Segment, SensorStream, WindowGrid, WindowSequence,
};

/// Ground-truth annotation of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub subject_id: String,
    pub segments: Vec<Segment>,
    pub timeline: SampleTimeline,
}

impl GroundTruth {
    pub fn from_stream(stream: &SensorStream, stride: usize, null_class: Option<ClassId>) -> Self {
        let timeline = stream.timeline();
        Self {
            subject_id: stream.subject_id.clone(),
            segments: labels_to_segments(&timeline, stride, null_class),
            timeline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosoSplit {
    pub validation_subject: String,
    pub training_subjects: Vec<String>,
}

pub fn parse_manifest(json: &str) -> Result<DatasetManifest> {
    let manifest: DatasetManifest = serde_json::from_str(json)?;
    normalize_manifest(manifest)
}

/// Reads and validates a manifest. Relative subject paths are resolved
/// against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for subject in &mut manifest.subjects {
        let p = Path::new(&subject.path);
        if p.is_relative() {
            subject.path = base.join(p).to_string_lossy().into_owned();
        }
    }
    Ok(manifest)
}

/// Validates a manifest and moves the NULL class, if any, to id 0.
pub fn normalize_manifest(mut manifest: DatasetManifest) -> Result<DatasetManifest> {
    if manifest.class_names.is_empty() {
        return Err(Error::invalid("manifest has no classes"));
    }
    let mut seen = HashSet::new();
    for name in &manifest.class_names {
        if !seen.insert(name.as_str()) {
            return Err(Error::invalid(format!("duplicate class name {name:?}")));
        }
    }
    if !(manifest.sampling_rate > 0.0) || !manifest.sampling_rate.is_finite() {
        return Err(Error::invalid(format!(
            "sampling rate must be positive, got {}",
            manifest.sampling_rate
        )));
    }
    if manifest.axes.is_empty() {
        return Err(Error::invalid("manifest lists no axes"));
    }
    let mut ids = HashSet::new();
    for subject in &manifest.subjects {
        if !ids.insert(subject.id.as_str()) {
            return Err(Error::invalid(format!("duplicate subject id {:?}", subject.id)));
        }
    }
    if let Some(null) = manifest.null_class {
        if null >= manifest.class_names.len() {
            return Err(Error::invalid(format!(
                "null_class {null} out of range for {} classes",
                manifest.class_names.len()
            )));
        }
        let name = manifest.class_names.remove(null);
        manifest.class_names.insert(0, name);
        manifest.null_class = Some(0);
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn subject_path(manifest: &DatasetManifest, subject_id: &str) -> Result<PathBuf> {
    manifest
        .subjects
        .iter()
        .find(|s| s.id == subject_id)
        .map(|s| PathBuf::from(&s.path))
        .ok_or_else(|| Error::invalid(format!("subject {subject_id:?} not in manifest")))
}

pub fn load_stream(manifest: &DatasetManifest, subject_id: &str) -> Result<SensorStream> {
    let path = subject_path(manifest, subject_id)?;
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    read_stream(manifest, subject_id, file, &path.to_string_lossy())
}

/// Parses a stream CSV from any reader; `source` only labels error messages.
pub fn read_stream<R: std::io::Read>(
    manifest: &DatasetManifest,
    subject_id: &str,
    reader: R,
    source: &str,
) -> Result<SensorStream> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let expected: Vec<String> = std::iter::once("sample_index".to_string())
        .chain(manifest.axes.iter().cloned())
        .chain(std::iter::once("label".to_string()))
        .collect();
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(Error::format(
            "stream header",
            source,
            format!("expected {expected:?}, found {header:?}"),
        ));
    }

    let class_ids: HashMap<&str, ClassId> = manifest
        .class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let s = manifest.axes.len();
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = format!("{source}:{}", row + 2);
        if record.len() != s + 2 {
            return Err(Error::format(
                "stream row",
                line,
                format!("expected {} fields, found {}", s + 2, record.len()),
            ));
        }
        for field in record.iter().skip(1).take(s) {
            let v: f64 = field.parse().map_err(|_| {
                Error::format("stream row", line.clone(), format!("non-numeric value {field:?}"))
            })?;
            samples.push(v);
        }
        let name = &record[s + 1];
        let id = class_ids
            .get(name)
            .ok_or_else(|| Error::format("stream row", line, format!("unknown label {name:?}")))?;
        labels.push(*id);
    }
    SensorStream::new(
        subject_id,
        manifest.sampling_rate,
        manifest.axes.clone(),
        samples,
        labels,
        manifest.num_classes(),
    )
}

pub fn write_stream(
    manifest: &DatasetManifest,
    stream: &SensorStream,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["sample_index".to_string()];
    header.extend(stream.axes.iter().cloned());
    header.push("label".to_string());
    wtr.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..stream.len() {
        record.clear();
        record.push(i.to_string());
        record.extend(stream.row(i).iter().map(|v| v.to_string()));
        record.push(manifest.class_names[stream.labels[i]].clone());
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Maximal constant runs of non-NULL labels. Boundaries are on the window
/// grid: `start = first / stride`, `end = (last + 1) / stride`.
pub fn labels_to_segments(
    timeline: &SampleTimeline,
    stride: usize,
    null_class: Option<ClassId>,
) -> Vec<Segment> {
    let stride = stride as f64;
    runs(&timeline.labels)
        .filter(|&(label, _, _)| Some(label) != null_class)
        .map(|(label, first, end)| {
            Segment::new(first as f64 / stride, end as f64 / stride, label, 1.0)
        })
        .collect()
}

/// Iterator over maximal runs `(label, start, end)` with `end` exclusive.
pub(crate) fn runs(labels: &[ClassId]) -> impl Iterator<Item = (ClassId, usize, usize)> + '_ {
    let mut pos = 0;
    std::iter::from_fn(move || {
        if pos >= labels.len() {
            return None;
        }
        let start = pos;
        let label = labels[pos];
        while pos < labels.len() && labels[pos] == label {
            pos += 1;
        }
        Some((label, start, pos))
    })
}

pub fn loso_splits(manifest: &DatasetManifest) -> Result<Vec<LosoSplit>> {
    let ids = manifest.subject_ids();
    if ids.len() < 2 {
        return Err(Error::invalid(format!(
            "leave-one-subject-out needs at least 2 subjects, manifest has {}",
            ids.len()
        )));
    }
    Ok(ids
        .iter()
        .map(|val| LosoSplit {
            validation_subject: val.clone(),
            training_subjects: ids.iter().filter(|s| *s != val).cloned().collect(),
        })
        .collect())
}

/// 32-bit FNV-1a, used to tag binary embedding files with their subject.
pub fn subject_hash(subject_id: &str) -> u32 {
    subject_id.bytes().fold(0x811c_9dc5u32, |h, b| {
        (h ^ u32::from(b)).wrapping_mul(0x0100_0193)
    })
}

/// Loads externally extracted per-window embeddings and checks them
/// against the configured window grid. The first successful load fixes the
/// embedding dimension for every later subject.
#[derive(Debug, Clone)]
pub struct EmbeddingLoader {
    pub window: usize,
    pub stride: usize,
    dim: Option<usize>,
}

impl EmbeddingLoader {
    pub fn new(window: usize, stride: usize) -> Self {
        Self {
            window,
            stride,
            dim: None,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// `stream_len` is the raw sample count of the subject's recording, which
    /// fixes how many rows the file must contain.
    pub fn load(
        &mut self,
        path: impl AsRef<Path>,
        subject_id: &str,
        stream_len: usize,
    ) -> Result<WindowSequence> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let source = path.to_string_lossy();
        let (rows, dim, values) = if is_binary_embedding(path) {
            parse_binary_embeddings(&bytes, subject_id, &source)?
        } else {
            parse_csv_embeddings(&bytes, &source)?
        };
        self.accept(subject_id, stream_len, rows, dim, values)
    }

    fn accept(
        &mut self,
        subject_id: &str,
        stream_len: usize,
        rows: usize,
        dim: usize,
        values: Vec<f64>,
    ) -> Result<WindowSequence> {
        let grid = WindowGrid {
            window: self.window,
            stride: self.stride,
            stream_len,
        };
        let expected = grid.num_windows();
        if rows != expected {
            return Err(Error::Shape(format!(
                "{subject_id}: embedding file has {rows} rows, window grid expects {expected}"
            )));
        }
        match self.dim {
            Some(d) if d != dim => {
                return Err(Error::Shape(format!(
                    "{subject_id}: embedding dimension {dim} differs from earlier {d}"
                )))
            }
            _ => self.dim = Some(dim),
        }
        WindowSequence::new(subject_id, grid, dim, values)
    }
}

fn is_binary_embedding(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("bin") | Some("f32")
    )
}

fn parse_binary_embeddings(
    bytes: &[u8],
    subject_id: &str,
    source: &str,
) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 12 {
        return Err(Error::format("embedding file", source, "shorter than header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap());
    let (rows, dim, hash) = (word(0) as usize, word(1) as usize, word(2));
    if hash != subject_hash(subject_id) {
        return Err(Error::format(
            "embedding file",
            source,
            format!("header subject hash {hash:#010x} does not match {subject_id:?}"),
        ));
    }
    let body = &bytes[12..];
    if body.len() != rows * dim * 4 {
        return Err(Error::format(
            "embedding file",
            source,
            format!("{} payload bytes for {rows} x {dim} floats", body.len()),
        ));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok((rows, dim, values))
}

fn parse_csv_embeddings(bytes: &[u8], source: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            // Optional header line.
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::format(
                    "embedding row",
                    format!("{source}:{}", i + 1),
                    "non-numeric value",
                ))
            }
        };
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::format(
                    "embedding row",
                    format!("{source}:{}", i + 1),
                    format!("expected {d} values, found {}", row.len()),
                ))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok((rows, dim.unwrap_or(0), values))
}

/// Writes embeddings in the binary layout read by [`EmbeddingLoader`].
pub fn write_binary_embeddings(ws: &WindowSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| Error::io(path, e));
    write(&(ws.len() as u32).to_le_bytes())?;
    write(&(ws.dim as u32).to_le_bytes())?;
    write(&subject_hash(&ws.subject_id).to_le_bytes())?;
    for v in &ws.features {
        write(&(*v as f32).to_le_bytes())?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes embeddings as a header-less row-per-window CSV.
pub fn write_csv_embeddings(ws: &WindowSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    for t in 0..ws.len() {
        wtr.write_record(ws.row(t).iter().map(|v| v.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SubjectEntry;

    fn manifest(classes: &[&str], null: Option<usize>, subjects: usize) -> DatasetManifest {
        DatasetManifest {
            name: "test".into(),
            class_names: classes.iter().map(|s| s.to_string()).collect(),
            null_class: null,
            sampling_rate: 50.0,
            axes: vec!["x".into(), "y".into(), "z".into()],
            subjects: (0..subjects)
                .map(|i| SubjectEntry {
                    id: format!("s{i}"),
                    path: format!("s{i}.csv"),
                })
                .collect(),
        }
    }

    #[test]
    fn manifest_without_null() {
        let names: Vec<String> = (0..8).map(|i| format!("a{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let m = normalize_manifest(manifest(&refs, None, 2)).unwrap();
        assert_eq!(m.null_class, None);
        assert_eq!(m.num_classes(), 8);
        assert_eq!(m.foreground().len(), 8);
    }

    #[test]
    fn manifest_null_moves_to_zero() {
        let mut names: Vec<String> = (0..18).map(|i| format!("a{i}")).collect();
        names.insert(5, "null".into());
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let m = normalize_manifest(manifest(&refs, Some(5), 2)).unwrap();
        assert_eq!(m.null_class, Some(0));
        assert_eq!(m.class_names[0], "null");
        assert_eq!(m.num_classes(), 19);
        assert_eq!(m.foreground().len(), 18);
    }

    #[test]
    fn manifest_errors() {
        assert!(normalize_manifest(manifest(&[], None, 2)).is_err());
        assert!(normalize_manifest(manifest(&["a", "b"], Some(2), 2)).is_err());
        let mut m = manifest(&["a", "b"], None, 2);
        m.subjects[1].id = "s0".into();
        assert!(normalize_manifest(m).is_err());
    }

    #[test]
    fn manifest_json_roundtrip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_manifest(&manifest(&["null", "walk"], Some(0), 3), &path).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.subjects.len(), 3);
        assert!(Path::new(&m.subjects[0].path).starts_with(dir.path()));
        assert!(matches!(
            load_manifest(dir.path().join("nope.json")),
            Err(Error::Io { .. })
        ));
    }

    fn csv_text(rows: usize, label: impl Fn(usize) -> &'static str) -> String {
        let mut s = String::from("sample_index,x,y,z,label\n");
        for i in 0..rows {
            s += &format!("{i},{},{},{},{}\n", i as f64 * 0.5, -1.0, 2.0, label(i));
        }
        s
    }

    #[test]
    fn stream_parsing() {
        let m = manifest(&["null", "walk"], Some(0), 1);
        let text = csv_text(1000, |i| if i < 400 { "null" } else { "walk" });
        let s = read_stream(&m, "s0", text.as_bytes(), "mem").unwrap();
        assert_eq!(s.num_axes(), 3);
        assert_eq!(s.len(), 1000);
        assert_eq!(s.labels[399], 0);
        assert_eq!(s.labels[400], 1);
        assert_eq!(s.row(2), &[1.0, -1.0, 2.0]);
    }

    #[test]
    fn stream_errors() {
        let m = manifest(&["null", "walk"], Some(0), 1);
        let bad_label = csv_text(5, |_| "run");
        assert!(read_stream(&m, "s0", bad_label.as_bytes(), "mem").is_err());
        let arity = "sample_index,x,y,z,label\n0,1,2,null\n";
        assert!(read_stream(&m, "s0", arity.as_bytes(), "mem").is_err());
        let nonnum = "sample_index,x,y,z,label\n0,1,abc,2,null\n";
        assert!(read_stream(&m, "s0", nonnum.as_bytes(), "mem").is_err());
        let header = "idx,x,y,z,label\n0,1,2,3,null\n";
        assert!(read_stream(&m, "s0", header.as_bytes(), "mem").is_err());
    }

    #[test]
    fn wide_stream() {
        let mut m = manifest(&["null", "a"], Some(0), 1);
        m.axes = (0..12).map(|i| format!("ax{i}")).collect();
        let mut text = String::from("sample_index,");
        text += &m.axes.join(",");
        text += ",label\n";
        for i in 0..60 {
            text += &format!("{i},{},a\n", ["0.1"; 12].join(","));
        }
        let s = read_stream(&m, "s0", text.as_bytes(), "mem").unwrap();
        assert_eq!(s.num_axes(), 12);
    }

    #[test]
    fn stream_write_read_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(&["null", "walk"], Some(0), 1);
        m.subjects[0].path = dir.path().join("s0.csv").to_string_lossy().into_owned();
        let text = csv_text(20, |i| if i % 3 == 0 { "walk" } else { "null" });
        let s = read_stream(&m, "s0", text.as_bytes(), "mem").unwrap();
        write_stream(&m, &s, &m.subjects[0].path).unwrap();
        assert_eq!(load_stream(&m, "s0").unwrap(), s);
    }

    #[test]
    fn segments_from_labels() {
        let tl = SampleTimeline::new(vec![0; 7], 50.0);
        assert!(labels_to_segments(&tl, 1, Some(0)).is_empty());

        let tl = SampleTimeline::new(vec![1, 1, 1, 2, 2], 50.0);
        let segs = labels_to_segments(&tl, 1, None);
        assert_eq!(
            segs,
            vec![Segment::new(0.0, 3.0, 1, 1.0), Segment::new(3.0, 5.0, 2, 1.0)]
        );

        // Fractional boundaries are kept on the window grid.
        let tl = SampleTimeline::new(vec![0, 0, 0, 1, 1, 1, 1, 0], 50.0);
        let segs = labels_to_segments(&tl, 2, Some(0));
        assert_eq!(segs, vec![Segment::new(1.5, 3.5, 1, 1.0)]);
    }

    #[test]
    fn splits() {
        let m = manifest(&["a"], None, 4);
        let splits = loso_splits(&m).unwrap();
        assert_eq!(splits.len(), 4);
        for (i, split) in splits.iter().enumerate() {
            assert_eq!(split.validation_subject, format!("s{i}"));
            assert_eq!(split.training_subjects.len(), 3);
            assert!(!split.training_subjects.contains(&split.validation_subject));
        }
        assert_eq!(loso_splits(&manifest(&["a"], None, 2)).unwrap().len(), 2);
        assert!(loso_splits(&manifest(&["a"], None, 1)).is_err());
    }

    fn sequence(subject: &str, rows: usize, dim: usize) -> WindowSequence {
        let grid = WindowGrid {
            window: 4,
            stride: 2,
            stream_len: 2 * rows + 2,
        };
        let values = (0..rows * dim).map(|i| i as f64 * 0.25).collect();
        WindowSequence::new(subject, grid, dim, values).unwrap()
    }

    #[test]
    fn embeddings_csv_and_binary() {
        let dir = tempfile::tempdir().unwrap();
        let ws = sequence("s0", 500, 128);
        let csv_path = dir.path().join("s0.csv");
        let bin_path = dir.path().join("s0.bin");
        write_csv_embeddings(&ws, &csv_path).unwrap();
        write_binary_embeddings(&ws, &bin_path).unwrap();

        let mut loader = EmbeddingLoader::new(4, 2);
        let a = loader.load(&csv_path, "s0", ws.stream_len).unwrap();
        assert_eq!((a.len(), a.dim), (500, 128));
        assert_eq!(a, ws);
        let b = loader.load(&bin_path, "s0", ws.stream_len).unwrap();
        assert_eq!(b, ws);

        // Wrong subject in binary header.
        assert!(loader.load(&bin_path, "s1", ws.stream_len).is_err());
        // Row-count mismatch.
        assert!(loader.load(&csv_path, "s0", ws.stream_len + 10).is_err());
    }

    #[test]
    fn embedding_dimension_must_agree() {
        let dir = tempfile::tempdir().unwrap();
        let first = sequence("s0", 10, 128);
        let second = sequence("s1", 10, 64);
        write_csv_embeddings(&first, dir.path().join("s0.csv")).unwrap();
        write_csv_embeddings(&second, dir.path().join("s1.csv")).unwrap();
        let mut loader = EmbeddingLoader::new(4, 2);
        loader.load(dir.path().join("s0.csv"), "s0", first.stream_len).unwrap();
        let err = loader.load(dir.path().join("s1.csv"), "s1", second.stream_len);
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
