//! Experiment orchestration: leave-one-subject-out training over several
//! seeds, postprocessing search, chunked re-evaluation and report files.

mod chunked;
mod config;
mod data;
mod loso;
mod synth;

pub use chunked::{chunk_ranges, clip_ground_truth, evaluate_chunked_fold, windows_per_chunk, ChunkMetrics};
pub use config::{FeatureSource, Protocol, RunConfig, DEFAULT_CHUNK_SECONDS};
pub use data::{Dataset, SubjectData};
pub use loso::{
    evaluate_fold, grid_search_postprocess, postprocess, train_fold, train_folds, FoldOutcome,
    PostprocessChoice, Postprocessed, TrainedFold,
};
pub use synth::{make_synthetic_dataset, synthesize, SyntheticSpec};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use loso::parallel_map;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Mean and population std across seeds of each named metric. A metric
/// missing from some seeds is aggregated over the seeds that have it.
pub fn aggregate_seeds(per_seed: &[BTreeMap<String, f64>]) -> BTreeMap<String, MeanStd> {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for seed in per_seed {
        for (k, v) in seed {
            values.entry(k.clone()).or_default().push(*v);
        }
    }
    values.into_iter().map(|(k, v)| (k, MeanStd::of(&v))).collect()
}

/// Unweighted mean over subjects within each seed, then mean ± std across
/// seeds.
pub fn aggregate_by_seed(rows: &[(u64, BTreeMap<String, f64>)]) -> BTreeMap<String, MeanStd> {
    let mut by_seed: BTreeMap<u64, Vec<&BTreeMap<String, f64>>> = BTreeMap::new();
    for (seed, m) in rows {
        by_seed.entry(*seed).or_default().push(m);
    }
    let per_seed: Vec<BTreeMap<String, f64>> = by_seed
        .values()
        .map(|subjects| {
            let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for m in subjects {
                for (k, v) in *m {
                    acc.entry(k.clone()).or_default().push(*v);
                }
            }
            acc.into_iter()
                .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
                .collect()
        })
        .collect();
    aggregate_seeds(&per_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub seed: u64,
    pub subject: String,
    pub theta: f64,
    pub majority_width: f64,
    pub validation_optimized: bool,
    pub final_loss: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedFold {
    pub seed: u64,
    pub subject: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkSummary {
    /// `None` is a single chunk spanning each whole stream.
    pub chunk_seconds: Option<f64>,
    pub f1: MeanStd,
    pub c_map: MeanStd,
    pub reconstructed_map: MeanStd,
    pub too_short: bool,
}

impl ChunkSummary {
    pub fn label(&self) -> String {
        self.chunk_seconds
            .map_or_else(|| "full".to_string(), |s| format!("{s}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub folds: usize,
    pub excluded: Vec<ExcludedFold>,
    pub postprocess: PostprocessChoice,
    pub offline: BTreeMap<String, MeanStd>,
    pub chunked: Vec<ChunkSummary>,
    pub conventions: Vec<String>,
}

const CONVENTIONS: [&str; 4] = [
    "aggregate: unweighted mean over subjects within a seed, then mean and population std over seeds",
    "postprocessing threshold and majority width are selected on the validation folds",
    "c-mAP ground truth is clipped to chunk bounds; cut fragments shorter than one window are dropped",
    "reconstructed mAP offsets chunk predictions by the chunk start and evaluates against the original ground truth",
];

#[derive(Debug, Clone)]
pub struct LosoRun {
    pub folds: Vec<FoldOutcome>,
    pub reports: Vec<FoldReport>,
    pub summary: Summary,
}

fn report_metrics(r: &EvalReport) -> BTreeMap<String, f64> {
    r.scalars().into_iter().collect()
}

/// Chunked metrics for every trained fold at each chunk size, aggregated
/// like the offline metrics.
pub fn run_chunked(
    dataset: &Dataset,
    cfg: &RunConfig,
    folds: &[FoldOutcome],
    sizes: &[Option<f64>],
    theta: f64,
    majority_width: f64,
    jobs: usize,
) -> Result<Vec<ChunkSummary>> {
    let trained: Vec<(u64, &str, &TrainedFold)> = folds
        .iter()
        .filter_map(|f| f.result.as_ref().ok().map(|t| (f.seed, f.subject.as_str(), t)))
        .collect();
    let tasks: Vec<(Option<f64>, usize)> = sizes
        .iter()
        .flat_map(|&s| (0..trained.len()).map(move |i| (s, i)))
        .collect();
    let metrics = parallel_map(&tasks, jobs, |&(size, i)| {
        let (_, subject, fold) = trained[i];
        evaluate_chunked_fold(dataset, cfg, subject, fold, size, theta, majority_width)
    })?;
    let mut out = Vec::with_capacity(sizes.len());
    for (k, &size) in sizes.iter().enumerate() {
        let rows: Vec<(u64, BTreeMap<String, f64>)> = trained
            .iter()
            .enumerate()
            .map(|(i, &(seed, _, _))| {
                let m = metrics[k * trained.len() + i];
                let map = BTreeMap::from([
                    ("f1".to_string(), m.f1),
                    ("c_map".to_string(), m.c_map),
                    ("reconstructed_map".to_string(), m.reconstructed_map),
                ]);
                (seed, map)
            })
            .collect();
        let agg = aggregate_by_seed(&rows);
        let get = |k: &str| agg.get(k).copied().unwrap_or(MeanStd { mean: 0.0, std: 0.0 });
        out.push(ChunkSummary {
            chunk_seconds: size,
            f1: get("f1"),
            c_map: get("c_map"),
            reconstructed_map: get("reconstructed_map"),
            too_short: metrics[k * trained.len()..(k + 1) * trained.len()]
                .iter()
                .any(|m| m.too_short),
        });
    }
    Ok(out)
}

/// Full protocol: train every fold, pick postprocessing on the validation
/// predictions, evaluate each fold and, for the chunked protocol, re-predict
/// chunk by chunk. Output is independent of `jobs`.
pub fn run_loso(dataset: &Dataset, cfg: &RunConfig, jobs: usize) -> Result<LosoRun> {
    cfg.validate()?;
    let folds = train_folds(dataset, cfg, jobs)?;
    let excluded: Vec<ExcludedFold> = folds
        .iter()
        .filter_map(|f| {
            f.result.as_ref().err().map(|reason| ExcludedFold {
                seed: f.seed,
                subject: f.subject.clone(),
                reason: reason.clone(),
            })
        })
        .collect();
    if excluded.len() == folds.len() {
        return Err(Error::Diverged {
            epoch: 0,
            message: "every fold diverged; nothing to aggregate".to_string(),
        });
    }
    let choice = grid_search_postprocess(dataset, cfg, &folds, &cfg.thresholds, &cfg.majority_widths)?;
    let trained: Vec<&FoldOutcome> = folds.iter().filter(|f| f.result.is_ok()).collect();
    let reports = parallel_map(&trained, jobs, |f| {
        let t = f.result.as_ref().expect("filtered to trained folds");
        let report = evaluate_fold(dataset, cfg, &f.subject, &t.decoded, choice.theta, choice.majority_width)?;
        Ok(FoldReport {
            seed: f.seed,
            subject: f.subject.clone(),
            theta: choice.theta,
            majority_width: choice.majority_width,
            validation_optimized: true,
            final_loss: t.loss_curve.last().copied().unwrap_or(f64::NAN),
            report,
        })
    })?;
    let rows: Vec<(u64, BTreeMap<String, f64>)> = reports
        .iter()
        .map(|r| (r.seed, report_metrics(&r.report)))
        .collect();
    let offline = aggregate_by_seed(&rows);

    let chunked = match &cfg.protocol {
        Protocol::Offline => Vec::new(),
        Protocol::Chunked { sizes } => {
            let mut all: Vec<Option<f64>> = sizes.iter().map(|&s| Some(s)).collect();
            all.push(None);
            run_chunked(dataset, cfg, &folds, &all, choice.theta, choice.majority_width, jobs)?
        }
    };
    let summary = Summary {
        dataset: dataset.manifest.name.clone(),
        seeds: cfg.seeds.clone(),
        folds: folds.len(),
        excluded,
        postprocess: choice,
        offline,
        chunked,
        conventions: CONVENTIONS.iter().map(|s| s.to_string()).collect(),
    };
    Ok(LosoRun {
        folds,
        reports,
        summary,
    })
}

/// Flat `protocol,chunk_seconds,metric,mean,std` rows.
pub fn summary_csv(summary: &Summary) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["protocol", "chunk_seconds", "metric", "mean", "std"])?;
    for (metric, v) in &summary.offline {
        wtr.write_record(["offline", "", metric, &v.mean.to_string(), &v.std.to_string()])?;
    }
    for c in &summary.chunked {
        let label = c.label();
        for (metric, v) in [
            ("f1", c.f1),
            ("c_map", c.c_map),
            ("reconstructed_map", c.reconstructed_map),
        ] {
            wtr.write_record(["chunked", &label, metric, &v.mean.to_string(), &v.std.to_string()])?;
        }
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<root>/<dataset>/<seed>/<subject>.json` per fold plus
/// `summary.json` and `summary.csv` in `<root>/<dataset>`. Returns the
/// dataset directory.
pub fn write_outputs(run: &LosoRun, root: &Path) -> Result<PathBuf> {
    let dir = root.join(&run.summary.dataset);
    for r in &run.reports {
        let path = dir.join(r.seed.to_string()).join(format!("{}.json", r.subject));
        write_file(&path, serde_json::to_string_pretty(r)?.as_bytes())?;
    }
    write_file(
        &dir.join("summary.json"),
        serde_json::to_string_pretty(&run.summary)?.as_bytes(),
    )?;
    write_file(&dir.join("summary.csv"), summary_csv(&run.summary)?.as_bytes())?;
    Ok(dir)
}
