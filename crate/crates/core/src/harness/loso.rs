use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::data::Dataset;
use crate::error::{Error, Result};
use crate::ingestion::loso_splits;
use crate::localizer::{predict_segments, train, LocalizerModel, TrainingSequence};
use crate::metrics::{evaluate, map_suite, sample_metrics, EvalInput, EvalReport, SegmentSet};
use crate::postprocess::{majority_filter, rasterize_prediction};
use crate::types::{SampleTimeline, Segment, WindowSequence};

/// A trained fold with its cached validation predictions.
#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub model: LocalizerModel,
    pub loss_curve: Vec<f64>,
    /// Normalized validation windows.
    pub validation: WindowSequence,
    /// Decoded, unthresholded segments for the whole validation stream.
    pub decoded: Vec<Segment>,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub seed: u64,
    pub subject: String,
    /// `Err` holds the divergence diagnostic.
    pub result: std::result::Result<TrainedFold, String>,
}

/// Trains one leave-one-subject-out fold. Divergence is returned as an
/// outcome, other failures as errors.
pub fn train_fold(dataset: &Dataset, cfg: &RunConfig, validation: &str, seed: u64) -> Result<FoldOutcome> {
    let training: Vec<String> = dataset
        .manifest
        .subject_ids()
        .into_iter()
        .filter(|s| s != validation)
        .collect();
    if training.is_empty() {
        return Err(Error::invalid("a fold needs at least one training subject"));
    }
    let norm = dataset.fold_norm(&training)?;
    let train_ws = training
        .iter()
        .map(|id| dataset.normalized(id, norm.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let train_gt = training
        .iter()
        .map(|id| dataset.subject(id).map(|s| s.ground_truth.segments.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let data: Vec<TrainingSequence<'_>> = train_ws
        .iter()
        .zip(&train_gt)
        .map(|(w, g)| TrainingSequence {
            windows: w,
            segments: g,
        })
        .collect();

    let config = crate::localizer::LocalizerConfig {
        seed,
        ..cfg.localizer.clone()
    };
    let mut model = LocalizerModel::new(config, dataset.dim(), dataset.manifest.foreground())?;
    let result = match train(&mut model, &data) {
        Ok(loss_curve) => {
            let validation_ws = dataset.normalized(validation, norm.as_ref())?;
            let decoded = predict_segments(&model, &validation_ws)?;
            Ok(TrainedFold {
                model,
                loss_curve,
                validation: validation_ws,
                decoded,
            })
        }
        Err(Error::Diverged { epoch, message }) => {
            log::warn!("fold {validation} seed {seed} diverged at epoch {epoch}: {message}; excluded");
            Err(format!("diverged at epoch {epoch}: {message}"))
        }
        Err(e) => return Err(e),
    };
    Ok(FoldOutcome {
        seed,
        subject: validation.to_string(),
        result,
    })
}

/// Runs `f` over `items` on a pool of `jobs` threads, keeping input order.
pub(crate) fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Trains every (seed, subject) fold. Results come back seed-major in
/// manifest subject order regardless of `jobs`.
pub fn train_folds(dataset: &Dataset, cfg: &RunConfig, jobs: usize) -> Result<Vec<FoldOutcome>> {
    let splits = loso_splits(&dataset.manifest)?;
    let tasks: Vec<(u64, String)> = cfg
        .seeds
        .iter()
        .flat_map(|&seed| splits.iter().map(move |s| (seed, s.validation_subject.clone())))
        .collect();
    parallel_map(&tasks, jobs, |(seed, subject)| train_fold(dataset, cfg, subject, *seed))
}

/// Thresholded, rasterized and optionally majority-filtered prediction.
pub struct Postprocessed {
    pub timeline: SampleTimeline,
    pub segments: Vec<Segment>,
}

pub fn postprocess(
    dataset: &Dataset,
    subject: &str,
    decoded: &[Segment],
    theta: f64,
    majority_width: f64,
) -> Result<Postprocessed> {
    let data = dataset.subject(subject)?;
    let rate = dataset.manifest.sampling_rate;
    let rp = rasterize_prediction(decoded, theta, &data.grid, dataset.manifest.null_class, rate);
    let timeline = if majority_width > 0.0 {
        majority_filter(&rp.timeline, majority_width)
    } else {
        rp.timeline
    };
    Ok(Postprocessed {
        timeline,
        segments: rp.segments,
    })
}

pub fn evaluate_fold(
    dataset: &Dataset,
    cfg: &RunConfig,
    subject: &str,
    decoded: &[Segment],
    theta: f64,
    majority_width: f64,
) -> Result<EvalReport> {
    let pp = postprocess(dataset, subject, decoded, theta, majority_width)?;
    let gt = &dataset.subject(subject)?.ground_truth;
    evaluate(
        EvalInput {
            pred_timeline: &pp.timeline,
            gt_timeline: &gt.timeline,
            pred_segments: &pp.segments,
            gt_segments: &gt.segments,
            num_classes: dataset.manifest.num_classes(),
            null_class: dataset.manifest.null_class,
            stride: data_stride(dataset, subject)?,
        },
        &cfg.tiou_thresholds,
        cfg.averaging,
    )
}

fn data_stride(dataset: &Dataset, subject: &str) -> Result<usize> {
    Ok(dataset.subject(subject)?.grid.stride)
}

/// Postprocessing parameters picked on the validation folds themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostprocessChoice {
    pub theta: f64,
    pub majority_width: f64,
    /// Always true: the search looks at validation predictions.
    pub validation_optimized: bool,
    /// `(theta, aggregate avg_mAP)` for every grid point.
    pub theta_scores: Vec<(f64, f64)>,
    /// `(width, aggregate F1)` for every grid point at the chosen theta.
    pub width_scores: Vec<(f64, f64)>,
}

/// Mean over subjects within each seed, then over seeds.
pub(crate) fn seed_mean(values: &[(u64, f64)]) -> f64 {
    let mut seeds: Vec<u64> = values.iter().map(|v| v.0).collect();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() {
        return 0.0;
    }
    let per_seed: Vec<f64> = seeds
        .iter()
        .map(|s| {
            let v: Vec<f64> = values.iter().filter(|x| x.0 == *s).map(|x| x.1).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    per_seed.iter().sum::<f64>() / per_seed.len() as f64
}

fn argmax_first(scores: &[(f64, f64)]) -> f64 {
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    best.0
}

/// Picks the threshold maximizing aggregate avg_mAP, then the majority width
/// maximizing aggregate F1 at that threshold. Grids are searched in
/// ascending order and ties keep the smaller value.
pub fn grid_search_postprocess(
    dataset: &Dataset,
    cfg: &RunConfig,
    folds: &[FoldOutcome],
    thresholds: &[f64],
    widths: &[f64],
) -> Result<PostprocessChoice> {
    if thresholds.is_empty() || widths.is_empty() {
        return Err(Error::invalid("postprocessing grids must be non-empty"));
    }
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(f64::total_cmp);
    let mut widths = widths.to_vec();
    widths.sort_by(f64::total_cmp);
    let trained: Vec<(u64, &str, &TrainedFold)> = folds
        .iter()
        .filter_map(|f| f.result.as_ref().ok().map(|t| (f.seed, f.subject.as_str(), t)))
        .collect();

    let mut theta_scores = Vec::with_capacity(thresholds.len());
    for &theta in &thresholds {
        let mut values = Vec::with_capacity(trained.len());
        for &(seed, subject, fold) in &trained {
            let data = dataset.subject(subject)?;
            let rp = rasterize_prediction(
                &fold.decoded,
                theta,
                &data.grid,
                dataset.manifest.null_class,
                dataset.manifest.sampling_rate,
            );
            let preds = SegmentSet::from([(subject.to_string(), rp.segments)]);
            let gt = SegmentSet::from([(subject.to_string(), data.ground_truth.segments.clone())]);
            values.push((seed, map_suite(&preds, &gt, &cfg.tiou_thresholds)?.avg_map));
        }
        theta_scores.push((theta, seed_mean(&values)));
    }
    let theta = argmax_first(&theta_scores);

    let mut width_scores = Vec::with_capacity(widths.len());
    for &width in &widths {
        let mut values = Vec::with_capacity(trained.len());
        for &(seed, subject, fold) in &trained {
            let pp = postprocess(dataset, subject, &fold.decoded, theta, width)?;
            let gt = &dataset.subject(subject)?.ground_truth;
            let m = sample_metrics(
                &pp.timeline,
                &gt.timeline,
                dataset.manifest.num_classes(),
                dataset.manifest.null_class,
                cfg.averaging,
            )?;
            values.push((seed, m.f1));
        }
        width_scores.push((width, seed_mean(&values)));
    }
    let majority_width = argmax_first(&width_scores);
    Ok(PostprocessChoice {
        theta,
        majority_width,
        validation_optimized: true,
        theta_scores,
        width_scores,
    })
}
