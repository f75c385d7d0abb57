//! Acceptance checks. Each test prints one PASS/FAIL line straight to stderr
//! so the verdicts show up even when test output is captured.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use inertial_tal::harness::{
    evaluate_chunked_fold, evaluate_fold, run_loso, synthesize, write_outputs, Dataset, LosoRun, Protocol,
    RunConfig, SyntheticSpec,
};
use inertial_tal::ingestion::labels_to_segments;
use inertial_tal::localizer::{check_gradients, tiny_problem, LocalizerConfig};
use inertial_tal::metrics::{
    average_precision, length_bins, map_suite, sample_metrics, ward_counts, ward_errors, Averaging, LengthBin,
    SegmentSet, WardCounts,
};
use inertial_tal::postprocess::{rasterize_segments, threshold_segments};
use inertial_tal::windowing::{devectorize, vectorize, Layout};
use inertial_tal::{SampleTimeline, Segment, WindowGrid};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "acceptance criterion {criterion} [{name}]: {} ({detail})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

// ---------------------------------------------------------------- oracles

fn random_runs(rng: &mut ChaCha8Rng, len: usize, classes: usize, max_run: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let label = rng.random_range(0..classes);
        let run = rng.random_range(1..=max_run).min(len - out.len());
        out.extend(std::iter::repeat_n(label, run));
    }
    out
}

/// Per-class counts straight from the definitions.
fn oracle_prf(pred: &[usize], gt: &[usize], classes: usize, weighted: bool) -> (f64, f64, f64) {
    let (mut ps, mut rs, mut fs, mut ws) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..classes {
        let support = gt.iter().filter(|&&g| g == c).count();
        if support == 0 {
            continue;
        }
        let predicted = pred.iter().filter(|&&p| p == c).count();
        let tp = pred.iter().zip(gt).filter(|(&p, &g)| p == c && g == c).count();
        let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let r = tp as f64 / support as f64;
        let f = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (predicted + support) as f64 };
        let w = if weighted { support as f64 } else { 1.0 };
        ps += w * p;
        rs += w * r;
        fs += w * f;
        ws += w;
    }
    (100.0 * ps / ws, 100.0 * rs / ws, 100.0 * fs / ws)
}

/// Extent of the run of `c` containing `i` in `mask`.
fn run_around(labels: &[usize], c: usize, i: usize) -> (usize, usize) {
    let mut s = i;
    while s > 0 && labels[s - 1] == c {
        s -= 1;
    }
    let mut e = i + 1;
    while e < labels.len() && labels[e] == c {
        e += 1;
    }
    (s, e)
}

/// Distinct runs of `c` in `other` that intersect `[s, e)`.
fn runs_touching(other: &[usize], c: usize, s: usize, e: usize) -> usize {
    (s..e)
        .filter(|&j| other[j] == c && (j == s || other[j - 1] != c))
        .count()
}

/// Frame-by-frame classification of every error frame.
fn oracle_ward(pred: &[usize], gt: &[usize], classes: usize, null: usize) -> WardCounts {
    let mut w = WardCounts::default();
    for c in (0..classes).filter(|&c| c != null) {
        for i in 0..gt.len() {
            if gt[i] == c && pred[i] != c {
                let (s, e) = run_around(gt, c, i);
                match runs_touching(pred, c, s, e) {
                    0 => w.deletion += 1,
                    1 => w.underfill += 1,
                    _ => w.fragmentation += 1,
                }
            }
            if pred[i] == c && gt[i] != c {
                let (s, e) = run_around(pred, c, i);
                match runs_touching(gt, c, s, e) {
                    0 => w.insertion += 1,
                    1 => w.overfill += 1,
                    _ => w.merge += 1,
                }
            }
        }
    }
    w
}

fn oracle_tiou(a: &Segment, b: &Segment) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = (a.end - a.start) + (b.end - b.start) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// AP as the mean over ground-truth instances of the best precision reached
/// at or after the rank where each one is recalled. Items are
/// `(sequence, segment)`; scores are assumed distinct.
fn oracle_ap(preds: &[(usize, Segment)], gt: &[(usize, Segment)], t: f64) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let mut ranked = preds.to_vec();
    ranked.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap());
    let mut used = vec![false; gt.len()];
    let mut hits = Vec::new();
    for (seq, p) in &ranked {
        let mut candidates: Vec<(f64, usize)> = gt
            .iter()
            .enumerate()
            .filter(|(j, (gs, _))| gs == seq && !used[*j])
            .map(|(j, (_, g))| (oracle_tiou(p, g), j))
            .collect();
        candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        match candidates.first() {
            Some(&(iou, j)) if iou >= t => {
                used[j] = true;
                hits.push(true);
            }
            _ => hits.push(false),
        }
    }
    let precision_at: Vec<f64> = (0..hits.len())
        .map(|k| hits[..=k].iter().filter(|&&h| h).count() as f64 / (k + 1) as f64)
        .collect();
    let mut total = 0.0;
    for k in 0..hits.len() {
        if hits[k] {
            total += precision_at[k..].iter().cloned().fold(0.0, f64::max);
        }
    }
    total / gt.len() as f64
}

fn random_gt(rng: &mut ChaCha8Rng, classes: usize, extent: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    for c in 1..=classes {
        let mut x = rng.random_range(0.0..extent / 4.0);
        for _ in 0..rng.random_range(0..4) {
            let len = rng.random_range(0.5..extent / 6.0);
            if x + len > extent {
                break;
            }
            out.push(Segment::new(x, x + len, c, 1.0));
            x += len + rng.random_range(0.0..extent / 6.0);
        }
    }
    out
}

fn random_preds(rng: &mut ChaCha8Rng, gt: &[Segment], classes: usize, extent: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    for g in gt {
        if rng.random_bool(0.7) {
            let j = |r: &mut ChaCha8Rng| r.random_range(-1.0..1.0);
            let s = (g.start + j(rng)).max(0.0);
            let e = (g.end + j(rng)).max(s + 0.1);
            out.push(Segment::new(s, e, g.label, rng.random::<f64>()));
        }
    }
    for _ in 0..rng.random_range(0..5) {
        let s = rng.random_range(0.0..extent - 1.0);
        let e = (s + rng.random_range(0.2..extent / 3.0)).min(extent);
        out.push(Segment::new(s, e, rng.random_range(1..=classes), rng.random::<f64>()));
    }
    out
}

#[test]
fn criterion_1_metric_oracles() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cases = 1200;
    let mut failures = Vec::new();
    for case in 0..cases {
        let len = rng.random_range(1..=200);
        let classes = rng.random_range(2..=5);
        let max_run = rng.random_range(1..=40);
        let gt = random_runs(&mut rng, len, classes, max_run);
        let pred = random_runs(&mut rng, len, classes, max_run);
        let (g, p) = (SampleTimeline::new(gt.clone(), 50.0), SampleTimeline::new(pred.clone(), 50.0));

        for (averaging, weighted) in [(Averaging::Macro, false), (Averaging::Weighted, true)] {
            let m = sample_metrics(&p, &g, classes, Some(0), averaging).unwrap();
            let (op, or, of) = oracle_prf(&pred, &gt, classes, weighted);
            if !(close(m.precision, op) && close(m.recall, or) && close(m.f1, of)) {
                failures.push(format!("case {case}: P/R/F1 {:?} vs {:?}", (m.precision, m.recall, m.f1), (op, or, of)));
            }
        }

        let counts = ward_counts(&p, &g, Some(0)).unwrap();
        let expect = oracle_ward(&pred, &gt, classes, 0);
        if counts != expect {
            failures.push(format!("case {case}: ward {counts:?} vs {expect:?}"));
        }
        let ratios = ward_errors(&p, &g, Some(0)).unwrap();
        let pct = |c: u64| 100.0 * c as f64 / len as f64;
        if !(close(ratios.ur, pct(expect.underfill))
            && close(ratios.or, pct(expect.overfill))
            && close(ratios.dr, pct(expect.deletion))
            && close(ratios.ir, pct(expect.insertion))
            && close(ratios.fr, pct(expect.fragmentation))
            && close(ratios.mr, pct(expect.merge)))
        {
            failures.push(format!("case {case}: ward ratios"));
        }

        // Segment metrics on one to three sequences.
        let extent = len as f64 / 5.0 + 5.0;
        let seqs = rng.random_range(1..=3);
        let mut gt_set = SegmentSet::new();
        let mut pred_set = SegmentSet::new();
        for s in 0..seqs {
            let g = random_gt(&mut rng, classes - 1, extent);
            let p = random_preds(&mut rng, &g, classes - 1, extent);
            gt_set.insert(format!("seq{s}"), g);
            pred_set.insert(format!("seq{s}"), p);
        }
        let thresholds = [0.3, 0.4, 0.5, 0.6, 0.7];
        let result = map_suite(&pred_set, &gt_set, &thresholds).unwrap();
        let flat = |set: &SegmentSet, c: usize| -> Vec<(usize, Segment)> {
            set.values()
                .enumerate()
                .flat_map(|(i, v)| v.iter().filter(|s| s.label == c).map(move |s| (i, *s)))
                .collect()
        };
        let present: Vec<usize> = (1..classes).filter(|&c| !flat(&gt_set, c).is_empty()).collect();
        let mut avg = 0.0;
        for (k, &t) in thresholds.iter().enumerate() {
            let m = if present.is_empty() {
                0.0
            } else {
                100.0
                    * present
                        .iter()
                        .map(|&c| oracle_ap(&flat(&pred_set, c), &flat(&gt_set, c), t))
                        .sum::<f64>()
                    / present.len() as f64
            };
            avg += m / thresholds.len() as f64;
            if !close(result.per_tiou[k].1, m) {
                failures.push(format!("case {case}: mAP@{t} {} vs {m}", result.per_tiou[k].1));
            }
        }
        if !close(result.avg_map, avg) {
            failures.push(format!("case {case}: avg mAP {} vs {avg}", result.avg_map));
        }
        // Single-sequence AP entry point.
        let (g0, p0) = (&gt_set["seq0"], &pred_set["seq0"]);
        for &c in &present {
            let g: Vec<Segment> = g0.iter().filter(|s| s.label == c).copied().collect();
            let p: Vec<Segment> = p0.iter().filter(|s| s.label == c).copied().collect();
            let tag = |v: &[Segment]| v.iter().map(|s| (0, *s)).collect::<Vec<_>>();
            let ap = average_precision(&p, &g, 0.5).unwrap();
            let want = oracle_ap(&tag(&p), &tag(&g), 0.5);
            if !close(ap, want) {
                failures.push(format!("case {case}: AP {ap} vs {want}"));
            }
        }
    }
    let elapsed = started.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    verdict(
        1,
        "metric oracles",
        pass,
        &format!("{cases} instances, {} mismatches, {:.1}s", failures.len(), elapsed.as_secs_f64()),
    );
    assert!(failures.is_empty(), "{:#?}", &failures[..failures.len().min(10)]);
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
}

#[test]
fn criterion_2_vectorization_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut bad = 0;
    let cases = 1000;
    for case in 0..cases {
        let (rows, cols) = match case % 10 {
            0 => (1, rng.random_range(1..=9)),
            1 => (rng.random_range(1..=128), 1),
            2 => (1, 1),
            _ => (rng.random_range(1..=128), rng.random_range(1..=9)),
        };
        let window: Vec<f64> = (0..rows * cols)
            .map(|_| {
                if rng.random_bool(0.1) {
                    // Arbitrary finite bit patterns, subnormals included.
                    loop {
                        let x = f64::from_bits(rng.random());
                        if x.is_finite() {
                            break x;
                        }
                    }
                } else {
                    rng.random_range(-20.0..20.0)
                }
            })
            .collect();
        for layout in [Layout::SampleMajor, Layout::AxisMajor] {
            let v = vectorize(&window, rows, cols, layout).unwrap();
            let back = devectorize(&v, rows, cols, layout).unwrap();
            let same = back.len() == window.len() && back.iter().zip(&window).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                bad += 1;
            }
        }
    }
    verdict(2, "vectorization round trip", bad == 0, &format!("{cases} windows x 2 layouts, {bad} mismatches"));
    assert_eq!(bad, 0);
}

#[test]
fn criterion_3_rasterization_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cases = 600;
    let (mut perm_bad, mut mono_bad, mut trip_bad) = (0, 0, 0);
    for _ in 0..cases {
        let stride = rng.random_range(1..=6);
        let window = stride * rng.random_range(1..=3);
        let stream_len = rng.random_range(window..=400);
        let grid = WindowGrid {
            window,
            stride,
            stream_len,
        };
        let extent = grid.time_extent();

        // Permutation invariance, with deliberately tied scores.
        let mut segs: Vec<Segment> = (0..rng.random_range(0..12))
            .map(|_| {
                let s = rng.random_range(0.0..extent);
                let e = rng.random_range(s..=extent);
                let score = rng.random_range(1..=4) as f64 / 4.0;
                Segment::new(s, e, rng.random_range(1..=4), score)
            })
            .collect();
        let base = rasterize_segments(&segs, &grid, 0, 50.0);
        for _ in 0..3 {
            segs.shuffle(&mut rng);
            if rasterize_segments(&segs, &grid, 0, 50.0) != base {
                perm_bad += 1;
            }
        }

        // Raising the threshold only removes segments.
        let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
        let (lo, hi) = (a.min(b), a.max(b));
        let keep_lo = threshold_segments(&segs, lo);
        let keep_hi = threshold_segments(&segs, hi);
        let subset = keep_hi.len() <= keep_lo.len()
            && keep_hi.iter().all(|s| keep_lo.contains(s))
            && keep_hi.iter().all(|s| s.score >= hi);
        if !subset {
            mono_bad += 1;
        }

        // Labels to segments and back.
        let null = if rng.random_bool(0.8) { Some(0) } else { None };
        let classes = rng.random_range(1..=5);
        let labels = random_runs(&mut rng, stream_len, classes, 30);
        let tl = SampleTimeline::new(labels, 50.0);
        let back = rasterize_segments(&labels_to_segments(&tl, stride, null), &grid, null.unwrap_or(0), 50.0);
        if null.is_some() && back != tl {
            trip_bad += 1;
        }
        if null.is_none() && back.labels != tl.labels {
            trip_bad += 1;
        }
    }
    let pass = perm_bad + mono_bad + trip_bad == 0;
    verdict(
        3,
        "rasterization properties",
        pass,
        &format!("{cases} cases each; failures: permutation {perm_bad}, threshold {mono_bad}, round trip {trip_bad}"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_gradient_check() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failing = Vec::new();
    for seed in 1..=10 {
        let (model, ws, gt) = tiny_problem(seed);
        assert!(ws.len() <= 8 && ws.dim <= 4 && model.classes.len() <= 3);
        let report = check_gradients(&model, &ws, &gt).unwrap();
        worst = worst.max(report.max_rel_error);
        if !report.passes(1e-4) {
            failing.push(seed);
        }
    }
    let elapsed = started.elapsed();
    let pass = failing.is_empty() && elapsed < Duration::from_secs(30);
    verdict(
        4,
        "gradient check",
        pass,
        &format!("10 seeds, worst relative error {worst:.2e}, failing {failing:?}, {:.1}s", elapsed.as_secs_f64()),
    );
    assert!(failing.is_empty(), "seeds {failing:?} exceed 1e-4");
    assert!(elapsed < Duration::from_secs(30));
}

// ------------------------------------------------- synthetic LOSO run

struct SyntheticRun {
    dataset: Dataset,
    cfg: RunConfig,
    run: LosoRun,
    elapsed: Duration,
}

fn acceptance_config() -> RunConfig {
    RunConfig {
        seeds: vec![1, 2, 3],
        protocol: Protocol::Chunked {
            sizes: vec![1.0, 5.0, 30.0, 60.0],
        },
        localizer: LocalizerConfig {
            hidden_dim: 32,
            head_layers: 4,
            learning_rate: 0.1,
            grad_clip: Some(1.0),
            cls_prior: Some(0.01),
            epochs: 100,
            ..LocalizerConfig::default()
        },
        ..RunConfig::default()
    }
}

fn synthetic_run() -> &'static SyntheticRun {
    static RUN: OnceLock<SyntheticRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let spec = SyntheticSpec::default();
        let (manifest, streams) = synthesize(&spec).unwrap();
        let cfg = acceptance_config();
        let dataset = Dataset::from_streams(manifest, streams, cfg.window, &cfg.features).unwrap();
        let started = Instant::now();
        let run = run_loso(&dataset, &cfg, 1).unwrap();
        SyntheticRun {
            dataset,
            cfg,
            run,
            elapsed: started.elapsed(),
        }
    })
}

#[test]
fn criterion_5_synthetic_learning() {
    let spec = SyntheticSpec::default();
    assert_eq!((spec.num_classes, spec.num_subjects, spec.noise), (3, 5, 0.05));
    let r = synthetic_run();
    // Every subject carries at least 10 segments covering all bins.
    for s in &r.dataset.subjects {
        let bins = length_bins(&s.ground_truth.segments, s.grid.stride, r.dataset.manifest.sampling_rate);
        assert!(bins.total() >= 10, "{} has {} segments", s.subject_id, bins.total());
        assert!(LengthBin::ALL.iter().all(|&b| bins.get(b) > 0), "{} misses a bin", s.subject_id);
    }
    assert!(r.cfg.localizer.epochs <= 100);
    assert!(r.run.summary.excluded.is_empty(), "{:?}", r.run.summary.excluded);
    let o = &r.run.summary.offline;
    let (map, f1, fr) = (o["avg_map"].mean, o["f1"].mean, o["fr"].mean);
    let pass = map >= 90.0 && f1 >= 85.0 && fr < 1.0 && r.elapsed < Duration::from_secs(600);
    verdict(
        5,
        "synthetic learning",
        pass,
        &format!(
            "avg_mAP {map:.2}, macro F1 {f1:.2}, FR {fr:.2}%, {:.0}s",
            r.elapsed.as_secs_f64()
        ),
    );
    assert!(map >= 90.0, "avg_mAP {map}");
    assert!(f1 >= 85.0, "F1 {f1}");
    assert!(fr < 1.0, "FR {fr}");
    assert!(r.elapsed < Duration::from_secs(600), "took {:?}", r.elapsed);
}

#[test]
fn criterion_6_chunked_consistency() {
    let r = synthetic_run();
    let choice = &r.run.summary.postprocess;

    // One chunk at least as long as the stream is the offline evaluation.
    let mut exact = true;
    for fold in &r.run.folds {
        let trained = fold.result.as_ref().unwrap();
        let offline =
            evaluate_fold(&r.dataset, &r.cfg, &fold.subject, &trained.decoded, choice.theta, choice.majority_width)
                .unwrap();
        let data = r.dataset.subject(&fold.subject).unwrap();
        let stream_seconds = data.grid.stream_len as f64 / r.dataset.manifest.sampling_rate;
        for size in [stream_seconds, stream_seconds * 3.0] {
            let m = evaluate_chunked_fold(
                &r.dataset,
                &r.cfg,
                &fold.subject,
                trained,
                Some(size),
                choice.theta,
                choice.majority_width,
            )
            .unwrap();
            exact &= m.f1 == offline.f1 && m.reconstructed_map == offline.avg_map && m.c_map == offline.avg_map;
        }
    }
    let full = r.run.summary.chunked.last().unwrap();
    exact &= full.chunk_seconds.is_none()
        && full.reconstructed_map.mean == r.run.summary.offline["avg_map"].mean
        && full.f1.mean == r.run.summary.offline["f1"].mean;

    let labels: Vec<String> = r.run.summary.chunked.iter().map(|c| c.label()).collect();
    assert_eq!(labels, ["1", "5", "30", "60", "full"]);
    let maps: Vec<f64> = r.run.summary.chunked.iter().map(|c| c.reconstructed_map.mean).collect();
    let cmaps: Vec<f64> = r.run.summary.chunked.iter().map(|c| c.c_map.mean).collect();
    let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0] - 2.0);
    let pass = exact && monotone(&maps) && monotone(&cmaps);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" / ");
    verdict(
        6,
        "chunked consistency",
        pass,
        &format!(
            "full-stream chunk exact: {exact}; mAP at 1s/5s/30s/60s/full {}; c-mAP {}",
            fmt(&maps),
            fmt(&cmaps)
        ),
    );
    assert!(exact, "a stream-sized chunk differs from offline");
    assert!(monotone(&maps), "mAP {maps:?}");
    assert!(monotone(&cmaps), "c-mAP {cmaps:?}");
}

#[test]
fn criterion_7_length_bin_boundaries() {
    let durations = [3.0, 3.001, 6.0, 12.0, 18.0, 18.001];
    let expected = [LengthBin::XS, LengthBin::S, LengthBin::S, LengthBin::M, LengthBin::L, LengthBin::XL];
    let got: Vec<LengthBin> = durations.iter().map(|&d| LengthBin::of_duration(d)).collect();
    // The same durations expressed as segments on a 0.5 s grid.
    let segs: Vec<Segment> = durations.iter().map(|&d| Segment::new(0.0, d * 2.0, 1, 1.0)).collect();
    let counts = length_bins(&segs, 25, 50.0);
    let via_segments = [(LengthBin::XS, 1), (LengthBin::S, 2), (LengthBin::M, 1), (LengthBin::L, 1), (LengthBin::XL, 1)]
        .iter()
        .all(|&(b, n)| counts.get(b) == n);
    let pass = got == expected && via_segments;
    verdict(7, "length-bin boundaries", pass, &format!("{durations:?} -> {got:?}"));
    assert_eq!(got, expected);
    assert!(via_segments);
}

#[test]
fn criterion_8_determinism() {
    let spec = SyntheticSpec {
        num_subjects: 3,
        segments_per_bin: [("XS", 1), ("S", 1), ("M", 1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        ..SyntheticSpec::default()
    };
    let (manifest, streams) = synthesize(&spec).unwrap();
    let cfg = RunConfig {
        seeds: vec![1, 2],
        protocol: Protocol::Chunked { sizes: vec![5.0] },
        localizer: LocalizerConfig {
            hidden_dim: 8,
            epochs: 4,
            learning_rate: 0.05,
            ..LocalizerConfig::default()
        },
        ..RunConfig::default()
    };
    let dataset = Dataset::from_streams(manifest, streams, cfg.window, &cfg.features).unwrap();
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut summaries = Vec::new();
    let mut metrics = Vec::new();
    for (dir, jobs) in dirs.iter().zip([1, 1, 4]) {
        let run = run_loso(&dataset, &cfg, jobs).unwrap();
        let out = write_outputs(&run, dir.path()).unwrap();
        summaries.push(std::fs::read(out.join("summary.json")).unwrap());
        let per_fold: Vec<BTreeMap<String, f64>> =
            run.reports.iter().map(|r| r.report.scalars().into_iter().collect()).collect();
        metrics.push((serde_json::to_string(&run.summary).unwrap(), per_fold));
    }
    let byte_identical = summaries[0] == summaries[1];
    let parallel_identical = metrics[0] == metrics[2];
    let pass = byte_identical && parallel_identical;
    verdict(
        8,
        "determinism",
        pass,
        &format!("jobs=1 twice byte-identical: {byte_identical}; jobs=4 identical: {parallel_identical}"),
    );
    assert!(byte_identical);
    assert!(parallel_identical);
}
