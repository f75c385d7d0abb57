use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use inertial_tal::harness::{
    self, aggregate_by_seed, run_loso, train_fold, write_outputs, Dataset, FeatureSource, FoldReport,
    Protocol, RunConfig, Summary, SyntheticSpec, DEFAULT_CHUNK_SECONDS,
};
use inertial_tal::ingestion::{load_manifest, load_stream, GroundTruth, write_binary_embeddings, write_csv_embeddings};
use inertial_tal::localizer::{check_gradients, load_checkpoint, predict_segments, save_checkpoint, tiny_problem};
use inertial_tal::metrics::{evaluate, EvalInput, EvalReport};
use inertial_tal::postprocess::{
    rasterize_prediction, rasterize_segments, read_segments_csv, write_segments, write_segments_csv,
    SegmentRecord,
};
use inertial_tal::windowing::{make_windows, FeatureNorm, WindowConfig};
use inertial_tal::{DatasetManifest, Error, Segment};

const REPORT_DIR_ENV: &str = "INERTIAL_TAL_REPORT_DIR";

#[derive(Parser)]
#[command(name = "inertial-tal", version, about = "Temporal action localization for inertial sensor streams")]
struct Cli {
    /// Output format for results printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args, Clone)]
struct WindowArgs {
    /// Window length in seconds.
    #[arg(long)]
    window_sec: Option<f64>,
    /// Fraction of overlap between consecutive windows.
    #[arg(long)]
    overlap: Option<f64>,
    /// Skip z-scoring of window features.
    #[arg(long)]
    no_normalize: bool,
    /// Flatten windows axis by axis instead of sample by sample.
    #[arg(long)]
    axis_major: bool,
}

impl WindowArgs {
    fn apply(&self, mut w: WindowConfig) -> WindowConfig {
        if let Some(s) = self.window_sec {
            w.window_seconds = s;
        }
        if let Some(o) = self.overlap {
            w.overlap_fraction = o;
        }
        if self.no_normalize {
            w.normalize = false;
        }
        if self.axis_major {
            w.axis_major = true;
        }
        w
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run configuration JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Directory of per-subject embeddings `<subject>.<ext>` to use instead of
    /// raw windows.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// File extension of the embedding files.
    #[arg(long, default_value = "csv")]
    embedding_ext: String,
    #[command(flatten)]
    window: WindowArgs,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = m.clone();
        } else if self.config.is_none() {
            return Err(Error::InvalidInput("either --config or --manifest is required".into()));
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(e) = self.epochs {
            cfg.localizer.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.localizer.learning_rate = lr;
        }
        if let Some(h) = self.hidden {
            cfg.localizer.hidden_dim = h;
        }
        if let Some(dir) = &self.embeddings {
            cfg.features = FeatureSource::External {
                dir: dir.clone(),
                extension: self.embedding_ext.clone(),
            };
        }
        cfg.window = self.window.apply(cfg.window);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with exact labels.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Full generator spec as JSON; the flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Write vectorized window features per subject.
    Window {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fit normalization without this subject.
        #[arg(long)]
        holdout: Option<String>,
        #[arg(long, value_enum, default_value_t = EmbeddingFormat::Csv)]
        embedding_format: EmbeddingFormat,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Train one leave-one-subject-out fold and save a checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Held-out subject.
        #[arg(long)]
        validation: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Checkpoint path; normalization statistics go next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict segments for a subject from a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        subject: String,
        /// Normalization statistics; defaults to the checkpoint's sidecar file.
        #[arg(long)]
        norm: Option<PathBuf>,
        /// Keep segments scoring at least this and resolve overlaps by
        /// rasterization; without it every decoded candidate is written.
        #[arg(long)]
        theta: Option<f64>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Evaluate predicted segments against ground-truth segments.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth segments; derived from the manifest's sample labels
        /// when omitted.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Score threshold applied before rasterizing predictions.
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// Also write each subject's confusion matrix as CSV into this directory.
        #[arg(long)]
        confusion_dir: Option<PathBuf>,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Full leave-one-subject-out protocol over all seeds.
    Loso {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Report root directory.
        #[arg(long, env = REPORT_DIR_ENV, default_value = "reports")]
        out: PathBuf,
    },
    /// Leave-one-subject-out training followed by chunked re-prediction.
    ChunkEval {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated chunk sizes in seconds.
        #[arg(long, value_delimiter = ',')]
        chunks: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, env = REPORT_DIR_ENV, default_value = "reports")]
        out: PathBuf,
    },
    /// Compare analytic gradients with finite differences on a tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Merge per-fold JSON reports into an aggregate, optionally as flat CSV.
    Report {
        /// Dataset report directory containing `<seed>/<subject>.json`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Write `protocol,chunk_seconds,metric,mean,std` rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbeddingFormat {
    Csv,
    Bin,
}

fn norm_sidecar(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".norm.json");
    PathBuf::from(name)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn print_metrics_table(title: &str, metrics: &BTreeMap<String, harness::MeanStd>) {
    println!("{title}");
    println!("{:<16} {:>10} {:>10}", "metric", "mean", "std");
    for (k, v) in metrics {
        println!("{k:<16} {:>10.2} {:>10.2}", v.mean, v.std);
    }
}

fn print_chunk_table(summary: &Summary) {
    let labels: Vec<String> = summary
        .chunked
        .iter()
        .map(|c| match c.chunk_seconds {
            Some(s) => format!("{s} sec."),
            None => "full".to_string(),
        })
        .collect();
    print!("{:<8}", "");
    for l in &labels {
        print!(" {l:>14}");
    }
    println!();
    type Pick = fn(&harness::ChunkSummary) -> harness::MeanStd;
    let rows: [(&str, Pick); 3] = [
        ("F1", |c| c.f1),
        ("c-mAP", |c| c.c_map),
        ("mAP", |c| c.reconstructed_map),
    ];
    for (name, pick) in rows {
        print!("{name:<8}");
        for c in &summary.chunked {
            let v = pick(c);
            print!(" {:>14}", format!("{:.2} ({:.2})", v.mean, v.std));
        }
        println!();
    }
}

#[allow(clippy::too_many_arguments)]
fn synth(
    out: &Path,
    spec: Option<&Path>,
    classes: Option<usize>,
    subjects: Option<usize>,
    noise: Option<f64>,
    seed: Option<u64>,
    rate: Option<f64>,
    format: Format,
) -> Result<(), Error> {
    let mut s: SyntheticSpec = match spec {
        Some(p) => read_json(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(c) = classes {
        s.num_classes = c;
    }
    if let Some(n) = subjects {
        s.num_subjects = n;
    }
    if let Some(n) = noise {
        s.noise = n;
    }
    if let Some(v) = seed {
        s.seed = v;
    }
    if let Some(r) = rate {
        s.sampling_rate = r;
    }
    let manifest = harness::make_synthetic_dataset(&s, out)?;
    let path = out.join("manifest.json");
    match format {
        Format::Json => print_json(&serde_json::json!({
            "manifest": path,
            "subjects": manifest.subjects.len(),
            "classes": manifest.class_names,
        })),
        Format::Table => {
            println!("wrote {} subjects to {}", manifest.subjects.len(), path.display());
            Ok(())
        }
    }
}

fn window(
    manifest_path: &Path,
    out: &Path,
    holdout: Option<&str>,
    embedding_format: EmbeddingFormat,
    args: &WindowArgs,
) -> Result<(), Error> {
    let manifest = load_manifest(manifest_path)?;
    let cfg = args.apply(WindowConfig::default());
    let raw = WindowConfig {
        normalize: false,
        ..cfg
    };
    let mut seqs = Vec::new();
    for s in &manifest.subjects {
        let stream = load_stream(&manifest, &s.id)?;
        seqs.push(make_windows(&stream, &raw, None)?);
    }
    if cfg.normalize {
        let fit: Vec<_> = seqs
            .iter()
            .filter(|w| Some(w.subject_id.as_str()) != holdout)
            .collect();
        let norm = FeatureNorm::fit(&fit)?;
        for w in &mut seqs {
            norm.apply(w)?;
        }
        fs::create_dir_all(out).map_err(|e| Error::Io {
            path: out.to_path_buf(),
            source: e,
        })?;
        write_json(&out.join("norm.json"), &norm)?;
    }
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    for w in &seqs {
        match embedding_format {
            EmbeddingFormat::Csv => write_csv_embeddings(w, out.join(format!("{}.csv", w.subject_id)))?,
            EmbeddingFormat::Bin => write_binary_embeddings(w, out.join(format!("{}.bin", w.subject_id)))?,
        }
    }
    log::info!("wrote {} window files to {}", seqs.len(), out.display());
    Ok(())
}

fn train(run: &RunArgs, validation: &str, seed: u64, out: &Path, format: Format) -> Result<(), Error> {
    let cfg = run.resolve()?;
    let dataset = Dataset::load(&cfg.manifest, cfg.window, &cfg.features)?;
    let outcome = train_fold(&dataset, &cfg, validation, seed)?;
    let fold = outcome.result.map_err(|message| Error::Diverged { epoch: 0, message })?;
    save_checkpoint(&fold.model, out)?;
    let training: Vec<String> = dataset
        .manifest
        .subject_ids()
        .into_iter()
        .filter(|s| s != validation)
        .collect();
    if let Some(norm) = dataset.fold_norm(&training)? {
        write_json(&norm_sidecar(out), &norm)?;
    }
    let last = fold.loss_curve.last().copied().unwrap_or(f64::NAN);
    match format {
        Format::Json => print_json(&serde_json::json!({
            "checkpoint": out,
            "validation_subject": validation,
            "seed": seed,
            "loss_curve": fold.loss_curve,
        })),
        Format::Table => {
            println!("epochs {}  first loss {:.4}  final loss {last:.4}", fold.loss_curve.len(), fold.loss_curve[0]);
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn predict(
    checkpoint: &Path,
    manifest_path: &Path,
    subject: &str,
    norm: Option<&Path>,
    theta: Option<f64>,
    out: Option<&Path>,
    args: &WindowArgs,
) -> Result<(), Error> {
    let model = load_checkpoint(checkpoint)?;
    let manifest = load_manifest(manifest_path)?;
    let stream = load_stream(&manifest, subject)?;
    let cfg = args.apply(WindowConfig::default());
    let raw = WindowConfig {
        normalize: false,
        ..cfg
    };
    let mut ws = make_windows(&stream, &raw, None)?;
    if cfg.normalize {
        let path = norm.map(Path::to_path_buf).unwrap_or_else(|| norm_sidecar(checkpoint));
        let stats: FeatureNorm = read_json(&path)?;
        stats.apply(&mut ws)?;
    }
    let mut segments = predict_segments(&model, &ws)?;
    if let Some(theta) = theta {
        let grid = ws.grid();
        segments = rasterize_prediction(&segments, theta, &grid, manifest.null_class, manifest.sampling_rate).segments;
    }
    let records: Vec<SegmentRecord> = segments
        .into_iter()
        .map(|segment| SegmentRecord {
            subject_id: subject.to_string(),
            segment,
        })
        .collect();
    match out {
        Some(path) => write_segments_csv(&records, Some(&manifest), path),
        None => write_segments(&records, Some(&manifest), std::io::stdout().lock()),
    }
}

fn labelled_segments(manifest: &DatasetManifest, cfg: &WindowConfig) -> Result<Vec<SegmentRecord>, Error> {
    let mut out = Vec::new();
    for s in &manifest.subjects {
        let stream = load_stream(manifest, &s.id)?;
        let stride = cfg.grid(manifest.sampling_rate, stream.len())?.stride;
        let gt = GroundTruth::from_stream(&stream, stride, manifest.null_class);
        out.extend(gt.segments.into_iter().map(|segment| SegmentRecord {
            subject_id: s.id.clone(),
            segment,
        }));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn eval(
    pred: &Path,
    gt: Option<&Path>,
    manifest_path: &Path,
    theta: f64,
    confusion_dir: Option<&Path>,
    args: &WindowArgs,
    format: Format,
) -> Result<(), Error> {
    let manifest = load_manifest(manifest_path)?;
    let cfg = args.apply(WindowConfig::default());
    let preds = read_segments_csv(pred, Some(&manifest))?;
    let truth = match gt {
        Some(path) => read_segments_csv(path, Some(&manifest))?,
        None => labelled_segments(&manifest, &cfg)?,
    };
    let group = |recs: &[SegmentRecord]| {
        let mut m: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
        for r in recs {
            m.entry(r.subject_id.clone()).or_default().push(r.segment);
        }
        m
    };
    let preds = group(&preds);
    let truth = group(&truth);
    if let Some(unknown) = preds.keys().find(|k| !truth.contains_key(*k)) {
        return Err(Error::InvalidInput(format!(
            "predictions for subject {unknown:?} have no ground truth"
        )));
    }
    let background = manifest.null_class.unwrap_or(0);
    let mut reports: BTreeMap<String, EvalReport> = BTreeMap::new();
    for (subject, gt_segs) in &truth {
        let stream = load_stream(&manifest, subject)?;
        let grid = cfg.grid(manifest.sampling_rate, stream.len())?;
        let pred_segs = preds.get(subject).cloned().unwrap_or_default();
        let rp = rasterize_prediction(&pred_segs, theta, &grid, manifest.null_class, manifest.sampling_rate);
        let gt_timeline = rasterize_segments(gt_segs, &grid, background, manifest.sampling_rate);
        let report = evaluate(
            EvalInput {
                pred_timeline: &rp.timeline,
                gt_timeline: &gt_timeline,
                pred_segments: &rp.segments,
                gt_segments: gt_segs,
                num_classes: manifest.num_classes(),
                null_class: manifest.null_class,
                stride: grid.stride,
            },
            &inertial_tal::metrics::DEFAULT_TIOU_THRESHOLDS,
            Default::default(),
        )?;
        if let Some(dir) = confusion_dir {
            fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?;
            let path = dir.join(format!("{subject}_confusion.csv"));
            let file = fs::File::create(&path).map_err(|e| Error::Io { path, source: e })?;
            report.write_confusion_csv(&manifest.class_names, file)?;
        }
        reports.insert(subject.clone(), report);
    }
    let rows: Vec<(u64, BTreeMap<String, f64>)> = reports
        .values()
        .map(|r| (0, r.scalars().into_iter().collect()))
        .collect();
    let mean = aggregate_by_seed(&rows);
    match format {
        Format::Json => print_json(&serde_json::json!({ "subjects": reports, "mean": mean })),
        Format::Table => {
            print_metrics_table("mean over subjects", &mean);
            Ok(())
        }
    }
}

fn loso(cfg: RunConfig, jobs: usize, out: &Path, format: Format) -> Result<(), Error> {
    let dataset = Dataset::load(&cfg.manifest, cfg.window, &cfg.features)?;
    let run = run_loso(&dataset, &cfg, jobs)?;
    let dir = write_outputs(&run, out)?;
    log::info!("reports written to {}", dir.display());
    match format {
        Format::Json => print_json(&run.summary),
        Format::Table => {
            println!(
                "theta {} majority width {} (validation-optimized)",
                run.summary.postprocess.theta, run.summary.postprocess.majority_width
            );
            print_metrics_table("offline", &run.summary.offline);
            if !run.summary.chunked.is_empty() {
                println!();
                print_chunk_table(&run.summary);
            }
            for ex in &run.summary.excluded {
                println!("excluded: seed {} subject {}: {}", ex.seed, ex.subject, ex.reason);
            }
            Ok(())
        }
    }
}

fn gradcheck(seed: u64, tolerance: f64, format: Format) -> Result<bool, Error> {
    let (model, ws, gt) = tiny_problem(seed);
    let report = check_gradients(&model, &ws, &gt)?;
    match format {
        Format::Json => print_json(&report)?,
        Format::Table => {
            for b in &report.blocks {
                println!("{:<20} {:>12.3e}", b.name, b.max_rel_error);
            }
            println!("max relative error {:.3e}", report.max_rel_error);
        }
    }
    Ok(report.passes(tolerance))
}

fn report(input: &Path, csv_out: Option<&Path>, format: Format) -> Result<(), Error> {
    let mut rows = Vec::new();
    let mut seed_dirs: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| Error::Io {
            path: input.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    seed_dirs.sort();
    for dir in seed_dirs {
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for f in files {
            let r: FoldReport = read_json(&f)?;
            rows.push((r.seed, r.report.scalars().into_iter().collect::<BTreeMap<_, _>>()));
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("no fold reports under {}", input.display())));
    }
    let agg = aggregate_by_seed(&rows);
    if let Some(path) = csv_out {
        let mut text = String::from("protocol,chunk_seconds,metric,mean,std\n");
        for (k, v) in &agg {
            text.push_str(&format!("offline,,{k},{},{}\n", v.mean, v.std));
        }
        fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    match format {
        Format::Json => print_json(&agg),
        Format::Table => {
            print_metrics_table(&format!("{} fold reports", rows.len()), &agg);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let format = cli.format;
    match cli.command {
        Command::Synth {
            out,
            spec,
            classes,
            subjects,
            noise,
            seed,
            rate,
        } => synth(&out, spec.as_deref(), classes, subjects, noise, seed, rate, format)?,
        Command::Window {
            manifest,
            out,
            holdout,
            embedding_format,
            window: w,
        } => window(&manifest, &out, holdout.as_deref(), embedding_format, &w)?,
        Command::Train {
            run,
            validation,
            seed,
            out,
        } => train(&run, &validation, seed, &out, format)?,
        Command::Predict {
            checkpoint,
            manifest,
            subject,
            norm,
            theta,
            out,
            window: w,
        } => predict(&checkpoint, &manifest, &subject, norm.as_deref(), theta, out.as_deref(), &w)?,
        Command::Eval {
            pred,
            gt,
            manifest,
            theta,
            confusion_dir,
            window: w,
        } => eval(&pred, gt.as_deref(), &manifest, theta, confusion_dir.as_deref(), &w, format)?,
        Command::Loso { run, jobs, out } => loso(run.resolve()?, jobs, &out, format)?,
        Command::ChunkEval {
            run,
            chunks,
            jobs,
            out,
        } => {
            let mut cfg = run.resolve()?;
            let sizes = match (chunks, &cfg.protocol) {
                (Some(c), _) => c,
                (None, Protocol::Chunked { sizes }) => sizes.clone(),
                (None, Protocol::Offline) => DEFAULT_CHUNK_SECONDS.to_vec(),
            };
            cfg.protocol = Protocol::Chunked { sizes };
            cfg.validate()?;
            loso(cfg, jobs, &out, format)?
        }
        Command::Gradcheck { seed, tolerance } => return gradcheck(seed, tolerance, format),
        Command::Report { input, csv } => report(&input, csv.as_deref(), format)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(true)) => ExitCode::SUCCESS,
        Ok(Ok(false)) => {
            eprintln!("error: check failed");
            ExitCode::from(1)
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Diverged { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
        Err(_) => ExitCode::from(2),
    }
}
