use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{CliError, CliResult, Command, Common, RunConfig};
use crate::datamodel::{
    generate_synthetic_with_truth, load_manifest, make_monte_carlo_splits, DatasetManifest, FoldSplit, Segment,
    SyntheticSpec, TaskKind, MEDIA_INDEX_FILE,
};
use crate::features::FeatureStore;
use crate::inference::{
    default_threshold, ensemble_taxonomy, entropy_floor, explain, segment_timeline, write_attention_svg, SegmentSpan,
};
use crate::metrics::{roc_curve, vertical_average, write_roc_svg, FoldSummary, SummaryReport};
use crate::model::Ablation;
use crate::training::{
    evaluate_checkpoint, find_missing_features, run_folds, CrossValidation, ModelCheckpoint, SegmentPrediction,
    CHECKPOINT_FILE,
};
use crate::{Error, Result};

pub(super) fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Split { common } => split(&common),
        Command::Train { common, splits } => train(&common, splits.as_deref()),
        Command::Evaluate { common, models } => evaluate(&common, &models),
        Command::Ablate { common, splits } => ablate(&common, splits.as_deref()),
        Command::Infer { common, models, video } => infer(&common, &models, video.as_deref()),
        Command::Explain {
            common,
            checkpoint,
            video,
            start,
            end,
        } => explain_segment(&common, &checkpoint, &video, start, end),
        Command::Synth {
            common,
            classes,
            videos,
            segments_per_video,
            min_segment,
            max_segment,
            gap,
            dim,
            mode,
            signal,
            noise,
        } => {
            let spec = SyntheticSpec {
                n_classes: classes,
                n_videos: videos,
                segments_per_video,
                min_segment_s: min_segment,
                max_segment_s: max_segment,
                gap_s: gap,
                feature_dim: dim,
                mode,
                signal,
                noise,
                ..SyntheticSpec::default()
            };
            synth(&common, &spec)
        }
    }
}

/// The config file (if any) with flag overrides applied, validated.
fn resolve(common: &Common) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.manifest.is_some() {
        c.manifest = common.manifest.clone();
    }
    if common.features.is_some() {
        c.features = common.features.clone();
    }
    if common.out.is_some() {
        c.out = common.out.clone();
    }
    if let Some(n) = common.folds {
        c.n_folds = n;
    }
    if let Some(s) = common.seed {
        c.train.seed = s;
    }
    if common.threshold.is_some() {
        c.threshold = common.threshold;
    }
    if let Some(j) = common.jobs {
        c.jobs = j;
    }
    if common.no_tta {
        c.use_tta = false;
    }
    if common.task.is_some() {
        c.task = common.task;
    }
    if let Some(e) = common.epochs {
        c.train.epochs = e;
    }
    if let Some(lr) = common.learning_rate {
        c.train.learning_rate = lr;
    }
    if let Some(a) = common.ablation {
        c.train.ablation = a;
    }
    c.validate()?;
    Ok(c)
}

fn manifest_of(c: &RunConfig) -> Result<DatasetManifest> {
    load_manifest(&RunConfig::existing(c.manifest.as_ref(), "manifest")?)
}

fn features_of(c: &RunConfig) -> Result<FeatureStore> {
    FeatureStore::load(&RunConfig::existing(c.features.as_ref(), "features")?)
}

/// The configured task, or the only task the manifest has labels for.
fn task_of(c: &RunConfig, manifest: &DatasetManifest) -> Result<TaskKind> {
    if let Some(t) = c.task {
        return Ok(t);
    }
    let tasks: BTreeSet<TaskKind> = manifest.records.iter().map(|r| r.task_kind).collect();
    match tasks.len() {
        1 => Ok(*tasks.iter().next().expect("one task")),
        0 => Err(Error::Config("manifest has no records".into())),
        _ => Err(Error::Config(format!(
            "manifest has labels for {} tasks; choose one with --task",
            tasks.len()
        ))),
    }
}

fn load_splits(dir: &Path) -> Result<Vec<FoldSplit>> {
    let mut splits: Vec<FoldSplit> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("fold") && n.ends_with(".json"))
        })
        .map(|p| FoldSplit::load(&p))
        .collect::<Result<_>>()?;
    if splits.is_empty() {
        return Err(Error::Config(format!("no fold<k>.json files in {}", dir.display())));
    }
    splits.sort_by_key(|s| s.fold_id);
    Ok(splits)
}

fn splits_of(c: &RunConfig, manifest: &DatasetManifest, dir: Option<&Path>) -> Result<Vec<FoldSplit>> {
    let splits = match dir {
        Some(d) => load_splits(d)?,
        None => make_monte_carlo_splits(manifest, c.n_folds, c.train.seed)?,
    };
    let videos = manifest.video_ids().into_iter().collect();
    for s in &splits {
        s.validate(&videos)?;
    }
    Ok(splits)
}

/// Fails with the full list when any feature a run would read is absent.
fn require_features(
    manifest: &DatasetManifest,
    store: &FeatureStore,
    segments: &[Segment],
    c: &RunConfig,
    with_tta: bool,
) -> CliResult<()> {
    if store.dim() != c.train.encoder.dim {
        return Err(Error::Config(format!(
            "features have dim {}, the encoder expects {}",
            store.dim(),
            c.train.encoder.dim
        ))
        .into());
    }
    let missing = find_missing_features(manifest, store, segments, &c.train.sampling, with_tta)?;
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::MissingFeatures(missing))
    }
}

fn segments_in(manifest: &DatasetManifest, task: TaskKind, splits: &[FoldSplit]) -> Result<Vec<Segment>> {
    let used: BTreeSet<&String> = splits
        .iter()
        .flat_map(|s| {
            s.train_video_ids
                .iter()
                .chain(&s.val_video_ids)
                .chain(&s.test_video_ids)
        })
        .collect();
    Ok(manifest
        .segments(task)?
        .into_iter()
        .filter(|s| used.contains(&s.video_id))
        .collect())
}

fn split(common: &Common) -> CliResult<()> {
    let c = resolve(common)?;
    let manifest = manifest_of(&c)?;
    let out = c.out_dir()?;
    let splits = make_monte_carlo_splits(&manifest, c.n_folds, c.train.seed)?;
    fs::create_dir_all(&out).map_err(Error::from)?;
    for s in &splits {
        s.save(&out.join(format!("fold{}.json", s.fold_id)))?;
    }
    let f = &splits[0];
    println!(
        "wrote {} folds to {} ({} train / {} val / {} test videos each)",
        splits.len(),
        out.display(),
        f.train_video_ids.len(),
        f.val_video_ids.len(),
        f.test_video_ids.len()
    );
    Ok(())
}

fn fmt_summary(s: &Option<FoldSummary>) -> String {
    match s {
        Some(s) => format!("{:.4} ± {:.4}", s.mean, s.std),
        None => "undefined".into(),
    }
}

/// Fold-averaged one-vs-rest ROC per class.
fn write_roc_plot(path: &Path, title: &str, codes: &[String], folds: &[Vec<SegmentPrediction>]) -> Result<()> {
    let mut classes = Vec::new();
    for (c, code) in codes.iter().enumerate() {
        let mut curves = Vec::new();
        for preds in folds {
            let scores: Vec<f64> = preds.iter().map(|p| p.probs[c]).collect();
            let positive: Vec<bool> = preds.iter().map(|p| p.label == c).collect();
            if let Some(curve) = roc_curve(&scores, &positive)? {
                curves.push(curve);
            }
        }
        if !curves.is_empty() {
            classes.push((code.clone(), vertical_average(&curves, 101)?));
        }
    }
    write_roc_svg(path, title, &classes)
}

fn report_run(cv: &CrossValidation, out: &Path, c: &RunConfig, plots: bool) -> Result<()> {
    cv.save(out)?;
    c.save(&out.join("config.json"))?;
    if plots {
        let codes = &cv.folds[0].checkpoint.taxonomy.categories;
        let preds: Vec<_> = cv.folds.iter().map(|f| f.predictions.clone()).collect();
        write_roc_plot(
            &out.join("roc.svg"),
            "held-out ROC, mean ± 1 std over folds",
            codes,
            &preds,
        )?;
    }
    for f in &cv.folds {
        println!(
            "fold {}: best epoch {}, test macro AUC {}, macro PPV {}",
            f.split.fold_id,
            f.checkpoint.best_epoch,
            f.report.macro_auc.map_or("undefined".into(), |v| format!("{v:.4}")),
            f.report.macro_ppv.map_or("undefined".into(), |v| format!("{v:.4}"))
        );
    }
    println!(
        "macro AUC {}, macro PPV {} over {} folds",
        fmt_summary(&cv.summary.macro_auc),
        fmt_summary(&cv.summary.macro_ppv),
        cv.folds.len()
    );
    Ok(())
}

fn train(common: &Common, splits_dir: Option<&Path>) -> CliResult<()> {
    let c = resolve(common)?;
    let out = c.out_dir()?;
    let manifest = manifest_of(&c)?;
    let store = features_of(&c)?;
    let task = task_of(&c, &manifest)?;
    let splits = splits_of(&c, &manifest, splits_dir)?;
    let segments = segments_in(&manifest, task, &splits)?;
    require_features(&manifest, &store, &segments, &c, c.train.ablation.uses_tta())?;
    let cv = run_folds(&manifest, &store, task, &splits, &c.train, c.jobs)?;
    report_run(&cv, &out, &c, common.plots)?;
    Ok(())
}

/// `fold<k>/checkpoint.bin` files under `dir`, or `dir` itself when it is a
/// checkpoint file.
fn find_checkpoints(path: &Path) -> Vec<PathBuf> {
    if path.is_file() {
        return vec![path.to_path_buf()];
    }
    let direct = path.join(CHECKPOINT_FILE);
    if direct.is_file() {
        return vec![direct];
    }
    let mut found: Vec<PathBuf> = fs::read_dir(path)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .map(|p| p.join(CHECKPOINT_FILE))
        .filter(|p| p.is_file())
        .collect();
    found.sort();
    found
}

fn evaluate(common: &Common, models: &Path) -> CliResult<()> {
    let c = resolve(common)?;
    let out = c.out_dir()?;
    let paths = find_checkpoints(models);
    if paths.is_empty() {
        return Err(CliError::NoCheckpoints(models.display().to_string()));
    }
    let manifest = manifest_of(&c)?;
    let store = features_of(&c)?;
    let task = task_of(&c, &manifest)?;
    let mut loaded = Vec::new();
    for p in &paths {
        let ck = ModelCheckpoint::load(p)?;
        if ck.taxonomy.task_kind != task {
            return Err(Error::Taxonomy(format!(
                "{} was trained for {}, the manifest task is {task}",
                p.display(),
                ck.taxonomy.task_kind
            ))
            .into());
        }
        let split_path = p.with_file_name("split.json");
        let split = FoldSplit::load(&split_path)?;
        loaded.push((ck, split));
    }
    let splits: Vec<FoldSplit> = loaded.iter().map(|(_, s)| s.clone()).collect();
    let segments = segments_in(&manifest, task, &splits)?;
    let mut cfg = c.clone();
    cfg.train.encoder = loaded[0].0.config.encoder.clone();
    cfg.train.sampling = loaded[0].0.config.sampling.clone();
    require_features(&manifest, &store, &segments, &cfg, true)?;

    let mut reports = Vec::new();
    let mut all_preds = Vec::new();
    for (ck, split) in &loaded {
        let (report, preds) = evaluate_checkpoint(ck, &manifest, &store, &split.test_video_ids, task)?;
        let dir = out.join(format!("fold{}", split.fold_id));
        fs::create_dir_all(&dir).map_err(Error::from)?;
        report.write_json(&dir.join("report.json"))?;
        report.write_csv(&dir.join("report.csv"))?;
        fs::write(
            dir.join("predictions.json"),
            serde_json::to_string_pretty(&preds).map_err(Error::from)? + "\n",
        )
        .map_err(Error::from)?;
        println!(
            "fold {}: test macro AUC {}",
            split.fold_id,
            report.macro_auc.map_or("undefined".into(), |v| format!("{v:.4}"))
        );
        reports.push(report);
        all_preds.push(preds);
    }
    let summary = SummaryReport::from_folds(reports)?;
    summary.write_json(&out.join("summary.json"))?;
    summary.write_csv(&out.join("summary.csv"))?;
    if common.plots {
        write_roc_plot(
            &out.join("roc.svg"),
            "held-out ROC, mean ± 1 std over folds",
            &loaded[0].0.taxonomy.categories,
            &all_preds,
        )?;
    }
    println!(
        "macro AUC {}, macro PPV {} over {} checkpoints",
        fmt_summary(&summary.macro_auc),
        fmt_summary(&summary.macro_ppv),
        loaded.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    setting: Ablation,
    macro_auc: Option<FoldSummary>,
    macro_ppv: Option<FoldSummary>,
    delta_auc: Option<f64>,
    delta_ppv: Option<f64>,
}

fn ablate(common: &Common, splits_dir: Option<&Path>) -> CliResult<()> {
    let c = resolve(common)?;
    let out = c.out_dir()?;
    let manifest = manifest_of(&c)?;
    let store = features_of(&c)?;
    let task = task_of(&c, &manifest)?;
    let splits = splits_of(&c, &manifest, splits_dir)?;
    let segments = segments_in(&manifest, task, &splits)?;
    require_features(&manifest, &store, &segments, &c, true)?;

    let mut summaries = Vec::new();
    for setting in Ablation::ALL {
        let mut cfg = c.clone();
        cfg.train.ablation = setting;
        let cv = run_folds(&manifest, &store, task, &splits, &cfg.train, c.jobs)?;
        cv.save(&out.join(setting.as_str()))?;
        eprintln!("{setting}: macro AUC {}", fmt_summary(&cv.summary.macro_auc));
        summaries.push((setting, cv.summary));
    }
    let full = summaries
        .iter()
        .find(|(s, _)| *s == Ablation::Full)
        .map(|(_, s)| (s.macro_auc, s.macro_ppv))
        .expect("full setting");
    let delta = |v: &Option<FoldSummary>, base: &Option<FoldSummary>| match (v, base) {
        (Some(v), Some(b)) => Some(v.mean - b.mean),
        _ => None,
    };
    let rows: Vec<AblationRow> = summaries
        .iter()
        .map(|(setting, s)| AblationRow {
            setting: *setting,
            delta_auc: delta(&s.macro_auc, &full.0),
            delta_ppv: delta(&s.macro_ppv, &full.1),
            macro_auc: s.macro_auc,
            macro_ppv: s.macro_ppv,
        })
        .collect();

    fs::create_dir_all(&out).map_err(Error::from)?;
    c.save(&out.join("config.json"))?;
    fs::write(
        out.join("ablation.json"),
        serde_json::to_string_pretty(&rows).map_err(Error::from)? + "\n",
    )
    .map_err(Error::from)?;
    let mut w = csv::Writer::from_path(out.join("ablation.csv")).map_err(Error::from)?;
    w.write_record([
        "setting",
        "auc_mean",
        "auc_std",
        "ppv_mean",
        "ppv_std",
        "delta_auc",
        "delta_ppv",
    ])
    .map_err(Error::from)?;
    let num = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &rows {
        w.write_record([
            r.setting.as_str().to_string(),
            num(r.macro_auc.as_ref().map(|s| s.mean)),
            num(r.macro_auc.as_ref().map(|s| s.std)),
            num(r.macro_ppv.as_ref().map(|s| s.mean)),
            num(r.macro_ppv.as_ref().map(|s| s.std)),
            num(r.delta_auc),
            num(r.delta_ppv),
        ])
        .map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<8} {:>18} {:>18} {:>9} {:>9}",
        "setting", "macro AUC", "macro PPV", "ΔAUC", "ΔPPV"
    );
    let signed = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:+.4}"));
    for r in &rows {
        let _ = writeln!(
            table,
            "{:<8} {:>18} {:>18} {:>9} {:>9}",
            r.setting.as_str(),
            fmt_summary(&r.macro_auc),
            fmt_summary(&r.macro_ppv),
            signed(r.delta_auc),
            signed(r.delta_ppv)
        );
    }
    print!("{table}");
    Ok(())
}

fn infer(common: &Common, models: &[PathBuf], video: Option<&str>) -> CliResult<()> {
    let c = resolve(common)?;
    let out = c.out_dir()?;
    let paths: Vec<PathBuf> = models.iter().flat_map(|m| find_checkpoints(m)).collect();
    if paths.is_empty() {
        let names: Vec<String> = models.iter().map(|m| m.display().to_string()).collect();
        return Err(CliError::NoCheckpoints(names.join(", ")));
    }
    let checkpoints = paths
        .iter()
        .map(|p| ModelCheckpoint::load(p))
        .collect::<Result<Vec<_>>>()?;
    let taxonomy = ensemble_taxonomy(&checkpoints)?.clone();
    if let Some(task) = c.task {
        if task != taxonomy.task_kind {
            return Err(
                Error::Taxonomy(format!("models predict {}, --task asks for {task}", taxonomy.task_kind)).into(),
            );
        }
    }
    let manifest_path = RunConfig::existing(c.manifest.as_ref(), "manifest")?;
    let media_path = manifest_path.with_file_name(MEDIA_INDEX_FILE);
    let media: std::collections::BTreeMap<String, crate::datamodel::MediaDescriptor> =
        serde_json::from_str(&fs::read_to_string(&media_path).map_err(Error::from)?).map_err(|e| Error::Format {
            path: media_path.clone(),
            message: e.to_string(),
        })?;
    let store = features_of(&c)?;
    let videos: Vec<String> = match video {
        Some(v) => {
            if !media.contains_key(v) {
                return Err(Error::Config(format!("video {v} is not in {}", media_path.display())).into());
            }
            vec![v.to_string()]
        }
        None => media.keys().cloned().collect(),
    };
    let threshold = c.threshold.unwrap_or_else(|| default_threshold(taxonomy.len()));
    let floor = checkpoints
        .iter()
        .map(|ck| entropy_floor(taxonomy.len(), ck.model.bank.temperature))
        .fold(f64::INFINITY, f64::min);
    if threshold < floor {
        eprintln!(
            "warning: threshold {threshold:.4} nats is below {floor:.4}, the lowest entropy these models can \
             produce; every interval will abstain (raise --threshold or train with a lower temperature)"
        );
    }

    // check every interval's features before predicting anything
    let mut missing = Vec::new();
    for ck in &checkpoints {
        for v in &videos {
            let m = &media[v];
            let segments: Vec<Segment> = (0..m.duration_s.floor() as usize)
                .map(|k| Segment {
                    video_id: v.clone(),
                    start_s: k as f64,
                    end_s: (k + 1) as f64,
                    label: 0,
                })
                .collect();
            let probe = DatasetManifest::new(Vec::new(), media.clone())?;
            let with_tta = c.use_tta && ck.ablation().uses_tta();
            missing.extend(find_missing_features(
                &probe,
                &store,
                &segments,
                &ck.config.sampling,
                with_tta,
            )?);
        }
    }
    if !missing.is_empty() {
        missing.sort_by(|a, b| {
            (&a.video_id, &a.modality)
                .cmp(&(&b.video_id, &b.modality))
                .then(a.timestamp.total_cmp(&b.timestamp))
        });
        missing.dedup();
        return Err(CliError::MissingFeatures(missing));
    }

    fs::create_dir_all(&out).map_err(Error::from)?;
    for v in &videos {
        let timeline = segment_timeline(&checkpoints, &store, v, &media[v], threshold, c.use_tta)?;
        timeline.write_json(&out.join(format!("{v}.timeline.json")))?;
        if common.plots {
            timeline.write_svg(&out.join(format!("{v}.timeline.svg")))?;
        }
        println!(
            "{v}: {} intervals, {} predicted, {} events (threshold {threshold:.4} nats, {} models)",
            timeline.intervals.len(),
            timeline.n_predicted(),
            timeline.events.len(),
            checkpoints.len()
        );
    }
    Ok(())
}

fn explain_segment(common: &Common, checkpoint: &Path, video: &str, start: f64, end: f64) -> CliResult<()> {
    let c = resolve(common)?;
    let out = c.out_dir()?;
    if !checkpoint.is_file() {
        return Err(CliError::NoCheckpoints(checkpoint.display().to_string()));
    }
    let ck = ModelCheckpoint::load(checkpoint)?;
    if ck.ablation().encode_mode() == crate::encoder::EncodeMode::MeanPool {
        return Err(Error::UnsupportedMode(format!("{} checkpoints have no temporal attention", ck.ablation())).into());
    }
    let manifest_path = RunConfig::existing(c.manifest.as_ref(), "manifest")?;
    let media_path = manifest_path.with_file_name(MEDIA_INDEX_FILE);
    let media: std::collections::BTreeMap<String, crate::datamodel::MediaDescriptor> =
        serde_json::from_str(&fs::read_to_string(&media_path).map_err(Error::from)?).map_err(|e| Error::Format {
            path: media_path.clone(),
            message: e.to_string(),
        })?;
    let fps = media
        .get(video)
        .ok_or_else(|| Error::Config(format!("video {video} is not in {}", media_path.display())))?
        .fps;
    let store = features_of(&c)?;
    let span = SegmentSpan {
        video_id: video.to_string(),
        start_s: start,
        end_s: end,
        source_fps: fps,
    };
    let e = explain(&ck, &store, &span)?;
    fs::create_dir_all(&out).map_err(Error::from)?;
    fs::write(
        out.join("explanation.json"),
        serde_json::to_string_pretty(&e).map_err(Error::from)? + "\n",
    )
    .map_err(Error::from)?;
    if common.plots {
        write_attention_svg(&out.join("attention.svg"), &e)?;
    }
    println!(
        "{video} [{start}, {end}] s: predicted {}, peak attention at {:.2} s ({} {} frames)",
        e.predicted,
        e.peak_s(),
        e.weights.len(),
        e.modality
    );
    Ok(())
}

fn synth(common: &Common, spec: &SyntheticSpec) -> CliResult<()> {
    let out = common
        .out
        .clone()
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    let seed = common.seed.unwrap_or(0);
    let (manifest, store, truth) = generate_synthetic_with_truth(spec, seed)?;
    fs::create_dir_all(&out).map_err(Error::from)?;
    manifest.save(&out.join("manifest.csv"), &out.join(MEDIA_INDEX_FILE))?;
    store.save(&out.join("features"))?;
    fs::write(
        out.join("truth.json"),
        serde_json::to_string_pretty(&truth).map_err(Error::from)? + "\n",
    )
    .map_err(Error::from)?;
    println!(
        "wrote {} videos, {} segments ({}, {} classes, dim {}) to {}",
        spec.n_videos,
        truth.len(),
        serde_json::to_value(spec.mode)
            .map_err(Error::from)?
            .as_str()
            .unwrap_or("?"),
        spec.n_classes,
        spec.feature_dim,
        out.display()
    );
    Ok(())
}
