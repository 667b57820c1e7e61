//! The command-line operations, as library calls writing into an output
//! directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::{simulate_plate_sweep, GestureKind, Script, ScriptedGesture};
use crate::classify::{cross_validate, extract_features, fit, predict, ClassifierKind, ClassifierModel, CrossValidation};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::hmm::{
    build_emission, classify_behavior, fit_behavior_models, Behavior, BehaviorConfusion, BehaviorDecision, BehaviorHmm,
    GestureSequence, Matrix2,
};
use crate::io::{
    format_dataset, format_series, format_sequence, labeled, parse_dataset, parse_sequence, parse_script, read_json,
    read_text, read_trace, write_atomic, write_json, write_trace, DatasetRow,
};
use crate::preprocess::{magnitude_response_table, subcarrier_variances};
use crate::segmentation::Segmentation;
use crate::synth::{
    behavior_sequences, behavior_test_set, evaluate_behavior_models, keystroke_burst, label_for, labeled_segments,
    process_trace, random_trace, item_seed, score_segments, Processed, SegmentationScore,
};

/// Wall-clock seconds per stage. Kept apart from [`RunReport`] so reports of
/// identical runs compare equal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stages: Vec<(String, f64)>,
}

impl StageTimings {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage));
        self.stages.push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMetrics {
    pub traces: usize,
    pub annotated: usize,
    pub detected: usize,
    pub matched: usize,
    pub recall: f64,
    pub precision: f64,
    pub max_boundary_error_s: f64,
    pub mean_boundary_error_s: f64,
}

impl SegmentationMetrics {
    pub fn from_score(traces: usize, s: &SegmentationScore) -> Self {
        SegmentationMetrics {
            traces,
            annotated: s.annotated,
            detected: s.detected,
            matched: s.matched,
            recall: s.recall(),
            precision: s.precision(),
            max_boundary_error_s: s.max_boundary_error(),
            mean_boundary_error_s: s.mean_boundary_error(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstMetrics {
    pub keystrokes: usize,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureMetrics {
    pub segments: usize,
    pub typing: usize,
    pub mouse: usize,
    pub cross_validation: Vec<CrossValidation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMetrics {
    pub emission: Matrix2,
    pub models: Vec<BehaviorHmm>,
    pub confusion: BehaviorConfusion,
    pub macro_accuracy: f64,
}

/// What `pipeline` found on a single trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub source_subcarrier: usize,
    pub segments: Vec<(usize, usize, bool)>,
    /// Present when the trace carries annotations.
    pub score: Option<SegmentationMetrics>,
    pub predictions: Vec<GestureKind>,
    /// Fraction of labeled segments classified correctly.
    pub gesture_accuracy: Option<f64>,
    pub behavior: Option<BehaviorDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegmentationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burst: Option<BurstMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gesture: Option<GestureMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavior: Option<BehaviorMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceMetrics>,
}

impl RunReport {
    fn new(config: &PipelineConfig) -> Self {
        RunReport { config: config.clone(), segmentation: None, burst: None, gesture: None, behavior: None, trace: None }
    }
}

fn segments_table(seg: &Segmentation) -> String {
    let mut out = String::from("# start_idx,end_idx,truncated\n");
    for s in &seg.segments {
        let _ = writeln!(out, "{},{},{}", s.start_idx, s.end_idx, s.truncated);
    }
    out
}

/// Writes `trace.csv` and its `trace.ann` sidecar.
pub fn cmd_simulate(cfg: &PipelineConfig, script: &Path, out: &Path) -> Result<PathBuf> {
    let script = parse_script(script, &read_text(script)?, cfg.scene.keyboard, cfg.scene.mouse)?;
    simulate_script(cfg, &script, out)
}

/// `count` evenly spaced default keystrokes instead of a script file.
pub fn burst_script(cfg: &PipelineConfig, count: usize, gap: f64) -> Script {
    let mut t = 1.0;
    let mut script = cfg.scene.empty_script(0.0);
    for _ in 0..count {
        let g = ScriptedGesture::keystroke(t);
        t = g.end() + gap;
        script.gestures.push(g);
    }
    script.duration = t - gap + 1.0;
    script
}

pub fn simulate_script(cfg: &PipelineConfig, script: &Script, out: &Path) -> Result<PathBuf> {
    let trace = cfg.scene.simulate(script, cfg.simulate_seed)?;
    let path = out.join("trace.csv");
    write_trace(&path, &trace)?;
    Ok(path)
}

/// Selection, filtering and segmentation of one trace file.
pub fn cmd_segment(cfg: &PipelineConfig, trace_path: &Path, out: &Path) -> Result<(Processed, Option<SegmentationScore>)> {
    let trace = read_trace(trace_path)?;
    let p = process_trace(&trace, &cfg.filter, &cfg.segmenter)?;
    write_atomic(&out.join("selected.csv"), format_series(&p.selected).as_bytes())?;
    write_atomic(&out.join("filtered.csv"), format_series(&p.filtered).as_bytes())?;
    write_json(&out.join("segmentation.json"), &p.segmentation)?;
    write_atomic(&out.join("segments.csv"), segments_table(&p.segmentation).as_bytes())?;
    let score = (!trace.annotations.is_empty()).then(|| {
        score_segments(&trace.annotations, &p.segmentation.segments, trace.fs, cfg.check.tolerance)
    });
    if let Some(s) = &score {
        write_json(&out.join("score.json"), &SegmentationMetrics::from_score(1, s))?;
    }
    Ok((p, score))
}

/// Features of a trace's segments (labeled through its annotations), or of a
/// simulated labeled corpus when no trace is given. Writes `features.csv`.
pub fn cmd_featurize(cfg: &PipelineConfig, trace_path: Option<&Path>, out: &Path) -> Result<Vec<DatasetRow>> {
    let rows: Vec<DatasetRow> = match trace_path {
        Some(path) => {
            let trace = read_trace(path)?;
            let p = process_trace(&trace, &cfg.filter, &cfg.segmenter)?;
            p.segmentation
                .segments
                .iter()
                .map(|seg| {
                    Ok(DatasetRow { features: extract_features(seg)?, label: label_for(seg, &trace.annotations) })
                })
                .collect::<Result<_>>()?
        }
        None => synthetic_dataset(cfg)?.into_iter().map(DatasetRow::from).collect(),
    };
    write_atomic(&out.join("features.csv"), format_dataset(&rows).as_bytes())?;
    Ok(rows)
}

fn synthetic_dataset(cfg: &PipelineConfig) -> Result<Vec<crate::classify::LabeledExample>> {
    labeled_segments(&cfg.scene, &cfg.dataset.corpus, &cfg.filter, &cfg.segmenter, cfg.dataset.segments)
}

/// Cross-validates the configured classifier and fits it on the whole
/// dataset. Writes `cv.json` and `model.json`.
pub fn cmd_train_gesture(
    cfg: &PipelineConfig,
    dataset: &Path,
    out: &Path,
) -> Result<(CrossValidation, ClassifierModel)> {
    let rows = parse_dataset(dataset, &read_text(dataset)?)?;
    let examples = labeled(dataset, &rows)?;
    let cv = cross_validate(cfg.classifier.kind, &examples, cfg.classifier.folds, cfg.classifier.seed)?;
    let model = fit(cfg.classifier.kind, &examples)?;
    write_json(&out.join("cv.json"), &cv)?;
    write_json(&out.join("model.json"), &model)?;
    Ok((cv, model))
}

/// Sequence files `<behavior>*.txt` in a directory, sorted by name.
pub fn read_sequence_dir(dir: &Path) -> Result<Vec<(Behavior, GestureSequence)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let name = p.file_stem().map(|s| s.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
        let prefix: String = name.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
        let behavior: Behavior = prefix
            .parse()
            .map_err(|_| Error::invalid(p.display().to_string(), "file name must start with surfing, working or gaming"))?;
        out.push((behavior, parse_sequence(&p, &read_text(&p)?)?));
    }
    if out.is_empty() {
        return Err(Error::invalid(dir.display().to_string(), "no .txt sequence files"));
    }
    Ok(out)
}

fn group(sequences: Vec<(Behavior, GestureSequence)>) -> Vec<(Behavior, Vec<GestureSequence>)> {
    Behavior::ALL
        .iter()
        .map(|b| (*b, sequences.iter().filter(|(x, _)| x == b).map(|(_, s)| s.clone()).collect::<Vec<_>>()))
        .filter(|(_, v)| !v.is_empty())
        .collect()
}

fn emission_from(cfg: &PipelineConfig, cv: Option<&Path>) -> Result<Matrix2> {
    let cv: CrossValidation = match cv {
        Some(p) => read_json(p)?,
        None => cross_validate(cfg.classifier.kind, &synthetic_dataset(cfg)?, cfg.classifier.folds, cfg.classifier.seed)?,
    };
    build_emission(&cv.confusion)
}

/// Fits one HMM per behavior. The emission matrix comes from a `cv.json`
/// confusion (or a fresh simulated one); training sequences from a
/// directory (or the behavior profiles). Writes `behavior_models.json`.
pub fn cmd_train_behavior(
    cfg: &PipelineConfig,
    cv: Option<&Path>,
    sequences: Option<&Path>,
    out: &Path,
) -> Result<Vec<BehaviorHmm>> {
    let b = emission_from(cfg, cv)?;
    let training = match sequences {
        Some(dir) => group(read_sequence_dir(dir)?),
        None => Behavior::ALL
            .iter()
            .map(|beh| {
                let s = &cfg.behavior;
                Ok((*beh, behavior_sequences(*beh, b, s.train_per_behavior, s.length, s.seed, 0)?))
            })
            .collect::<Result<_>>()?,
    };
    let models = fit_behavior_models(&training, b, &cfg.baum_welch)?;
    write_json(&out.join("behavior_models.json"), &models)?;
    Ok(models)
}

/// Classifies labeled sequences with trained behavior models. Writes
/// `evaluation.json` and the confusion table `behavior_confusion.txt`.
pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    models_path: &Path,
    sequences: Option<&Path>,
    out: &Path,
) -> Result<BehaviorConfusion> {
    let models: Vec<BehaviorHmm> = read_json(models_path)?;
    for m in &models {
        m.validate()?;
    }
    let first = models.first().ok_or_else(|| Error::invalid("models", "empty model file"))?;
    let tests = match sequences {
        Some(dir) => read_sequence_dir(dir)?,
        None => behavior_test_set(first.b, &cfg.behavior)?,
    };
    let confusion = evaluate_behavior_models(&models, &tests, cfg.behavior.method, cfg.behavior.seed)?;
    write_json(&out.join("evaluation.json"), &confusion)?;
    write_atomic(&out.join("behavior_confusion.txt"), confusion.table().as_bytes())?;
    Ok(confusion)
}

/// Writes `plate.csv`: side length (m) and mean peak-to-peak amplitude.
pub fn cmd_sweep_plate(cfg: &PipelineConfig, out: &Path) -> Result<Vec<(f64, f64)>> {
    let rows = simulate_plate_sweep(&cfg.scene.geometry()?, &cfg.plate)?;
    let mut text = String::from("# side_m,peak_to_peak\n");
    for (s, p) in &rows {
        let _ = writeln!(text, "{s},{p}");
    }
    write_atomic(&out.join("plate.csv"), text.as_bytes())?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `segmentation.json` to `nor.csv` and `boundaries.csv`.
    Segmentation,
    /// Configured filter to `filter_response.csv`.
    Filter,
    /// Trace file to `subcarrier_variance.csv`.
    Subcarriers,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segmentation" | "nor" => Ok(PlotKind::Segmentation),
            "filter" => Ok(PlotKind::Filter),
            "subcarriers" => Ok(PlotKind::Subcarriers),
            other => Err(Error::invalid("plot kind", format!("unknown artifact kind {other:?}"))),
        }
    }
}

pub const FILTER_PLOT_POINTS: usize = 200;

/// Plot-ready tables; returns the files written.
pub fn cmd_plotdata(cfg: &PipelineConfig, kind: PlotKind, input: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>> {
    let need = |what: &str| input.ok_or_else(|| Error::invalid("input", format!("{what} plot needs an input artifact")));
    match kind {
        PlotKind::Segmentation => {
            let seg: Segmentation = read_json(need("segmentation")?)?;
            let fs = f64::from(seg.fs);
            let mut nor = String::from("# t,nor1,nor2\n");
            for (i, (a, b)) in seg.nor1.iter().zip(&seg.nor2).enumerate() {
                let _ = writeln!(nor, "{},{a},{b}", i as f64 / fs);
            }
            let mut bounds = String::from("# start_idx,end_idx,start_t,end_t,truncated\n");
            for s in &seg.segments {
                let _ = writeln!(
                    bounds,
                    "{},{},{},{},{}",
                    s.start_idx,
                    s.end_idx,
                    s.start_idx as f64 / fs,
                    s.end_idx as f64 / fs,
                    s.truncated
                );
            }
            let (a, b) = (out.join("nor.csv"), out.join("boundaries.csv"));
            write_atomic(&a, nor.as_bytes())?;
            write_atomic(&b, bounds.as_bytes())?;
            Ok(vec![a, b])
        }
        PlotKind::Filter => {
            let rows = magnitude_response_table(&cfg.filter, cfg.scene.fs, FILTER_PLOT_POINTS)?;
            let mut text = String::from("# f_hz,analog,digital\n");
            for [f, a, d] in rows {
                let _ = writeln!(text, "{f},{a},{d}");
            }
            let p = out.join("filter_response.csv");
            write_atomic(&p, text.as_bytes())?;
            Ok(vec![p])
        }
        PlotKind::Subcarriers => {
            let trace = read_trace(need("subcarriers")?)?;
            let mut text = String::from("# subcarrier,variance\n");
            for (s, v) in subcarrier_variances(&trace).iter().enumerate() {
                let _ = writeln!(text, "{s},{v}");
            }
            let p = out.join("subcarrier_variance.csv");
            write_atomic(&p, text.as_bytes())?;
            Ok(vec![p])
        }
    }
}

/// Optional inputs of a pipeline run on a recorded trace.
#[derive(Debug, Clone, Default)]
pub struct TraceInputs<'a> {
    pub trace: Option<&'a Path>,
    /// Gesture model; trained on the simulated dataset when absent.
    pub model: Option<&'a Path>,
    /// Behavior models; the behavior stage is skipped when absent.
    pub behavior_models: Option<&'a Path>,
}

/// End to end run. Without a trace, every stage runs on simulated data and
/// is scored against the simulator. Writes `report.json` and
/// `timings.json` plus the stage artifacts.
pub fn cmd_pipeline(cfg: &PipelineConfig, inputs: &TraceInputs<'_>, out: &Path) -> Result<(RunReport, StageTimings)> {
    cfg.validate()?;
    let mut timings = StageTimings::default();
    let mut report = RunReport::new(cfg);
    match inputs.trace {
        Some(path) => report.trace = Some(pipeline_on_trace(cfg, path, inputs, out, &mut timings)?),
        None => synthetic_pipeline(cfg, out, &mut report, &mut timings)?,
    }
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timings.json"), &timings)?;
    Ok((report, timings))
}

fn synthetic_pipeline(cfg: &PipelineConfig, out: &Path, report: &mut RunReport, timings: &mut StageTimings) -> Result<()> {
    report.segmentation = Some(timings.run("segmentation", || {
        let mut total = SegmentationScore::default();
        for i in 0..cfg.corpus.traces as u64 {
            let lt = random_trace(&cfg.scene, &cfg.corpus, item_seed(cfg.corpus.seed, i))?;
            let p = process_trace(&lt.trace, &cfg.filter, &cfg.segmenter)?;
            total.absorb(&score_segments(&lt.trace.annotations, &p.segmentation.segments, lt.trace.fs, cfg.check.tolerance));
        }
        Ok(SegmentationMetrics::from_score(cfg.corpus.traces, &total))
    })?);
    report.burst = Some(timings.run("burst", || {
        let lt = keystroke_burst(&cfg.scene, cfg.check.burst_keystrokes, cfg.check.burst_gap, cfg.check.burst_seed)?;
        write_trace(&out.join("burst.csv"), &lt.trace)?;
        let p = process_trace(&lt.trace, &cfg.filter, &cfg.segmenter)?;
        Ok(BurstMetrics { keystrokes: cfg.check.burst_keystrokes, segments: p.segmentation.segments.len() })
    })?);
    let (gesture, emission) = timings.run("gesture", || {
        let data = synthetic_dataset(cfg)?;
        let rows: Vec<DatasetRow> = data.iter().copied().map(DatasetRow::from).collect();
        write_atomic(&out.join("features.csv"), format_dataset(&rows).as_bytes())?;
        let other = match cfg.classifier.kind {
            ClassifierKind::Knn { .. } => ClassifierKind::GaussianNb,
            ClassifierKind::GaussianNb => ClassifierKind::Knn { k: 3 },
        };
        let mut cvs = Vec::new();
        for kind in [cfg.classifier.kind, other] {
            cvs.push(cross_validate(kind, &data, cfg.classifier.folds, cfg.classifier.seed)?);
        }
        write_json(&out.join("cv.json"), &cvs[0])?;
        write_json(&out.join("model.json"), &fit(cfg.classifier.kind, &data)?)?;
        let emission = build_emission(&cvs[0].confusion)?;
        let typing = data.iter().filter(|e| e.label == GestureKind::Keystroke).count();
        Ok((
            GestureMetrics { segments: data.len(), typing, mouse: data.len() - typing, cross_validation: cvs },
            emission,
        ))
    })?;
    report.gesture = Some(gesture);
    report.behavior = Some(timings.run("behavior", || {
        let (models, confusion) = crate::synth::run_behavior_study(emission, &cfg.behavior, &cfg.baum_welch)?;
        write_json(&out.join("behavior_models.json"), &models)?;
        write_atomic(&out.join("behavior_confusion.txt"), confusion.table().as_bytes())?;
        Ok(BehaviorMetrics { emission, models, macro_accuracy: confusion.macro_accuracy(), confusion })
    })?);
    Ok(())
}

fn pipeline_on_trace(
    cfg: &PipelineConfig,
    path: &Path,
    inputs: &TraceInputs<'_>,
    out: &Path,
    timings: &mut StageTimings,
) -> Result<TraceMetrics> {
    let trace = timings.run("load", || read_trace(path))?;
    let p = timings.run("segmentation", || {
        let p = process_trace(&trace, &cfg.filter, &cfg.segmenter)?;
        write_atomic(&out.join("selected.csv"), format_series(&p.selected).as_bytes())?;
        write_atomic(&out.join("filtered.csv"), format_series(&p.filtered).as_bytes())?;
        write_json(&out.join("segmentation.json"), &p.segmentation)?;
        write_atomic(&out.join("segments.csv"), segments_table(&p.segmentation).as_bytes())?;
        Ok(p)
    })?;
    let segs = &p.segmentation.segments;
    let score = (!trace.annotations.is_empty()).then(|| {
        SegmentationMetrics::from_score(1, &score_segments(&trace.annotations, segs, trace.fs, cfg.check.tolerance))
    });
    let mut metrics = TraceMetrics {
        source_subcarrier: p.selected.source_subcarrier,
        segments: segs.iter().map(|s| (s.start_idx, s.end_idx, s.truncated)).collect(),
        score,
        predictions: Vec::new(),
        gesture_accuracy: None,
        behavior: None,
    };
    if segs.is_empty() {
        return Ok(metrics);
    }
    let rows = timings.run("features", || {
        let rows = segs
            .iter()
            .map(|seg| Ok(DatasetRow { features: extract_features(seg)?, label: label_for(seg, &trace.annotations) }))
            .collect::<Result<Vec<_>>>()?;
        write_atomic(&out.join("features.csv"), format_dataset(&rows).as_bytes())?;
        Ok(rows)
    })?;
    metrics.predictions = timings.run("classify", || {
        let model: ClassifierModel = match inputs.model {
            Some(m) => read_json(m)?,
            None => fit(cfg.classifier.kind, &synthetic_dataset(cfg)?)?,
        };
        Ok(rows.iter().map(|r| predict(&model, &r.features)).collect::<Vec<_>>())
    })?;
    let judged: Vec<bool> =
        rows.iter().zip(&metrics.predictions).filter_map(|(r, p)| r.label.map(|l| l == *p)).collect();
    if !judged.is_empty() {
        metrics.gesture_accuracy = Some(judged.iter().filter(|x| **x).count() as f64 / judged.len() as f64);
    }
    let seq = GestureSequence::new(metrics.predictions.clone())?;
    write_atomic(&out.join("predictions.txt"), format_sequence(&seq).as_bytes())?;
    if let Some(models_path) = inputs.behavior_models {
        metrics.behavior = Some(timings.run("behavior", || {
            let models: Vec<BehaviorHmm> = read_json(models_path)?;
            classify_behavior(&models, &seq, cfg.behavior.method, cfg.behavior.seed)
        })?);
    }
    Ok(metrics)
}
