//! Text file formats and atomic file writes.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! write/read cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::channel::{Annotation, CsiTrace, GestureKind, Hand, Script, ScriptedGesture, SpeedProfile};
use crate::classify::{FeatureVector, LabeledExample};
use crate::error::{Error, Result};
use crate::hmm::GestureSequence;
use crate::preprocess::AmplitudeSeries;

/// Writes `contents` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

fn shown(path: &Path) -> String {
    path.display().to_string()
}

/// Content lines with their 1-based line numbers; blank lines and `#`
/// comments other than the header are skipped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// `key=value` pairs of a `# key=value ...` header line.
fn header_fields<'a>(path: &Path, text: &'a str) -> Result<Vec<(&'a str, &'a str)>> {
    let first = text.lines().next().unwrap_or("").trim();
    let body = first
        .strip_prefix('#')
        .ok_or_else(|| Error::parse(shown(path), 1, "header", "expected a `# key=value` header"))?;
    body.split_whitespace()
        .map(|kv| kv.split_once('=').ok_or_else(|| Error::parse(shown(path), 1, "header", format!("bad field {kv:?}"))))
        .collect()
}

fn header_value<T: std::str::FromStr>(path: &Path, fields: &[(&str, &str)], key: &str) -> Result<T> {
    let raw = fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::parse(shown(path), 1, key, "missing from header"))?;
    raw.parse().map_err(|_| Error::parse(shown(path), 1, key, format!("cannot parse {raw:?}")))
}

fn number(path: &Path, line: usize, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::parse(shown(path), line, field, format!("not a number: {raw:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(shown(path), line, field, "not finite"))
    }
}

fn index(path: &Path, line: usize, field: &str, raw: &str) -> Result<usize> {
    raw.trim().parse().map_err(|_| Error::parse(shown(path), line, field, format!("not an index: {raw:?}")))
}

fn label(path: &Path, line: usize, field: &str, raw: &str) -> Result<GestureKind> {
    raw.parse().map_err(|e: String| Error::parse(shown(path), line, field, e))
}

fn split(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

/// Sidecar holding the annotations of a trace file: same stem, `.ann`.
pub fn annotation_path(trace: &Path) -> PathBuf {
    trace.with_extension("ann")
}

pub fn format_trace(trace: &CsiTrace) -> String {
    let s = trace.subcarriers();
    let mut out = String::with_capacity(trace.len() * s * 40);
    let _ = writeln!(out, "# fs={} subcarriers={s}", trace.fs);
    let fs = f64::from(trace.fs);
    for i in 0..trace.len() {
        let _ = write!(out, "{}", i as f64 / fs);
        for row in &trace.samples {
            let h = row[i];
            let _ = write!(out, ",{},{}", h.re, h.im);
        }
        out.push('\n');
    }
    out
}

pub fn parse_trace(path: &Path, text: &str) -> Result<CsiTrace> {
    let fields = header_fields(path, text)?;
    let fs: u32 = header_value(path, &fields, "fs")?;
    let count: usize = header_value(path, &fields, "subcarriers")?;
    if fs == 0 || count == 0 {
        return Err(Error::parse(shown(path), 1, "header", "fs and subcarriers must be positive"));
    }
    let mut samples = vec![Vec::new(); count];
    for (line, l) in data_lines(text) {
        let cols = split(l);
        if cols.len() != 1 + 2 * count {
            return Err(Error::parse(
                shown(path),
                line,
                "row",
                format!("expected {} columns, found {}", 1 + 2 * count, cols.len()),
            ));
        }
        number(path, line, "t", cols[0])?;
        for (s, row) in samples.iter_mut().enumerate() {
            let re = number(path, line, &format!("re_{}", s + 1), cols[1 + 2 * s])?;
            let im = number(path, line, &format!("im_{}", s + 1), cols[2 + 2 * s])?;
            row.push(Complex64::new(re, im));
        }
    }
    if samples[0].is_empty() {
        return Err(Error::parse(shown(path), 1, "rows", "trace has no samples"));
    }
    CsiTrace::new(fs, samples)
}

pub fn format_annotations(annotations: &[Annotation]) -> String {
    annotations.iter().map(|a| format!("{},{},{}\n", a.start_idx, a.end_idx, a.label)).collect()
}

pub fn parse_annotations(path: &Path, text: &str) -> Result<Vec<Annotation>> {
    data_lines(text)
        .map(|(line, l)| {
            let cols = split(l);
            if cols.len() != 3 {
                return Err(Error::parse(shown(path), line, "row", "expected start_idx,end_idx,label"));
            }
            Ok(Annotation {
                start_idx: index(path, line, "start_idx", cols[0])?,
                end_idx: index(path, line, "end_idx", cols[1])?,
                label: label(path, line, "label", cols[2])?,
            })
        })
        .collect()
}

/// Writes a trace and, when it has any, its annotation sidecar.
pub fn write_trace(path: &Path, trace: &CsiTrace) -> Result<()> {
    write_atomic(path, format_trace(trace).as_bytes())?;
    write_atomic(&annotation_path(path), format_annotations(&trace.annotations).as_bytes())
}

/// Reads a trace, attaching annotations when the sidecar exists.
pub fn read_trace(path: &Path) -> Result<CsiTrace> {
    let trace = parse_trace(path, &read_text(path)?)?;
    let ann = annotation_path(path);
    if ann.exists() {
        let annotations = parse_annotations(&ann, &read_text(&ann)?)?;
        trace.with_annotations(annotations)
    } else {
        Ok(trace)
    }
}

pub fn format_series(series: &AmplitudeSeries) -> String {
    let mut out = format!("# fs={} subcarrier={}\n", series.fs, series.source_subcarrier);
    let fs = f64::from(series.fs);
    for (i, v) in series.values.iter().enumerate() {
        let _ = writeln!(out, "{},{v}", i as f64 / fs);
    }
    out
}

pub fn parse_series(path: &Path, text: &str) -> Result<AmplitudeSeries> {
    let fields = header_fields(path, text)?;
    let fs: u32 = header_value(path, &fields, "fs")?;
    let source_subcarrier: usize = header_value(path, &fields, "subcarrier")?;
    if fs == 0 {
        return Err(Error::parse(shown(path), 1, "fs", "must be positive"));
    }
    let values = data_lines(text)
        .map(|(line, l)| {
            let cols = split(l);
            if cols.len() != 2 {
                return Err(Error::parse(shown(path), line, "row", "expected t,amplitude"));
            }
            number(path, line, "t", cols[0])?;
            number(path, line, "amplitude", cols[1])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AmplitudeSeries { fs, values, source_subcarrier })
}

/// A dataset row; unlabeled rows come from traces without annotations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRow {
    pub features: FeatureVector,
    pub label: Option<GestureKind>,
}

impl From<LabeledExample> for DatasetRow {
    fn from(e: LabeledExample) -> Self {
        DatasetRow { features: e.features, label: Some(e.label) }
    }
}

pub fn format_dataset(rows: &[DatasetRow]) -> String {
    let mut out = String::from("# variance,slope_ratio,duration,label\n");
    for r in rows {
        let f = r.features;
        let l = r.label.map_or("-", GestureKind::as_str);
        let _ = writeln!(out, "{},{},{},{l}", f.variance, f.slope_ratio, f.duration);
    }
    out
}

pub fn parse_dataset(path: &Path, text: &str) -> Result<Vec<DatasetRow>> {
    data_lines(text)
        .map(|(line, l)| {
            let cols = split(l);
            if cols.len() != 4 {
                return Err(Error::parse(shown(path), line, "row", "expected variance,slope_ratio,duration,label"));
            }
            let features = FeatureVector {
                variance: number(path, line, "variance", cols[0])?,
                slope_ratio: number(path, line, "slope_ratio", cols[1])?,
                duration: number(path, line, "duration", cols[2])?,
            };
            features.validate().map_err(|e| Error::parse(shown(path), line, "features", e.to_string()))?;
            let label = if cols[3] == "-" { None } else { Some(label(path, line, "label", cols[3])?) };
            Ok(DatasetRow { features, label })
        })
        .collect()
}

/// Labeled rows only, rejecting a dataset with unlabeled entries.
pub fn labeled(path: &Path, rows: &[DatasetRow]) -> Result<Vec<LabeledExample>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            r.label
                .map(|label| LabeledExample { features: r.features, label })
                .ok_or_else(|| Error::parse(shown(path), i + 2, "label", "unlabeled row in a training set"))
        })
        .collect()
}

pub fn format_sequence(seq: &GestureSequence) -> String {
    seq.observations.iter().map(|o| format!("{o}\n")).collect()
}

pub fn parse_sequence(path: &Path, text: &str) -> Result<GestureSequence> {
    let obs = data_lines(text).map(|(line, l)| label(path, line, "symbol", l)).collect::<Result<Vec<_>>>()?;
    GestureSequence::new(obs).map_err(|_| Error::parse(shown(path), 1, "sequence", "no symbols"))
}

/// Gesture script: a `duration <seconds>` line, then one gesture per line.
///
/// ```text
/// duration 12
/// keystroke 1.0 travel=0.02 duration=0.7
/// mouse 4.0 travel=0.03 duration=0.3 heading=-1
/// ```
///
/// Keystroke options default to a 2 cm, 0.7 s sinusoidal stroke; mouse moves
/// need `travel` and `duration` and default to heading +1 at constant speed.
pub fn parse_script(path: &Path, text: &str, keyboard: Hand, mouse: Hand) -> Result<Script> {
    let mut duration = None;
    let mut gestures = Vec::new();
    for (line, l) in data_lines(text) {
        let mut words = l.split_whitespace();
        let head = words.next().unwrap_or_default().to_ascii_lowercase();
        if head == "duration" {
            let raw = words.next().ok_or_else(|| Error::parse(shown(path), line, "duration", "missing value"))?;
            duration = Some(number(path, line, "duration", raw)?);
            continue;
        }
        let kind: GestureKind = match head.as_str() {
            "keystroke" | "typing" => GestureKind::Keystroke,
            "mouse" => GestureKind::MouseMove,
            _ => return Err(Error::parse(shown(path), line, "kind", format!("unknown gesture {head:?}"))),
        };
        let raw_start = words.next().ok_or_else(|| Error::parse(shown(path), line, "start", "missing start time"))?;
        let start = number(path, line, "start", raw_start)?;
        let mut g = match kind {
            GestureKind::Keystroke => ScriptedGesture::keystroke(start),
            GestureKind::MouseMove => ScriptedGesture::mouse(start, f64::NAN, f64::NAN, 1.0),
        };
        for opt in words {
            let (k, v) = opt
                .split_once('=')
                .ok_or_else(|| Error::parse(shown(path), line, opt, "expected key=value"))?;
            match k {
                "travel" => g.travel = number(path, line, k, v)?,
                "duration" => g.duration = number(path, line, k, v)?,
                "heading" => g.heading = number(path, line, k, v)?,
                "profile" => g.profile = v.parse::<SpeedProfile>().map_err(|e| Error::parse(shown(path), line, k, e))?,
                _ => return Err(Error::parse(shown(path), line, k, "unknown option")),
            }
        }
        for (field, v) in [("travel", g.travel), ("duration", g.duration)] {
            if !(v > 0.0) {
                return Err(Error::parse(shown(path), line, field, "required and must be positive"));
            }
        }
        if g.heading != 1.0 && g.heading != -1.0 {
            return Err(Error::parse(shown(path), line, "heading", "must be 1 or -1"));
        }
        gestures.push(g);
    }
    let duration = duration.ok_or_else(|| Error::parse(shown(path), 1, "duration", "script has no `duration` line"))?;
    let mut script = Script::new(duration, keyboard, mouse);
    script.gestures = gestures;
    Ok(script)
}

pub fn format_script(script: &Script) -> String {
    let mut out = format!("duration {}\n", script.duration);
    for g in &script.gestures {
        let kind = match g.kind {
            GestureKind::Keystroke => "keystroke",
            GestureKind::MouseMove => "mouse",
        };
        let profile = match g.profile {
            SpeedProfile::Constant => "constant",
            SpeedProfile::Sinusoidal => "sinusoidal",
        };
        let _ = writeln!(
            out,
            "{kind} {} travel={} duration={} heading={} profile={profile}",
            g.start, g.travel, g.duration, g.heading
        );
    }
    out
}
