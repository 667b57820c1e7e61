//! Seeded synthetic desk scenes and labeled corpora.
//!
//! The simulator's annotations are the ground truth that segmentation,
//! classification and behavior recognition are scored against.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    simulate_trace, Annotation, ChannelModel, CsiTrace, FresnelGeometry, GestureKind, Hand, Script,
    ScriptedGesture, SpeedProfile, SubcarrierPlan, Vec3,
};
use crate::error::{Error, Result};
use crate::hmm::{
    classify_behavior, fit_behavior_models, sample_behavior_sequence, Behavior, BehaviorConfusion, BehaviorHmm,
    BehaviorProfile, BaumWelchOptions, ClassifyMethod, GestureSequence, Matrix2,
};
use crate::classify::{extract_features, LabeledExample};
use crate::preprocess::{butterworth_lowpass, select_subcarrier, AmplitudeSeries, FilterSpec};
use crate::segmentation::{segment_detailed, GestureSegment, SegmenterParams, Segmentation};

/// Physical layout of the simulated desk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeskScene {
    /// Tx–Rx spacing, meters.
    pub spacing: f64,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
    /// Magnitude of the static response.
    pub static_amplitude: f64,
    pub keyboard: Hand,
    pub mouse: Hand,
    /// Per-component noise std as a fraction of `static_amplitude`.
    pub noise_fraction: f64,
    pub fs: u32,
    pub subcarriers: SubcarrierPlan,
}

impl Default for DeskScene {
    fn default() -> Self {
        DeskScene {
            spacing: 1.0,
            wavelength: 0.125,
            static_amplitude: 11.0,
            keyboard: Hand {
                home: Vec3::new(0.5, 0.0, -0.605),
                reflectivity: 5.5,
            },
            mouse: Hand {
                home: Vec3::new(0.78, 0.0, -0.62),
                reflectivity: 6.5,
            },
            noise_fraction: 0.02,
            fs: 1000,
            subcarriers: SubcarrierPlan::default(),
        }
    }
}

impl DeskScene {
    pub fn geometry(&self) -> Result<FresnelGeometry> {
        FresnelGeometry::horizontal(self.spacing, self.wavelength)
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_fraction * self.static_amplitude
    }

    pub fn model(&self, seed: u64) -> Result<ChannelModel> {
        Ok(ChannelModel::new(self.geometry()?, Complex64::new(self.static_amplitude, 0.0))
            .with_noise(self.noise_std(), seed))
    }

    pub fn empty_script(&self, duration: f64) -> Script {
        Script::new(duration, self.keyboard, self.mouse)
    }

    pub fn simulate(&self, script: &Script, seed: u64) -> Result<CsiTrace> {
        simulate_trace(&self.model(seed)?, script, self.fs, &self.subcarriers)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        if !(self.static_amplitude > 0.0 && self.static_amplitude.is_finite()) {
            return Err(Error::invalid("scene.static_amplitude", "must be positive"));
        }
        if !(self.noise_fraction >= 0.0 && self.noise_fraction.is_finite()) {
            return Err(Error::invalid("scene.noise_fraction", "must be >= 0"));
        }
        if self.fs == 0 {
            return Err(Error::invalid("scene.fs", "must be positive"));
        }
        for (name, depth) in [("scene.keyboard.home", -self.keyboard.home.z), ("scene.mouse.home", -self.mouse.home.z)] {
            if !(0.55..=0.70).contains(&depth) {
                return Err(Error::invalid(name, format!("depth {depth} m outside 0.55–0.70 m below the link")));
            }
        }
        self.subcarriers.validate()
    }
}

/// Random gesture variability used by the corpus generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GestureVariability {
    pub keystroke_travel: (f64, f64),
    pub keystroke_duration: (f64, f64),
    pub mouse_travel: (f64, f64),
    /// Mouse glide speed, m/s.
    pub mouse_speed: (f64, f64),
}

impl Default for GestureVariability {
    fn default() -> Self {
        GestureVariability {
            keystroke_travel: (0.015, 0.025),
            keystroke_duration: (0.65, 0.75),
            mouse_travel: (0.02, 0.05),
            mouse_speed: (0.08, 0.16),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Tracks the mouse offset so alternate glides stay near the home position.
#[derive(Debug, Default)]
struct MouseState {
    offset: f64,
}

fn random_gesture(
    rng: &mut ChaCha8Rng,
    kind: GestureKind,
    start: f64,
    var: &GestureVariability,
    mouse: &mut MouseState,
) -> ScriptedGesture {
    match kind {
        GestureKind::Keystroke => ScriptedGesture {
            start,
            kind,
            travel: uniform(rng, var.keystroke_travel),
            duration: uniform(rng, var.keystroke_duration),
            profile: SpeedProfile::Sinusoidal,
            heading: 1.0,
        },
        GestureKind::MouseMove => {
            let travel = uniform(rng, var.mouse_travel);
            let speed = uniform(rng, var.mouse_speed);
            let heading = if mouse.offset > 0.0 { -1.0 } else { 1.0 };
            mouse.offset += heading * travel;
            ScriptedGesture::mouse(start, travel, travel / speed, heading)
        }
    }
}

/// Layout of a segmentation corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub traces: usize,
    pub min_gestures: usize,
    pub max_gestures: usize,
    /// Quiet time between consecutive gestures, seconds.
    pub gap: (f64, f64),
    /// Quiet time before the first and after the last gesture, seconds.
    pub margin: f64,
    /// Probability that a gesture is a keystroke.
    pub keystroke_fraction: f64,
    pub variability: GestureVariability,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            traces: 100,
            min_gestures: 1,
            max_gestures: 5,
            gap: (1.5, 2.5),
            margin: 1.0,
            keystroke_fraction: 0.5,
            variability: GestureVariability::default(),
            seed: 1,
        }
    }
}

/// A simulated trace plus the seed it was generated from.
#[derive(Debug, Clone)]
pub struct LabeledTrace {
    pub seed: u64,
    pub script: Script,
    pub trace: CsiTrace,
}

/// Derives the independent per-item seed `index` of a corpus.
pub fn item_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        ^ 0x94D0_49BB_1331_11EB
}

/// Script with the given gesture kinds separated by random gaps.
pub fn script_for(
    scene: &DeskScene,
    kinds: &[GestureKind],
    gap: (f64, f64),
    margin: f64,
    var: &GestureVariability,
    rng: &mut ChaCha8Rng,
) -> Script {
    let mut t = margin;
    let mut mouse = MouseState::default();
    let mut gestures = Vec::with_capacity(kinds.len());
    for (i, kind) in kinds.iter().enumerate() {
        if i > 0 {
            t += uniform(rng, gap);
        }
        let g = random_gesture(rng, *kind, t, var, &mut mouse);
        t = g.end();
        gestures.push(g);
    }
    let mut script = scene.empty_script(t + margin);
    script.gestures = gestures;
    script
}

/// Generates one random labeled trace.
pub fn random_trace(scene: &DeskScene, spec: &CorpusSpec, seed: u64) -> Result<LabeledTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(spec.min_gestures..=spec.max_gestures);
    let kinds: Vec<GestureKind> = (0..n)
        .map(|_| {
            if rng.random_bool(spec.keystroke_fraction.clamp(0.0, 1.0)) {
                GestureKind::Keystroke
            } else {
                GestureKind::MouseMove
            }
        })
        .collect();
    let script = script_for(scene, &kinds, spec.gap, spec.margin, &spec.variability, &mut rng);
    let trace = scene.simulate(&script, seed)?;
    Ok(LabeledTrace { seed, script, trace })
}

/// Generates the whole corpus, one independent seed per trace.
pub fn segmentation_corpus(scene: &DeskScene, spec: &CorpusSpec) -> Result<Vec<LabeledTrace>> {
    if spec.min_gestures == 0 || spec.max_gestures < spec.min_gestures {
        return Err(Error::invalid("corpus.gestures", "need 1 <= min <= max"));
    }
    (0..spec.traces as u64)
        .map(|i| random_trace(scene, spec, item_seed(spec.seed, i)))
        .collect()
}

/// Consecutive keystrokes, like a short typing burst.
pub fn keystroke_burst(scene: &DeskScene, count: usize, gap: (f64, f64), seed: u64) -> Result<LabeledTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = vec![GestureKind::Keystroke; count];
    let script = script_for(scene, &kinds, gap, 1.0, &GestureVariability::default(), &mut rng);
    let trace = scene.simulate(&script, seed)?;
    Ok(LabeledTrace { seed, script, trace })
}

/// Front end shared by every experiment: subcarrier selection, low-pass
/// filtering and segmentation.
#[derive(Debug, Clone)]
pub struct Processed {
    pub selected: AmplitudeSeries,
    pub filtered: AmplitudeSeries,
    pub segmentation: Segmentation,
}

pub fn process_trace(trace: &CsiTrace, filter: &FilterSpec, segmenter: &SegmenterParams) -> Result<Processed> {
    let selected = select_subcarrier(trace)?;
    let filtered = butterworth_lowpass(&selected, filter)?;
    let segmentation = segment_detailed(&filtered, segmenter)?;
    Ok(Processed { selected, filtered, segmentation })
}

/// Detected segments labeled by their overlap with the ground truth, drawn
/// from successive corpus traces until `count` are collected.
pub fn labeled_segments(
    scene: &DeskScene,
    spec: &CorpusSpec,
    filter: &FilterSpec,
    segmenter: &SegmenterParams,
    count: usize,
) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let lt = random_trace(scene, spec, item_seed(spec.seed, i))?;
        let p = process_trace(&lt.trace, filter, segmenter)?;
        for seg in &p.segmentation.segments {
            if out.len() == count {
                break;
            }
            if let (Some(label), Ok(features)) = (label_for(seg, &lt.trace.annotations), extract_features(seg)) {
                out.push(LabeledExample { features, label });
            }
        }
        i += 1;
        if i > 100 * count as u64 + 100 {
            return Err(Error::Degenerate("segmentation keeps producing no labeled segments".into()));
        }
    }
    Ok(out)
}

/// Sizes of a simulated behavior-recognition study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorStudy {
    pub train_per_behavior: usize,
    pub test_per_behavior: usize,
    pub length: usize,
    pub method: ClassifyMethod,
    pub seed: u64,
}

impl Default for BehaviorStudy {
    fn default() -> Self {
        BehaviorStudy { train_per_behavior: 50, test_per_behavior: 100, length: 50, method: ClassifyMethod::Likelihood, seed: 1 }
    }
}

/// Sequences of one behavior; `offset` keeps training and test seeds apart.
pub fn behavior_sequences(
    behavior: Behavior,
    b: Matrix2,
    count: usize,
    length: usize,
    seed: u64,
    offset: u64,
) -> Result<Vec<GestureSequence>> {
    let profile = BehaviorProfile::standard(behavior);
    (0..count as u64)
        .map(|i| sample_behavior_sequence(&profile, b, length, item_seed(seed ^ offset, i * 3 + behavior.index() as u64)))
        .collect()
}

/// Trains one model per behavior on simulated sequences, then classifies
/// fresh sequences.
pub fn run_behavior_study(
    b: Matrix2,
    study: &BehaviorStudy,
    options: &BaumWelchOptions,
) -> Result<(Vec<BehaviorHmm>, BehaviorConfusion)> {
    let training = Behavior::ALL
        .iter()
        .map(|beh| Ok((*beh, behavior_sequences(*beh, b, study.train_per_behavior, study.length, study.seed, 0)?)))
        .collect::<Result<Vec<_>>>()?;
    let models = fit_behavior_models(&training, b, options)?;
    let confusion = evaluate_behavior_models(&models, &behavior_test_set(b, study)?, study.method, study.seed)?;
    Ok((models, confusion))
}

/// Fresh labeled sequences for testing, disjoint in seed from training.
pub fn behavior_test_set(b: Matrix2, study: &BehaviorStudy) -> Result<Vec<(Behavior, GestureSequence)>> {
    let mut out = Vec::new();
    for beh in Behavior::ALL {
        for s in behavior_sequences(beh, b, study.test_per_behavior, study.length, study.seed, 0x7E57)? {
            out.push((beh, s));
        }
    }
    Ok(out)
}

pub fn evaluate_behavior_models(
    models: &[BehaviorHmm],
    tests: &[(Behavior, GestureSequence)],
    method: ClassifyMethod,
    seed: u64,
) -> Result<BehaviorConfusion> {
    let mut confusion = BehaviorConfusion::default();
    for (i, (beh, s)) in tests.iter().enumerate() {
        let d = classify_behavior(models, s, method, item_seed(seed, i as u64))?;
        confusion.record(*beh, &d);
    }
    Ok(confusion)
}

/// How detected segments line up with annotated gestures.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScore {
    pub annotated: usize,
    pub detected: usize,
    pub matched: usize,
    /// Absolute start and end errors of matched pairs, seconds.
    pub start_errors: Vec<f64>,
    pub end_errors: Vec<f64>,
}

impl SegmentationScore {
    pub fn recall(&self) -> f64 {
        if self.annotated == 0 {
            1.0
        } else {
            self.matched as f64 / self.annotated as f64
        }
    }

    pub fn precision(&self) -> f64 {
        if self.detected == 0 {
            1.0
        } else {
            self.matched as f64 / self.detected as f64
        }
    }

    pub fn max_boundary_error(&self) -> f64 {
        self.start_errors
            .iter()
            .chain(&self.end_errors)
            .fold(0.0, |m, e| m.max(*e))
    }

    pub fn mean_boundary_error(&self) -> f64 {
        let n = self.start_errors.len() + self.end_errors.len();
        if n == 0 {
            0.0
        } else {
            self.start_errors.iter().chain(&self.end_errors).sum::<f64>() / n as f64
        }
    }

    pub fn absorb(&mut self, other: &SegmentationScore) {
        self.annotated += other.annotated;
        self.detected += other.detected;
        self.matched += other.matched;
        self.start_errors.extend_from_slice(&other.start_errors);
        self.end_errors.extend_from_slice(&other.end_errors);
    }
}

/// One-to-one matching: a detection matches an annotation when both of its
/// boundaries are within `tolerance` seconds. Detections are taken in order.
pub fn score_segments(
    annotations: &[Annotation],
    segments: &[GestureSegment],
    fs: u32,
    tolerance: f64,
) -> SegmentationScore {
    let fs = f64::from(fs);
    let mut used = vec![false; annotations.len()];
    let mut score = SegmentationScore {
        annotated: annotations.len(),
        detected: segments.len(),
        ..Default::default()
    };
    for seg in segments {
        let best = annotations
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, a)| {
                let ds = (seg.start_idx as f64 - a.start_idx as f64).abs() / fs;
                let de = (seg.end_idx as f64 - a.end_idx as f64).abs() / fs;
                (k, ds, de)
            })
            .filter(|(_, ds, de)| *ds <= tolerance && *de <= tolerance)
            .min_by(|x, y| (x.1 + x.2).total_cmp(&(y.1 + y.2)));
        if let Some((k, ds, de)) = best {
            used[k] = true;
            score.matched += 1;
            score.start_errors.push(ds);
            score.end_errors.push(de);
        }
    }
    score
}

/// The annotation a segment overlaps most, if any.
pub fn label_for(segment: &GestureSegment, annotations: &[Annotation]) -> Option<GestureKind> {
    annotations
        .iter()
        .map(|a| {
            let lo = segment.start_idx.max(a.start_idx);
            let hi = segment.end_idx.min(a.end_idx);
            (hi.saturating_sub(lo) + usize::from(hi >= lo), a.label)
        })
        .filter(|(overlap, _)| *overlap > 0)
        .max_by_key(|(overlap, _)| *overlap)
        .map(|(_, label)| label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(s: usize, e: usize) -> Annotation {
        Annotation { start_idx: s, end_idx: e, label: GestureKind::Keystroke }
    }

    fn seg(s: usize, e: usize) -> GestureSegment {
        GestureSegment { start_idx: s, end_idx: e, waveform: vec![0.0; e - s + 1], fs: 1000, truncated: false }
    }

    #[test]
    fn scoring_counts_tolerant_matches() {
        let anns = [ann(1000, 1700), ann(4000, 4700)];
        let segs = [seg(1050, 1650), seg(3000, 3100), seg(4150, 4700)];
        let s = score_segments(&anns, &segs, 1000, 0.1);
        assert_eq!(s.matched, 1);
        assert_eq!(s.recall(), 0.5);
        assert!((s.precision() - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.max_boundary_error() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn corpus_is_deterministic() {
        let scene = DeskScene { subcarriers: SubcarrierPlan::single(), ..Default::default() };
        let spec = CorpusSpec { traces: 3, ..Default::default() };
        let a = segmentation_corpus(&scene, &spec).unwrap();
        let b = segmentation_corpus(&scene, &spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.trace, y.trace);
        }
        for t in &a {
            let n = t.trace.annotations.len();
            assert!((1..=5).contains(&n));
        }
    }

    #[test]
    fn labels_by_overlap() {
        let anns = [ann(100, 200), Annotation { start_idx: 300, end_idx: 500, label: GestureKind::MouseMove }];
        assert_eq!(label_for(&seg(280, 420), &anns), Some(GestureKind::MouseMove));
        assert_eq!(label_for(&seg(210, 290), &anns), None);
    }

    #[test]
    fn scene_depth_checked() {
        let mut scene = DeskScene::default();
        assert!(scene.validate().is_ok());
        scene.keyboard.home.z = -0.3;
        assert!(scene.validate().is_err());
    }
}
