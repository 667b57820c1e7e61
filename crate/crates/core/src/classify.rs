//! Per-segment features and the typing / mouse classifiers.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::GestureKind;
use crate::error::{Error, Result};
use crate::preprocess::population_variance;
use crate::segmentation::GestureSegment;

/// Value used when exactly one half of a waveform is flat, and the upper
/// clamp for every other ratio.
pub const SLOPE_RATIO_CAP: f64 = 100.0;

/// The three per-segment features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub variance: f64,
    pub slope_ratio: f64,
    /// Seconds.
    pub duration: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.variance, self.slope_ratio, self.duration]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(Error::invalid("variance", "must be finite and >= 0"));
        }
        if !(self.slope_ratio >= 1.0 && self.slope_ratio.is_finite()) {
            return Err(Error::invalid("slope_ratio", "must be finite and >= 1"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("duration", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: GestureKind,
}

/// Max-to-min slope of one half, using the first occurrence of each extremum.
fn half_slope(half: &[f64], fs: f64) -> f64 {
    let mut imax = 0;
    let mut imin = 0;
    for (i, v) in half.iter().enumerate() {
        if *v > half[imax] {
            imax = i;
        }
        if *v < half[imin] {
            imin = i;
        }
    }
    if imax == imin {
        return 0.0;
    }
    (half[imax] - half[imin]) / ((imax as f64 - imin as f64) / fs)
}

/// Symmetry of the two slopes; 1 for mirror images.
pub fn slope_ratio(waveform: &[f64], fs: u32) -> f64 {
    let split = waveform.len().div_ceil(2);
    let fs = f64::from(fs);
    let s1 = half_slope(&waveform[..split], fs).abs();
    let s2 = half_slope(&waveform[split..], fs).abs();
    match (s1 == 0.0, s2 == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => SLOPE_RATIO_CAP,
        (false, false) => (s1 / s2).max(s2 / s1).min(SLOPE_RATIO_CAP),
    }
}

pub fn extract_features(segment: &GestureSegment) -> Result<FeatureVector> {
    features_of(&segment.waveform, segment.fs)
}

pub fn features_of(waveform: &[f64], fs: u32) -> Result<FeatureVector> {
    if waveform.len() < 4 {
        return Err(Error::invalid("waveform", format!("need at least 4 samples, got {}", waveform.len())));
    }
    if fs == 0 {
        return Err(Error::invalid("fs", "must be positive"));
    }
    if waveform.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("waveform", "non-finite sample"));
    }
    Ok(FeatureVector {
        variance: population_variance(waveform),
        slope_ratio: slope_ratio(waveform, fs),
        duration: waveform.len() as f64 / f64::from(fs),
    })
}

/// Which classifier to fit. Written as `knn:<k>` or `nb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ClassifierKind {
    Knn { k: usize },
    GaussianNb,
}

impl Default for ClassifierKind {
    fn default() -> Self {
        ClassifierKind::Knn { k: 3 }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierKind::Knn { k } => write!(f, "knn:{k}"),
            ClassifierKind::GaussianNb => f.write_str("nb"),
        }
    }
}

impl From<ClassifierKind> for String {
    fn from(k: ClassifierKind) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for ClassifierKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;
    /// `knn`, `knn:<k>`, `nb` or `gaussian_nb`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "knn" => Ok(ClassifierKind::Knn { k: 3 }),
            "nb" | "gaussian_nb" | "gaussiannb" => Ok(ClassifierKind::GaussianNb),
            _ => match s.strip_prefix("knn:") {
                Some(k) => k
                    .parse()
                    .ok()
                    .filter(|k| *k > 0)
                    .map(|k| ClassifierKind::Knn { k })
                    .ok_or_else(|| Error::invalid("classifier", format!("bad neighbor count in {s:?}"))),
                None => Err(Error::invalid("classifier", format!("unknown classifier {s:?}"))),
            },
        }
    }
}

/// Per-feature mean and std of a training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Standardizer {
    pub fn fit(rows: &[[f64; 3]]) -> Standardizer {
        let n = rows.len() as f64;
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for j in 0..3 {
            mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|j| (x[j] - self.mean[j]) / self.std[j])
    }
}

pub const NB_VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClass {
    pub label: GestureKind,
    pub prior: f64,
    pub mean: [f64; 3],
    pub variance: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParams {
    Knn { k: usize, points: Vec<([f64; 3], GestureKind)> },
    GaussianNb { classes: Vec<GaussianClass> },
}

/// A fitted classifier together with the standardization of its training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub standardizer: Standardizer,
    pub params: FittedParams,
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        match &self.params {
            FittedParams::Knn { k, .. } => ClassifierKind::Knn { k: *k },
            FittedParams::GaussianNb { .. } => ClassifierKind::GaussianNb,
        }
    }
}

pub fn fit(kind: ClassifierKind, training: &[LabeledExample]) -> Result<ClassifierModel> {
    let mut present = [false; 2];
    for ex in training {
        ex.features.validate()?;
        present[ex.label.index()] = true;
    }
    if !present.iter().all(|p| *p) {
        return Err(Error::invalid("training set", "both gesture classes are required"));
    }
    let raw: Vec<[f64; 3]> = training.iter().map(|e| e.features.as_array()).collect();
    let standardizer = Standardizer::fit(&raw);
    let z: Vec<[f64; 3]> = raw.iter().map(|x| standardizer.apply(*x)).collect();
    let params = match kind {
        ClassifierKind::Knn { k } => {
            if k == 0 {
                return Err(Error::invalid("k", "must be >= 1"));
            }
            FittedParams::Knn { k, points: z.into_iter().zip(training.iter().map(|e| e.label)).collect() }
        }
        ClassifierKind::GaussianNb => {
            let n = training.len() as f64;
            let classes = GestureKind::ALL
                .iter()
                .map(|&label| {
                    let rows: Vec<&[f64; 3]> =
                        z.iter().zip(training).filter(|(_, e)| e.label == label).map(|(r, _)| r).collect();
                    let m = rows.len() as f64;
                    let mean = [0, 1, 2].map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m);
                    let variance = [0, 1, 2].map(|j| {
                        (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / m).max(NB_VARIANCE_FLOOR)
                    });
                    GaussianClass { label, prior: m / n, mean, variance }
                })
                .collect();
            FittedParams::GaussianNb { classes }
        }
    };
    Ok(ClassifierModel { standardizer, params })
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Log-posterior (up to a shared constant) of each class, in class order.
pub fn nb_log_posteriors(classes: &[GaussianClass], z: &[f64; 3]) -> Vec<(GestureKind, f64)> {
    classes
        .iter()
        .map(|c| {
            let ll: f64 = (0..3)
                .map(|j| {
                    let v = c.variance[j];
                    -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (z[j] - c.mean[j]).powi(2) / v)
                })
                .sum();
            (c.label, c.prior.ln() + ll)
        })
        .collect()
}

pub fn predict(model: &ClassifierModel, features: &FeatureVector) -> GestureKind {
    let z = model.standardizer.apply(features.as_array());
    match &model.params {
        FittedParams::Knn { k, points } => {
            let mut ranked: Vec<(f64, GestureKind)> = points.iter().map(|(p, l)| (distance(p, &z), *l)).collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut votes = [0usize; 2];
            let mut weight = [0.0f64; 2];
            for (d, l) in ranked.iter().take(*k) {
                votes[l.index()] += 1;
                weight[l.index()] += 1.0 / d.max(1e-12);
            }
            let winner = match votes[0].cmp(&votes[1]) {
                std::cmp::Ordering::Greater => 0,
                std::cmp::Ordering::Less => 1,
                std::cmp::Ordering::Equal => usize::from(weight[1] > weight[0]),
            };
            GestureKind::ALL[winner]
        }
        FittedParams::GaussianNb { classes } => nb_log_posteriors(classes, &z)
            .into_iter()
            .fold((GestureKind::Keystroke, f64::NEG_INFINITY), |best, (l, lp)| if lp > best.1 { (l, lp) } else { best })
            .0,
    }
}

/// Rows are true labels, columns predictions, both indexed typing 0 / mouse 1.
pub type Confusion = [[u64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub kind: ClassifierKind,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub confusion: Confusion,
}

/// Stratified fold index of every example: each class is shuffled and dealt
/// round-robin.
pub fn stratified_folds(labels: &[GestureKind], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in GestureKind::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

pub fn cross_validate(
    kind: ClassifierKind,
    dataset: &[LabeledExample],
    folds: usize,
    seed: u64,
) -> Result<CrossValidation> {
    if folds < 2 {
        return Err(Error::invalid("folds", "need at least 2"));
    }
    if folds > dataset.len() {
        return Err(Error::invalid("folds", format!("{folds} folds for {} examples", dataset.len())));
    }
    let labels: Vec<GestureKind> = dataset.iter().map(|e| e.label).collect();
    for class in GestureKind::ALL {
        if labels.iter().filter(|l| **l == class).count() < 2 {
            return Err(Error::invalid("dataset", format!("class {class} needs at least 2 examples")));
        }
    }
    let assignment = stratified_folds(&labels, folds, seed);
    let mut confusion = [[0u64; 2]; 2];
    let mut fold_accuracy = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<LabeledExample> =
            dataset.iter().zip(&assignment).filter(|(_, a)| **a != f).map(|(e, _)| *e).collect();
        let model = fit(kind, &train)?;
        let mut correct = 0;
        let mut total = 0;
        for (e, _) in dataset.iter().zip(&assignment).filter(|(_, a)| **a == f) {
            let p = predict(&model, &e.features);
            confusion[e.label.index()][p.index()] += 1;
            correct += usize::from(p == e.label);
            total += 1;
        }
        fold_accuracy.push(if total == 0 { 0.0 } else { correct as f64 / total as f64 });
    }
    let mean_accuracy = fold_accuracy.iter().sum::<f64>() / folds as f64;
    Ok(CrossValidation { kind, fold_accuracy, mean_accuracy, confusion })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(v: f64, r: f64, d: f64, label: GestureKind) -> LabeledExample {
        LabeledExample { features: FeatureVector { variance: v, slope_ratio: r, duration: d }, label }
    }

    #[test]
    fn flat_half_hits_the_cap() {
        let f = features_of(&[0.0, 2.0, 4.0, 2.0, 0.0, 0.0, 0.0, 0.0], 1000).unwrap();
        assert_eq!(f.slope_ratio, SLOPE_RATIO_CAP);
        assert_eq!(f.duration, 0.008);
        // mean 1, squares 0+4+16+4 = 24 → 24/8 − 1 = 2
        assert!((f.variance - 2.0).abs() < 1e-12);
        assert_eq!(half_slope(&[0.0, 2.0, 4.0, 2.0], 1000.0), 2000.0);
    }

    #[test]
    fn symmetric_and_constant_waveforms() {
        let tri = [0.0, 1.0, 2.0, 3.0, 3.0, 2.0, 1.0, 0.0];
        assert_eq!(slope_ratio(&tri, 100), 1.0);
        let f = features_of(&[5.0; 10], 100).unwrap();
        assert_eq!(f.variance, 0.0);
        assert_eq!(f.slope_ratio, 1.0);
        assert!(features_of(&[1.0, 2.0, 3.0], 100).is_err());
    }

    #[test]
    fn odd_lengths_split_after_the_middle() {
        // halves [0,1,2] and [4,8]: slopes 100 and 400
        assert!((slope_ratio(&[0.0, 1.0, 2.0, 4.0, 8.0], 100) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn nb_estimates_priors_and_means() {
        let t: Vec<_> = (0..4)
            .map(|i| ex(1.0, 1.0 + 0.1 * f64::from(i), 0.5, GestureKind::Keystroke))
            .chain((0..4).map(|i| ex(3.0, 1.0 + 0.1 * f64::from(i), 0.5, GestureKind::MouseMove)))
            .collect();
        let m = fit(ClassifierKind::GaussianNb, &t).unwrap();
        let FittedParams::GaussianNb { classes } = &m.params else { panic!() };
        for c in classes {
            assert_eq!(c.prior, 0.5);
            let raw_mean = c.mean[0] * m.standardizer.std[0] + m.standardizer.mean[0];
            let expected = if c.label == GestureKind::Keystroke { 1.0 } else { 3.0 };
            assert!((raw_mean - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn nb_midpoint_goes_to_larger_prior() {
        let sym = [
            ex(1.0, 1.0, 0.4, GestureKind::Keystroke),
            ex(1.2, 1.0, 0.4, GestureKind::Keystroke),
            ex(1.0, 1.0, 0.4, GestureKind::Keystroke),
            ex(1.2, 1.0, 0.4, GestureKind::Keystroke),
            ex(3.0, 1.0, 0.4, GestureKind::MouseMove),
            ex(3.2, 1.0, 0.4, GestureKind::MouseMove),
        ];
        let m = fit(ClassifierKind::GaussianNb, &sym).unwrap();
        let q = FeatureVector { variance: 2.1, slope_ratio: 1.0, duration: 0.4 };
        assert_eq!(predict(&m, &q), GestureKind::Keystroke);
    }

    #[test]
    fn knn_stores_standardized_points() {
        let t: Vec<_> = (0..10)
            .map(|i| {
                let label = if i < 5 { GestureKind::Keystroke } else { GestureKind::MouseMove };
                ex(f64::from(i), 1.0 + f64::from(i % 3), 0.3 + 0.05 * f64::from(i), label)
            })
            .collect();
        let m = fit(ClassifierKind::Knn { k: 3 }, &t).unwrap();
        let FittedParams::Knn { points, .. } = &m.params else { panic!() };
        assert_eq!(points.len(), 10);
        for j in 0..3 {
            let mean = points.iter().map(|p| p.0[j]).sum::<f64>() / 10.0;
            let var = points.iter().map(|p| (p.0[j] - mean).powi(2)).sum::<f64>() / 10.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        let k1 = fit(ClassifierKind::Knn { k: 1 }, &t).unwrap();
        for e in &t {
            assert_eq!(predict(&k1, &e.features), e.label);
        }
    }

    #[test]
    fn single_class_rejected() {
        let t = [ex(1.0, 1.0, 0.5, GestureKind::Keystroke), ex(2.0, 1.0, 0.5, GestureKind::Keystroke)];
        assert!(fit(ClassifierKind::GaussianNb, &t).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("knn".parse::<ClassifierKind>().unwrap(), ClassifierKind::Knn { k: 3 });
        assert_eq!("KNN:5".parse::<ClassifierKind>().unwrap(), ClassifierKind::Knn { k: 5 });
        assert_eq!("nb".parse::<ClassifierKind>().unwrap(), ClassifierKind::GaussianNb);
        assert!("knn:0".parse::<ClassifierKind>().is_err());
        assert!("svm".parse::<ClassifierKind>().is_err());
    }

    fn separable(n: usize) -> Vec<LabeledExample> {
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                if i % 2 == 0 {
                    ex(1.0 + t, 1.0 + t, 0.7, GestureKind::Keystroke)
                } else {
                    ex(10.0 + t, 1.0 + t, 0.3, GestureKind::MouseMove)
                }
            })
            .collect()
    }

    #[test]
    fn separable_data_cross_validates_perfectly() {
        let d = separable(60);
        for kind in [ClassifierKind::Knn { k: 3 }, ClassifierKind::GaussianNb] {
            let cv = cross_validate(kind, &d, 10, 4).unwrap();
            assert_eq!(cv.mean_accuracy, 1.0);
            assert_eq!(cv.confusion, [[30, 0], [0, 30]]);
            assert_eq!(cv, cross_validate(kind, &d, 10, 4).unwrap());
        }
        assert!(cross_validate(ClassifierKind::GaussianNb, &d[..5], 10, 0).is_err());
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<_> = (0..100).map(|i| GestureKind::ALL[usize::from(i % 4 == 0)]).collect();
        let a = stratified_folds(&labels, 10, 9);
        for f in 0..10 {
            let mouse = (0..100).filter(|i| a[*i] == f && labels[*i] == GestureKind::MouseMove).count();
            assert!(mouse == 2 || mouse == 3, "fold {f} has {mouse}");
        }
    }

    proptest! {
        #[test]
        fn offset_leaves_shape_features(wave in prop::collection::vec(-10.0f64..10.0, 4..60), c in -100.0f64..100.0) {
            let a = features_of(&wave, 1000).unwrap();
            let shifted: Vec<f64> = wave.iter().map(|v| v + c).collect();
            let b = features_of(&shifted, 1000).unwrap();
            prop_assert!((a.variance - b.variance).abs() <= 1e-9 * (1.0 + a.variance));
            prop_assert!((a.slope_ratio - b.slope_ratio).abs() <= 1e-6 * a.slope_ratio);
        }

        #[test]
        fn knn_ignores_uniform_rescaling(seed in 0u64..1000, scale in 1.0f64..100.0) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<_> = (0..30)
                .map(|i| ex(rng.random_range(0.0..5.0), rng.random_range(1.0..3.0), rng.random_range(0.1..1.0), GestureKind::ALL[i % 2]))
                .collect();
            let scaled: Vec<_> = data
                .iter()
                .map(|e| ex(e.features.variance * scale, e.features.slope_ratio * scale, e.features.duration * scale, e.label))
                .collect();
            let a = fit(ClassifierKind::Knn { k: 3 }, &data).unwrap();
            let b = fit(ClassifierKind::Knn { k: 3 }, &scaled).unwrap();
            for _ in 0..20 {
                let q = FeatureVector { variance: rng.random_range(0.0..5.0), slope_ratio: rng.random_range(1.0..3.0), duration: rng.random_range(0.1..1.0) };
                let qs = FeatureVector { variance: q.variance * scale, slope_ratio: q.slope_ratio * scale, duration: q.duration * scale };
                prop_assert_eq!(predict(&a, &q), predict(&b, &qs));
            }
        }

        #[test]
        fn mirror_symmetric_stays_at_one_when_stretched(half in prop::collection::vec(0.0f64..10.0, 2..30)) {
            let mut wave = half.clone();
            wave.extend(half.iter().rev());
            let stretched: Vec<f64> = wave.iter().flat_map(|v| [*v, *v]).collect();
            let a = features_of(&wave, 1000).unwrap();
            let b = features_of(&stretched, 1000).unwrap();
            prop_assert_eq!(a.slope_ratio, 1.0);
            prop_assert_eq!(b.slope_ratio, 1.0);
            prop_assert!((b.duration - 2.0 * a.duration).abs() < 1e-12);
        }
    }
}
