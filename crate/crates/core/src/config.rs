//! Pipeline configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::PlateSweep;
use crate::classify::ClassifierKind;
use crate::error::{Error, Result};
use crate::hmm::BaumWelchOptions;
use crate::io::read_text;
use crate::preprocess::FilterSpec;
use crate::segmentation::SegmenterParams;
use crate::synth::{item_seed, BehaviorStudy, CorpusSpec, DeskScene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSettings {
    pub kind: ClassifierKind,
    pub folds: usize,
    /// Seed of the fold assignment.
    pub seed: u64,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        ClassifierSettings { kind: ClassifierKind::Knn { k: 3 }, folds: 10, seed: 3 }
    }
}

/// Labeled segments harvested from simulated traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSettings {
    pub segments: usize,
    pub corpus: CorpusSpec,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        DatasetSettings { segments: 400, corpus: CorpusSpec { seed: 2, ..Default::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationCheck {
    /// Keystrokes in the typing-burst check.
    pub burst_keystrokes: usize,
    /// Quiet time between burst keystrokes, seconds.
    pub burst_gap: (f64, f64),
    pub burst_seed: u64,
    /// Boundary tolerance when matching detections to annotations, seconds.
    pub tolerance: f64,
}

impl Default for SegmentationCheck {
    fn default() -> Self {
        SegmentationCheck { burst_keystrokes: 17, burst_gap: (0.5, 1.0), burst_seed: 5, tolerance: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub scene: DeskScene,
    /// Noise seed of `simulate`.
    pub simulate_seed: u64,
    pub filter: FilterSpec,
    pub segmenter: SegmenterParams,
    pub corpus: CorpusSpec,
    pub check: SegmentationCheck,
    pub dataset: DatasetSettings,
    pub classifier: ClassifierSettings,
    pub baum_welch: BaumWelchOptions,
    pub behavior: BehaviorStudy,
    pub plate: PlateSweep,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scene: DeskScene::default(),
            simulate_seed: 7,
            filter: FilterSpec::default(),
            segmenter: SegmenterParams::default(),
            corpus: CorpusSpec::default(),
            check: SegmentationCheck::default(),
            dataset: DatasetSettings::default(),
            classifier: ClassifierSettings::default(),
            baum_welch: BaumWelchOptions::default(),
            behavior: BehaviorStudy { seed: 4, ..Default::default() },
            plate: PlateSweep { seed: 6, ..Default::default() },
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?).map_err(|e| match e {
            Error::InvalidInput { field, reason } => Error::invalid(format!("{} ({field})", path.display()), reason),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Replaces every stage seed with one derived from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.simulate_seed = item_seed(seed, 0);
        self.corpus.seed = item_seed(seed, 1);
        self.dataset.corpus.seed = item_seed(seed, 2);
        self.classifier.seed = item_seed(seed, 3);
        self.behavior.seed = item_seed(seed, 4);
        self.plate.seed = item_seed(seed, 5);
        self.check.burst_seed = item_seed(seed, 6);
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.filter.validate(self.scene.fs)?;
        self.segmenter.validate(self.scene.fs)?;
        self.plate.validate()?;
        validate_corpus("corpus", &self.corpus)?;
        validate_corpus("dataset.corpus", &self.dataset.corpus)?;
        if self.dataset.segments < self.classifier.folds {
            return Err(Error::invalid("dataset.segments", "fewer segments than folds"));
        }
        if self.classifier.folds < 2 {
            return Err(Error::invalid("classifier.folds", "need at least 2"));
        }
        if let ClassifierKind::Knn { k: 0 } = self.classifier.kind {
            return Err(Error::invalid("classifier.kind.k", "must be >= 1"));
        }
        if !(self.check.tolerance > 0.0) {
            return Err(Error::invalid("check.tolerance", "must be positive"));
        }
        let (lo, hi) = self.check.burst_gap;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::invalid("check.burst_gap", "need 0 < min <= max"));
        }
        if !(self.baum_welch.tol >= 0.0) {
            return Err(Error::invalid("baum_welch.tol", "must be >= 0"));
        }
        let b = &self.behavior;
        if b.train_per_behavior == 0 || b.test_per_behavior == 0 || b.length == 0 {
            return Err(Error::invalid("behavior", "sequence counts and length must be positive"));
        }
        Ok(())
    }
}

fn validate_corpus(name: &str, c: &CorpusSpec) -> Result<()> {
    if c.traces == 0 {
        return Err(Error::invalid(format!("{name}.traces"), "must be positive"));
    }
    if c.min_gestures == 0 || c.max_gestures < c.min_gestures {
        return Err(Error::invalid(format!("{name}.min_gestures"), "need 1 <= min_gestures <= max_gestures"));
    }
    if !(c.gap.0 > 0.0 && c.gap.1 >= c.gap.0) {
        return Err(Error::invalid(format!("{name}.gap"), "need 0 < min <= max"));
    }
    if !(c.margin >= 0.0) {
        return Err(Error::invalid(format!("{name}.margin"), "must be >= 0"));
    }
    if !(0.0..=1.0).contains(&c.keystroke_fraction) {
        return Err(Error::invalid(format!("{name}.keystroke_fraction"), "must be in [0, 1]"));
    }
    Ok(())
}
