use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::gesture::GestureKind;
use crate::error::{Error, Result};

/// Ground-truth interval of one scripted gesture, inclusive sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub start_idx: usize,
    pub end_idx: usize,
    pub label: GestureKind,
}

/// Uniformly sampled multi-subcarrier channel response.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTrace {
    pub fs: u32,
    /// One row per subcarrier, each of equal length.
    pub samples: Vec<Vec<Complex64>>,
    pub annotations: Vec<Annotation>,
}

impl CsiTrace {
    pub fn new(fs: u32, samples: Vec<Vec<Complex64>>) -> Result<Self> {
        let trace = CsiTrace {
            fs,
            samples,
            annotations: Vec::new(),
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn with_annotations(mut self, annotations: Vec<Annotation>) -> Result<Self> {
        self.annotations = annotations;
        self.validate()?;
        Ok(self)
    }

    pub fn subcarriers(&self) -> usize {
        self.samples.len()
    }

    /// Number of time samples.
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / f64::from(self.fs)
    }

    pub fn amplitude(&self, subcarrier: usize) -> Vec<f64> {
        self.samples[subcarrier].iter().map(|h| h.norm()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.fs == 0 {
            return Err(Error::invalid("fs", "must be positive"));
        }
        let t = self.len();
        if self.samples.iter().any(|row| row.len() != t) {
            return Err(Error::invalid("samples", "subcarrier rows differ in length"));
        }
        let mut prev_end: Option<usize> = None;
        for (k, a) in self.annotations.iter().enumerate() {
            if a.start_idx > a.end_idx || a.end_idx >= t {
                return Err(Error::invalid(
                    format!("annotations[{k}]"),
                    format!("[{}, {}] out of range for {t} samples", a.start_idx, a.end_idx),
                ));
            }
            if let Some(pe) = prev_end {
                if a.start_idx <= pe {
                    return Err(Error::invalid(
                        format!("annotations[{k}]"),
                        "annotations must be sorted and disjoint",
                    ));
                }
            }
            prev_end = Some(a.end_idx);
        }
        Ok(())
    }
}
