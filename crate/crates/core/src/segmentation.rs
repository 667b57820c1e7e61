//! Variance-based automatic gesture segmentation.
//!
//! The filtered amplitude is turned into a sliding-variance trace (`nor1`),
//! smoothed into `nor2` (variance of the moving sum of `nor1`, scaled by a
//! gain), and gesture start points are found where `nor2` pulls away from
//! `nor1`. A start point must be stable: the crossing points for 50 increasing
//! budgets `se` have to agree within a small spread. The segment ends at the
//! first later sample where `nor2` falls back to its start value.
//!
//! `nor1` and `nor2` are aligned with the input at the left edge of their
//! windows, so index `i` in either trace maps to sample `i` of the series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::AmplitudeSeries;

/// Segmenter settings. Durations are seconds; counts are samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmenterParams {
    pub window: f64,
    pub step: usize,
    pub smoothing_gain: f64,
    pub se_start: f64,
    pub se_stop: f64,
    pub se_increment: f64,
    /// Candidates that must agree for a start point.
    pub stability_count: usize,
    /// Maximum spread of agreeing candidates, samples.
    pub stability_spread: usize,
    /// Segments whose waveform span (max - min) is below this are dropped.
    pub min_amplitude_span: f64,
    /// Consecutive raw segments separated by at most this many seconds are
    /// fused. A pause inside one gesture (keystroke turnaround, steady mouse
    /// glide) flattens the moving-sum envelope and trips the end-point rule.
    pub merge_gap: f64,
}

impl Default for SegmenterParams {
    fn default() -> Self {
        SegmenterParams {
            window: 1.0 / 20.0,
            step: 1,
            smoothing_gain: 100.0,
            se_start: 0.1,
            se_stop: 5.0,
            se_increment: 0.1,
            stability_count: 6,
            stability_spread: 10,
            min_amplitude_span: DEFAULT_MIN_AMPLITUDE_SPAN,
            merge_gap: 0.35,
        }
    }
}

/// Validation threshold for the default simulated desk scene (see
/// [`calibrate_min_amplitude_span`]).
pub const DEFAULT_MIN_AMPLITUDE_SPAN: f64 = 0.9;

impl SegmenterParams {
    /// Window length in samples at `fs`.
    pub fn window_samples(&self, fs: u32) -> usize {
        (self.window * f64::from(fs)).round() as usize
    }

    /// The sweep of `se` budgets: start, start + inc, ... up to stop inclusive.
    pub fn se_values(&self) -> Vec<f64> {
        let count = ((self.se_stop - self.se_start) / self.se_increment + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|k| self.se_start + k as f64 * self.se_increment)
            .collect()
    }

    pub fn validate(&self, fs: u32) -> Result<()> {
        if self.window_samples(fs) < 2 {
            return Err(Error::invalid("segmenter.window", "window must span at least 2 samples"));
        }
        if self.step == 0 {
            return Err(Error::invalid("segmenter.step", "must be >= 1"));
        }
        for (name, v) in [
            ("segmenter.smoothing_gain", self.smoothing_gain),
            ("segmenter.se_start", self.se_start),
            ("segmenter.se_increment", self.se_increment),
            ("segmenter.min_amplitude_span", self.min_amplitude_span),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.se_stop >= self.se_start) {
            return Err(Error::invalid("segmenter.se_stop", "must be >= se_start"));
        }
        if !(self.merge_gap >= 0.0 && self.merge_gap.is_finite()) {
            return Err(Error::invalid("segmenter.merge_gap", "must be finite and >= 0"));
        }
        if self.stability_count == 0 || self.stability_spread == 0 {
            return Err(Error::invalid("segmenter.stability", "count and spread must be positive"));
        }
        Ok(())
    }
}

/// One detected gesture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureSegment {
    pub start_idx: usize,
    pub end_idx: usize,
    pub waveform: Vec<f64>,
    pub fs: u32,
    /// The signal never settled back before the end of the trace.
    pub truncated: bool,
}

impl GestureSegment {
    pub fn from_series(series: &AmplitudeSeries, start_idx: usize, end_idx: usize, truncated: bool) -> Self {
        GestureSegment {
            start_idx,
            end_idx,
            waveform: series.values[start_idx..=end_idx].to_vec(),
            fs: series.fs,
            truncated,
        }
    }

    pub fn span(&self) -> f64 {
        let (lo, hi) = self
            .waveform
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        hi - lo
    }

    pub fn duration(&self) -> f64 {
        self.waveform.len() as f64 / f64::from(self.fs)
    }
}

/// Population variance of each window of `w` samples, advancing by `step`.
pub fn sliding_variance(values: &[f64], w: usize, step: usize) -> Result<Vec<f64>> {
    if w < 2 {
        return Err(Error::invalid("window", "must span at least 2 samples"));
    }
    if step == 0 {
        return Err(Error::invalid("step", "must be >= 1"));
    }
    if values.len() < w {
        return Err(Error::invalid(
            "series",
            format!("{} samples is shorter than one {w}-sample window", values.len()),
        ));
    }
    let count = (values.len() - w) / step + 1;
    Ok((0..count)
        .map(|k| {
            let win = &values[k * step..k * step + w];
            let mean = win.iter().sum::<f64>() / w as f64;
            let var = win.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
            var.max(0.0)
        })
        .collect())
}

/// Sum of each window of `w` samples, advancing by `step`.
pub fn sliding_sum(values: &[f64], w: usize, step: usize) -> Result<Vec<f64>> {
    if w == 0 || step == 0 {
        return Err(Error::invalid("window", "window and step must be >= 1"));
    }
    if values.len() < w {
        return Err(Error::invalid("series", "shorter than one window"));
    }
    let count = (values.len() - w) / step + 1;
    Ok((0..count)
        .map(|k| values[k * step..k * step + w].iter().sum())
        .collect())
}

/// `nor1` of a series: sliding variance with the segmenter window and step.
pub fn variance_trace(series: &AmplitudeSeries, params: &SegmenterParams) -> Result<Vec<f64>> {
    params.validate(series.fs)?;
    sliding_variance(&series.values, params.window_samples(series.fs), params.step)
}

/// `nor2`: variance of the moving sum of `nor1`, times the smoothing gain.
pub fn smooth_variance(nor1: &[f64], w: usize, step: usize, gain: f64) -> Result<Vec<f64>> {
    let sums = sliding_sum(nor1, w, step)?;
    Ok(sliding_variance(&sums, w, step)?
        .into_iter()
        .map(|v| v * gain)
        .collect())
}

/// Start-point candidates from `cursor`: for every `se` budget, the first
/// index where the running `se - Σ(nor2 - nor1)` drops below zero. Sorted.
pub fn start_candidates(nor1: &[f64], nor2: &[f64], cursor: usize, params: &SegmenterParams) -> Vec<usize> {
    let len = nor1.len().min(nor2.len());
    let mut out: Vec<usize> = params
        .se_values()
        .into_iter()
        .filter_map(|mut se| {
            for i in cursor..len {
                se -= nor2[i] - nor1[i];
                if se < 0.0 {
                    return Some(i);
                }
            }
            None
        })
        .collect();
    out.sort_unstable();
    out
}

/// First candidate whose next `stability_count - 1` successors lie within
/// `stability_spread` samples of it.
pub fn stable_start(candidates: &[usize], params: &SegmenterParams) -> Option<usize> {
    let n = params.stability_count;
    candidates
        .windows(n)
        .find(|w| w[n - 1] - w[0] < params.stability_spread)
        .map(|w| w[0])
}

/// Next stable start point at or after `cursor`, if any.
///
/// A sweep whose candidates never settle is restarted just past its
/// earliest candidate, with every budget refilled. The search ends when a
/// sweep produces no candidate at all.
pub fn mark_start_point(nor1: &[f64], nor2: &[f64], cursor: usize, params: &SegmenterParams) -> Option<usize> {
    let mut cursor = cursor;
    loop {
        let candidates = start_candidates(nor1, nor2, cursor, params);
        if let Some(start) = stable_start(&candidates, params) {
            return Some(start);
        }
        cursor = candidates.first()? + 1;
    }
}

/// All start points, with the scan resuming at each end point.
pub fn mark_start_points(nor1: &[f64], nor2: &[f64], params: &SegmenterParams) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut cursor = 0;
    while let Some(start) = mark_start_point(nor1, nor2, cursor, params) {
        starts.push(start);
        match mark_end_point(nor2, start) {
            (end, false) => cursor = end,
            (_, true) => break,
        }
    }
    starts
}

/// First index after `start` where `nor2` returns to (or below) its value at
/// `start`. When it never does, returns the last index and `true`.
pub fn mark_end_point(nor2: &[f64], start: usize) -> (usize, bool) {
    let level = nor2[start];
    match nor2.iter().skip(start + 1).position(|v| *v <= level) {
        Some(k) => (start + 1 + k, false),
        None => (nor2.len() - 1, true),
    }
}

/// Intermediate traces and the resulting segments of one segmentation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub fs: u32,
    pub nor1: Vec<f64>,
    pub nor2: Vec<f64>,
    /// Every (start, end, truncated) found by the start/end scan.
    pub boundaries: Vec<(usize, usize, bool)>,
    /// Boundaries after fusing fragments closer than the merge gap.
    pub merged: Vec<(usize, usize, bool)>,
    pub segments: Vec<GestureSegment>,
}

/// Runs the full segmentation of a filtered amplitude series.
pub fn segment_detailed(series: &AmplitudeSeries, params: &SegmenterParams) -> Result<Segmentation> {
    params.validate(series.fs)?;
    let w = params.window_samples(series.fs);
    let nor1 = sliding_variance(&series.values, w, params.step)?;
    let nor2 = smooth_variance(&nor1, w, params.step, params.smoothing_gain)?;
    let last_sample = series.len() - 1;
    let mut boundaries = Vec::new();
    let mut cursor = 0;
    while let Some(start) = mark_start_point(&nor1, &nor2, cursor, params) {
        let (end, truncated) = mark_end_point(&nor2, start);
        let (s, e) = (start * params.step, (end * params.step).min(last_sample));
        if truncated {
            boundaries.push((s, last_sample, true));
            break;
        }
        boundaries.push((s, e, false));
        cursor = end;
    }
    let merged = merge_close(&boundaries, (params.merge_gap * f64::from(series.fs)).round() as usize);
    let segments = merged
        .iter()
        .filter(|(s, e, _)| e > s)
        .map(|&(s, e, t)| GestureSegment::from_series(series, s, e, t))
        .filter(|seg| seg.span() >= params.min_amplitude_span)
        .collect();
    Ok(Segmentation {
        fs: series.fs,
        nor1,
        nor2,
        boundaries,
        merged,
        segments,
    })
}

/// Fuses consecutive (start, end, truncated) triples whose gap is at most `gap` samples.
pub fn merge_close(boundaries: &[(usize, usize, bool)], gap: usize) -> Vec<(usize, usize, bool)> {
    let mut out: Vec<(usize, usize, bool)> = Vec::with_capacity(boundaries.len());
    for &(s, e, t) in boundaries {
        match out.last_mut() {
            Some(last) if s <= last.1 + gap => {
                last.1 = last.1.max(e);
                last.2 |= t;
            }
            _ => out.push((s, e, t)),
        }
    }
    out
}

/// Cuts a filtered amplitude series into gesture segments.
pub fn segment(series: &AmplitudeSeries, params: &SegmenterParams) -> Result<Vec<GestureSegment>> {
    Ok(segment_detailed(series, params)?.segments)
}

/// Validation threshold as a fraction of the median span of calibration segments.
pub fn calibrate_min_amplitude_span(segments: &[GestureSegment], fraction: f64) -> Option<f64> {
    if segments.is_empty() {
        return None;
    }
    let mut spans: Vec<f64> = segments.iter().map(GestureSegment::span).collect();
    spans.sort_by(f64::total_cmp);
    let mid = spans.len() / 2;
    let median = if spans.len().is_multiple_of(2) {
        0.5 * (spans[mid - 1] + spans[mid])
    } else {
        spans[mid]
    };
    Some(fraction * median)
}
