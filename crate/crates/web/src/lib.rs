//! Browser bindings. Each export returns a JSON string for the page in
//! `www/` to draw; the same computations are plain Rust functions so they
//! run natively in tests.

use deskcsi::channel::GestureKind;
use deskcsi::preprocess::{magnitude_response_table, FilterSpec};
use deskcsi::segmentation::SegmenterParams;
use deskcsi::synth::{keystroke_burst, process_trace, DeskScene};
use deskcsi::Result;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct Zone {
    pub n: u32,
    /// Boundary radius at the link midpoint, meters.
    pub radius: f64,
    /// Distance to the next boundary, meters.
    pub thickness: f64,
}

pub fn zone_table(spacing: f64, wavelength: f64, count: u32) -> Result<Vec<Zone>> {
    let scene = DeskScene { spacing, wavelength, ..DeskScene::default() };
    let g = scene.geometry()?;
    (1..=count)
        .map(|n| Ok(Zone { n, radius: g.zone_boundary_radius(n)?, thickness: g.zone_thickness(n)? }))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct BurstView {
    pub fs: u32,
    /// Every `step`-th sample of the selected and filtered amplitude.
    pub step: usize,
    pub raw: Vec<f64>,
    pub filtered: Vec<f64>,
    /// Detected (start, end) sample indices.
    pub segments: Vec<(usize, usize)>,
    /// Annotated (start, end) sample indices.
    pub truth: Vec<(usize, usize)>,
    /// Fresnel zone of the keyboard hand at rest.
    pub zone: u32,
}

const VIEW_POINTS: usize = 1500;

/// Simulates `count` keystrokes with the keyboard hand `depth` meters below
/// the link, then filters and segments the result.
pub fn burst_view(count: usize, depth: f64, noise_fraction: f64, seed: u64) -> Result<BurstView> {
    let mut scene = DeskScene { noise_fraction, ..DeskScene::default() };
    scene.keyboard.home.z = -depth;
    scene.validate()?;
    let lt = keystroke_burst(&scene, count, (0.5, 1.0), seed)?;
    let p = process_trace(&lt.trace, &FilterSpec::default(), &SegmenterParams::default())?;
    let step = p.selected.values.len().div_ceil(VIEW_POINTS).max(1);
    Ok(BurstView {
        fs: lt.trace.fs,
        step,
        raw: p.selected.values.iter().step_by(step).copied().collect(),
        filtered: p.filtered.values.iter().step_by(step).copied().collect(),
        segments: p.segmentation.segments.iter().map(|s| (s.start_idx, s.end_idx)).collect(),
        truth: lt
            .trace
            .annotations
            .iter()
            .filter(|a| a.label == GestureKind::Keystroke)
            .map(|a| (a.start_idx, a.end_idx))
            .collect(),
        zone: scene.geometry()?.zone_index(scene.keyboard.home),
    })
}

pub fn filter_table(cutoff_hz: f64, order: usize, points: usize) -> Result<Vec<[f64; 3]>> {
    let spec = FilterSpec { cutoff_hz, order };
    magnitude_response_table(&spec, DeskScene::default().fs, points)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn zones(spacing: f64, wavelength: f64, count: u32) -> std::result::Result<String, JsError> {
    to_js(zone_table(spacing, wavelength, count))
}

#[wasm_bindgen]
pub fn keystrokes(count: usize, depth: f64, noise_fraction: f64, seed: u64) -> std::result::Result<String, JsError> {
    to_js(burst_view(count, depth, noise_fraction, seed))
}

#[wasm_bindgen]
pub fn filter_response(cutoff_hz: f64, order: usize, points: usize) -> std::result::Result<String, JsError> {
    to_js(filter_table(cutoff_hz, order, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zone_thickness_near_midpoint_scale() {
        let z = zone_table(1.0, 0.125, 12).unwrap();
        assert_eq!(z.len(), 12);
        assert!((0.035..0.043).contains(&z[9].thickness), "{:?}", z[9]);
        assert!(z.windows(2).all(|w| w[1].radius > w[0].radius));
    }

    #[test]
    fn burst_view_finds_each_keystroke() {
        let v = burst_view(4, 0.605, 0.02, 3).unwrap();
        assert_eq!(v.truth.len(), 4);
        assert_eq!(v.segments.len(), 4);
        assert_eq!(v.raw.len(), v.filtered.len());
        assert!(v.raw.len() <= VIEW_POINTS);
        assert!(serde_json::to_string(&v).unwrap().contains("\"segments\""));
    }

    #[test]
    fn hand_outside_desk_range_rejected() {
        assert!(burst_view(2, 0.3, 0.02, 1).is_err());
    }

    #[test]
    fn filter_table_half_power_at_cutoff() {
        let t = filter_table(7.5, 4, 200).unwrap();
        assert_eq!(t.len(), 200);
        let near = t.iter().min_by(|a, b| (a[0] - 7.5).abs().total_cmp(&(b[0] - 7.5).abs())).unwrap();
        assert!((near[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.05);
    }
}
