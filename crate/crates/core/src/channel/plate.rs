//! Square plates dragged through the link, modeled as grids of coherent
//! point scatterers.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::geometry::{FresnelGeometry, Vec3};
use super::model::path_phasor;
use crate::error::{Error, Result};

/// Plane in which the plate lies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlateOrientation {
    /// Spans the link axis and the vertical; its face points sideways.
    Vertical,
    /// Lies flat, spanning the link axis and the horizontal normal.
    Horizontal,
}

/// Parameters of a plate-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateSweep {
    /// Side lengths to test, meters, ascending.
    pub side_lengths: Vec<f64>,
    /// Depth of the plate center below the link midpoint, meters.
    pub depth: f64,
    /// Drag distance along the link axis, meters.
    pub drag_range: f64,
    /// Drag speed, meters per second.
    pub drag_speed: f64,
    /// Scatterers per plate side.
    pub grid: usize,
    pub orientation: PlateOrientation,
    /// Reflection amplitude per square meter of plate.
    pub reflectivity_per_m2: f64,
    pub static_component: Complex64,
    pub noise_std: f64,
    pub fs: u32,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for PlateSweep {
    fn default() -> Self {
        PlateSweep {
            side_lengths: (2..=12).map(|cm| f64::from(cm) / 100.0).collect(),
            depth: 0.5,
            drag_range: 0.015,
            drag_speed: 0.08,
            grid: 24,
            orientation: PlateOrientation::Vertical,
            reflectivity_per_m2: 100.0,
            static_component: Complex64::new(1.0, 0.0),
            noise_std: 0.0,
            fs: 1000,
            repeats: 20,
            seed: 0,
        }
    }
}

impl PlateSweep {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 {
            return Err(Error::invalid("grid", "need at least 2x2 scatterers"));
        }
        if self.side_lengths.is_empty() {
            return Err(Error::invalid("side_lengths", "empty"));
        }
        if self.side_lengths.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("side_lengths", "must be positive"));
        }
        if self.side_lengths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("side_lengths", "must be strictly ascending"));
        }
        if !(self.drag_range > 0.0 && self.drag_speed > 0.0) {
            return Err(Error::invalid("drag", "range and speed must be positive"));
        }
        if !(self.depth > 0.0) {
            return Err(Error::invalid("depth", "must be positive"));
        }
        if !(self.noise_std >= 0.0) || !(self.reflectivity_per_m2 >= 0.0) {
            return Err(Error::invalid("noise_std/reflectivity", "must be >= 0"));
        }
        if self.fs == 0 || self.repeats == 0 {
            return Err(Error::invalid("fs/repeats", "must be positive"));
        }
        Ok(())
    }
}

/// Scatterer offsets (relative to plate center) of a square plate.
fn scatterers(geometry: &FresnelGeometry, side: f64, grid: usize, orientation: PlateOrientation) -> Vec<Vec3> {
    let along = geometry.axis();
    let across = match orientation {
        PlateOrientation::Vertical => Vec3::new(0.0, 0.0, 1.0),
        PlateOrientation::Horizontal => Vec3::new(-along.y, along.x, 0.0),
    };
    let step = side / grid as f64;
    let mut out = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            let u = (i as f64 + 0.5) * step - side / 2.0;
            let v = (j as f64 + 0.5) * step - side / 2.0;
            out.push(along * u + across * v);
        }
    }
    out
}

/// Complex response over the drag of a plate with side `side`, without noise.
pub fn plate_drag_response(geometry: &FresnelGeometry, sweep: &PlateSweep, side: f64) -> Vec<Complex64> {
    let offsets = scatterers(geometry, side, sweep.grid, sweep.orientation);
    let amplitude = sweep.reflectivity_per_m2 * side * side / offsets.len() as f64;
    let center = geometry.midpoint() + Vec3::new(0.0, 0.0, -sweep.depth);
    let samples = (sweep.drag_range / sweep.drag_speed * f64::from(sweep.fs)).round() as usize;
    let axis = geometry.axis();
    let lambda = geometry.wavelength();
    (0..=samples)
        .map(|i| {
            let shift = axis * (sweep.drag_range * i as f64 / samples.max(1) as f64);
            let dynamic: Complex64 = offsets
                .iter()
                .map(|o| path_phasor(amplitude, geometry.reflected_path(center + shift + *o), lambda))
                .sum();
            sweep.static_component + dynamic
        })
        .collect()
}

fn peak_to_peak(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Mean peak-to-peak received amplitude during the drag, one row per side length.
pub fn simulate_plate_sweep(geometry: &FresnelGeometry, sweep: &PlateSweep) -> Result<Vec<(f64, f64)>> {
    sweep.validate()?;
    let noise = if sweep.noise_std > 0.0 {
        Some(Normal::new(0.0, sweep.noise_std).map_err(|e| Error::invalid("noise_std", e.to_string()))?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(sweep.side_lengths.len());
    for (k, &side) in sweep.side_lengths.iter().enumerate() {
        let clean = plate_drag_response(geometry, sweep, side);
        let mean = match &noise {
            None => peak_to_peak(clean.iter().map(|h| h.norm())),
            Some(normal) => {
                let mut total = 0.0;
                for r in 0..sweep.repeats {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        sweep.seed ^ ((k as u64) << 32) ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                    );
                    total += peak_to_peak(clean.iter().map(|h| {
                        (*h + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).norm()
                    }));
                }
                total / sweep.repeats as f64
            }
        };
        rows.push((side, mean));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> FresnelGeometry {
        FresnelGeometry::horizontal(1.0, 0.125).unwrap()
    }

    #[test]
    fn vanishing_plate_vanishing_response() {
        let sweep = PlateSweep { side_lengths: vec![1e-5, 0.05], ..Default::default() };
        let rows = simulate_plate_sweep(&desk(), &sweep).unwrap();
        assert!(rows[0].1 < 1e-6 * rows[1].1);
        assert!(rows[1].1 > 0.0);
    }

    #[test]
    fn doubling_reflectivity_doubles_response_without_static() {
        let base = PlateSweep { static_component: Complex64::new(0.0, 0.0), ..Default::default() };
        let double = PlateSweep { reflectivity_per_m2: base.reflectivity_per_m2 * 2.0, ..base.clone() };
        let a = simulate_plate_sweep(&desk(), &base).unwrap();
        let b = simulate_plate_sweep(&desk(), &double).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(y.1, 2.0 * x.1);
        }
    }

    #[test]
    fn degenerate_grid_rejected() {
        let sweep = PlateSweep { grid: 1, ..Default::default() };
        assert!(simulate_plate_sweep(&desk(), &sweep).is_err());
        let sweep = PlateSweep { side_lengths: vec![0.05, 0.04], ..Default::default() };
        assert!(simulate_plate_sweep(&desk(), &sweep).is_err());
    }

    #[test]
    fn repeats_identical_without_noise() {
        let one = PlateSweep { repeats: 1, ..Default::default() };
        let many = PlateSweep { repeats: 20, ..Default::default() };
        assert_eq!(
            simulate_plate_sweep(&desk(), &one).unwrap(),
            simulate_plate_sweep(&desk(), &many).unwrap()
        );
    }
}
