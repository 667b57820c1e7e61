//! Scripted CSI trace synthesis.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::geometry::{FresnelGeometry, Vec3, SPEED_OF_LIGHT};
use super::gesture::{GestureKind, GestureModel, Script};
use super::model::{path_phasor, ChannelModel, Trajectory};
use super::trace::{Annotation, CsiTrace};
use crate::error::{Error, Result};

/// Default packet rate, packets per second.
pub const DEFAULT_FS: u32 = 1000;

/// How the subcarriers of a trace are laid out in frequency and how strongly
/// each one responds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubcarrierPlan {
    pub count: usize,
    /// Total span of subcarrier center frequencies, Hz.
    pub bandwidth_hz: f64,
    /// Multiplicative gain applied to the full response of each subcarrier.
    pub gains: Vec<f64>,
}

impl SubcarrierPlan {
    /// `count` subcarriers over `bandwidth_hz` with gains falling linearly
    /// from 1 on the first subcarrier to `last_gain` on the last.
    pub fn linear_rolloff(count: usize, bandwidth_hz: f64, last_gain: f64) -> Self {
        let gains = (0..count)
            .map(|s| {
                if count == 1 {
                    1.0
                } else {
                    1.0 + (last_gain - 1.0) * s as f64 / (count - 1) as f64
                }
            })
            .collect();
        SubcarrierPlan {
            count,
            bandwidth_hz,
            gains,
        }
    }

    /// Single subcarrier at the carrier with unit gain.
    pub fn single() -> Self {
        Self::linear_rolloff(1, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("subcarriers", "need at least one"));
        }
        if self.gains.len() != self.count {
            return Err(Error::invalid("subcarrier gains", "one gain per subcarrier"));
        }
        if self.gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::invalid("subcarrier gains", "must be finite and >= 0"));
        }
        if !(self.bandwidth_hz >= 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::invalid("bandwidth_hz", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Wavelength of every subcarrier, spread uniformly around the carrier.
    pub fn wavelengths(&self, carrier_wavelength: f64) -> Vec<f64> {
        let fc = SPEED_OF_LIGHT / carrier_wavelength;
        (0..self.count)
            .map(|s| {
                if self.count == 1 {
                    carrier_wavelength
                } else {
                    let offset = (s as f64 / (self.count - 1) as f64 - 0.5) * self.bandwidth_hz;
                    SPEED_OF_LIGHT / (fc + offset)
                }
            })
            .collect()
    }
}

impl Default for SubcarrierPlan {
    /// 30 subcarriers over 20 MHz, gain rolling off to 0.4.
    fn default() -> Self {
        Self::linear_rolloff(30, 20e6, 0.4)
    }
}

/// Piecewise trajectory of one hand across a whole script.
#[derive(Debug, Clone)]
struct HandTrack {
    home: Vec3,
    gestures: Vec<(f64, GestureModel)>,
}

impl Trajectory for HandTrack {
    fn position(&self, t: f64) -> Vec3 {
        let k = self.gestures.partition_point(|(start, _)| *start <= t);
        if k == 0 {
            return self.home;
        }
        let (start, g) = &self.gestures[k - 1];
        g.position(t - start)
    }
}

fn check_placement(geometry: &FresnelGeometry, p: Vec3, what: &str) -> Result<()> {
    let along = geometry.axial_fraction(p);
    let below = p.z < geometry.tx().z.min(geometry.rx().z);
    if !(0.0..=1.0).contains(&along) || !below {
        return Err(Error::Script(format!(
            "{what} at ({:.3}, {:.3}, {:.3}) leaves the region below and between the antennas",
            p.x, p.y, p.z
        )));
    }
    Ok(())
}

/// Synthesizes a trace for `script` over `model`.
///
/// Each subcarrier `s` at time `i / fs` carries
/// `gain_s · (H_s + Σ a_k exp(-j2π d_k/λ_s)) + noise`, with the hands of the
/// script added as dynamic paths next to any paths already in `model`.
pub fn simulate_trace(
    model: &ChannelModel,
    script: &Script,
    fs: u32,
    plan: &SubcarrierPlan,
) -> Result<CsiTrace> {
    model.validate()?;
    plan.validate()?;
    if fs == 0 {
        return Err(Error::invalid("fs", "must be positive"));
    }
    let geometry = &model.geometry;
    let resolved = script.resolve(geometry.axis())?;

    let mut tracks = Vec::new();
    for kind in GestureKind::ALL {
        let hand = script.hand(kind);
        let gestures: Vec<(f64, GestureModel)> =
            resolved.iter().filter(|(_, g)| g.kind == kind).copied().collect();
        check_placement(geometry, hand.home, &format!("{kind} hand"))?;
        for (start, g) in &gestures {
            for step in 0..=32 {
                let p = g.position(g.duration * step as f64 / 32.0);
                check_placement(geometry, p, &format!("{kind} gesture at {start:.3}s"))?;
            }
        }
        tracks.push((
            HandTrack {
                home: hand.home,
                gestures,
            },
            hand.reflectivity,
        ));
    }

    let n = (f64::from(fs) * script.duration).round() as usize;
    let fs_f = f64::from(fs);
    let mut annotations = Vec::with_capacity(resolved.len());
    for (start, g) in &resolved {
        let start_idx = (start * fs_f).floor() as usize;
        let end_idx = (((start + g.duration) * fs_f).ceil() as usize).min(n.saturating_sub(1));
        if let Some(prev) = annotations.last() {
            let prev: &Annotation = prev;
            if start_idx <= prev.end_idx {
                return Err(Error::Script(format!(
                    "gesture at {start:.4}s shares samples with the previous gesture"
                )));
            }
        }
        annotations.push(Annotation {
            start_idx,
            end_idx,
            label: g.kind,
        });
    }

    let wavelengths = plan.wavelengths(geometry.wavelength());
    let mut samples = vec![Vec::with_capacity(n); plan.count];
    let mut lengths = Vec::with_capacity(tracks.len() + model.dynamic_paths.len());
    for i in 0..n {
        let t = i as f64 / fs_f;
        lengths.clear();
        for (track, a) in &tracks {
            lengths.push((*a, geometry.reflected_path(track.position(t))));
        }
        for p in &model.dynamic_paths {
            lengths.push((p.amplitude, geometry.reflected_path(p.trajectory.position(t))));
        }
        for (s, row) in samples.iter_mut().enumerate() {
            let lambda = wavelengths[s];
            let h: Complex64 = model.static_component
                + lengths
                    .iter()
                    .map(|(a, len)| path_phasor(*a, *len, lambda))
                    .sum::<Complex64>();
            row.push(h * plan.gains[s]);
        }
    }

    if model.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(model.rng_seed);
        let normal = Normal::new(0.0, model.noise_std)
            .map_err(|e| Error::invalid("noise_std", e.to_string()))?;
        for row in &mut samples {
            for h in row.iter_mut() {
                *h += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
    }

    CsiTrace::new(fs, samples)?.with_annotations(annotations)
}

/// Noiseless amplitude of a single gesture on the carrier wavelength,
/// sampled at `fs` for the duration of the gesture.
pub fn gesture_amplitude(
    model: &ChannelModel,
    gesture: &GestureModel,
    reflectivity: f64,
    fs: u32,
) -> Vec<f64> {
    let n = (gesture.duration * f64::from(fs)).round() as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 / f64::from(fs);
            let len = model.geometry.reflected_path(gesture.position(t));
            (model.cfr_at(t) + path_phasor(reflectivity, len, model.geometry.wavelength())).norm()
        })
        .collect()
}
