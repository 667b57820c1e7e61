use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::geometry::{FresnelGeometry, Vec3};
use crate::error::{Error, Result};

/// Position of a reflector as a function of time (seconds).
pub trait Trajectory: Send + Sync {
    fn position(&self, t: f64) -> Vec3;
}

impl<F> Trajectory for F
where
    F: Fn(f64) -> Vec3 + Send + Sync,
{
    fn position(&self, t: f64) -> Vec3 {
        self(t)
    }
}

impl Trajectory for Vec3 {
    fn position(&self, _t: f64) -> Vec3 {
        *self
    }
}

/// One moving reflection: where the reflector is and how strongly it reflects.
#[derive(Clone)]
pub struct DynamicPath {
    pub trajectory: Arc<dyn Trajectory>,
    pub amplitude: f64,
}

impl DynamicPath {
    pub fn new(trajectory: impl Trajectory + 'static, amplitude: f64) -> Self {
        DynamicPath {
            trajectory: Arc::new(trajectory),
            amplitude,
        }
    }
}

impl fmt::Debug for DynamicPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicPath")
            .field("amplitude", &self.amplitude)
            .field("position_at_0", &self.trajectory.position(0.0))
            .finish()
    }
}

/// Static + dynamic channel frequency response of one link.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub geometry: FresnelGeometry,
    pub static_component: Complex64,
    pub dynamic_paths: Vec<DynamicPath>,
    /// Per-component (real and imaginary) standard deviation of additive noise.
    pub noise_std: f64,
    pub rng_seed: u64,
}

impl ChannelModel {
    pub fn new(geometry: FresnelGeometry, static_component: Complex64) -> Self {
        ChannelModel {
            geometry,
            static_component,
            dynamic_paths: Vec::new(),
            noise_std: 0.0,
            rng_seed: 0,
        }
    }

    pub fn with_path(mut self, path: DynamicPath) -> Self {
        self.dynamic_paths.push(path);
        self
    }

    pub fn with_noise(mut self, noise_std: f64, seed: u64) -> Self {
        self.noise_std = noise_std;
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std", "must be finite and >= 0"));
        }
        if !(self.static_component.re.is_finite() && self.static_component.im.is_finite()) {
            return Err(Error::invalid("static_component", "must be finite"));
        }
        for (k, p) in self.dynamic_paths.iter().enumerate() {
            if !(p.amplitude >= 0.0 && p.amplitude.is_finite()) {
                return Err(Error::invalid(
                    format!("dynamic_paths[{k}].amplitude"),
                    "must be finite and >= 0",
                ));
            }
        }
        Ok(())
    }

    /// Noiseless response at time `t` on the geometry's own wavelength.
    pub fn cfr_at(&self, t: f64) -> Complex64 {
        self.cfr_at_wavelength(t, self.geometry.wavelength())
    }

    pub fn cfr_at_wavelength(&self, t: f64, wavelength: f64) -> Complex64 {
        let dynamic: Complex64 = self
            .dynamic_paths
            .iter()
            .map(|p| {
                let length = self.geometry.reflected_path(p.trajectory.position(t));
                path_phasor(p.amplitude, length, wavelength)
            })
            .sum();
        self.static_component + dynamic
    }
}

/// `a · exp(-j 2π L / λ)` for a reflected path of total length `L`.
#[inline]
pub fn path_phasor(amplitude: f64, length: f64, wavelength: f64) -> Complex64 {
    Complex64::from_polar(amplitude, -2.0 * PI * length / wavelength)
}
