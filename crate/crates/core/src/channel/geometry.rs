//! Fresnel-zone geometry of a single transmitter/receiver link.
//!
//! Zone `n` is the shell of points whose excess path length
//! `|Tx,P| + |P,Rx| - |Tx,Rx|` lies in `[(n-1)λ/2, nλ/2)`. Boundaries are
//! confocal prolate ellipsoids with the antennas at the foci.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative tolerance used when deciding whether a point sits exactly on a
/// zone boundary. Boundary points belong to the outer zone.
const BOUNDARY_SNAP: f64 = 1e-9;

/// A point or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, other: Vec3, t: f64) -> Vec3 {
        self + (other - self) * t
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Antenna placement and carrier wavelength of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FresnelGeometry {
    tx: Vec3,
    rx: Vec3,
    wavelength: f64,
}

impl FresnelGeometry {
    pub fn new(tx: Vec3, rx: Vec3, wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::invalid("wavelength", "must be positive and finite"));
        }
        if !tx.is_finite() || !rx.is_finite() {
            return Err(Error::invalid("antenna position", "must be finite"));
        }
        if tx.distance(rx) == 0.0 {
            return Err(Error::invalid("antenna position", "tx and rx coincide"));
        }
        Ok(FresnelGeometry { tx, rx, wavelength })
    }

    /// Link of length `spacing` along +x starting at the origin.
    pub fn horizontal(spacing: f64, wavelength: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::invalid("spacing", "must be positive"));
        }
        Self::new(Vec3::ZERO, Vec3::new(spacing, 0.0, 0.0), wavelength)
    }

    /// Link geometry for a carrier frequency in hertz.
    pub fn from_frequency(tx: Vec3, rx: Vec3, carrier_hz: f64) -> Result<Self> {
        if !(carrier_hz > 0.0) {
            return Err(Error::invalid("carrier", "must be positive"));
        }
        Self::new(tx, rx, SPEED_OF_LIGHT / carrier_hz)
    }

    pub fn tx(&self) -> Vec3 {
        self.tx
    }

    pub fn rx(&self) -> Vec3 {
        self.rx
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn carrier_hz(&self) -> f64 {
        SPEED_OF_LIGHT / self.wavelength
    }

    pub fn link_length(&self) -> f64 {
        self.tx.distance(self.rx)
    }

    pub fn midpoint(&self) -> Vec3 {
        self.tx.lerp(self.rx, 0.5)
    }

    /// Same antennas, different wavelength.
    pub fn with_wavelength(&self, wavelength: f64) -> Result<Self> {
        Self::new(self.tx, self.rx, wavelength)
    }

    /// Total reflected path length `|Tx,p| + |p,Rx|`.
    pub fn reflected_path(&self, p: Vec3) -> f64 {
        self.tx.distance(p) + p.distance(self.rx)
    }

    /// Excess path length of a reflection at `p` over the direct path.
    pub fn excess_path(&self, p: Vec3) -> f64 {
        (self.reflected_path(p) - self.link_length()).max(0.0)
    }

    /// Perpendicular distance from the link midpoint to the boundary of zone `n`.
    pub fn zone_boundary_radius(&self, n: u32) -> Result<f64> {
        if n < 1 {
            return Err(Error::invalid("zone", "index must be >= 1"));
        }
        let n = f64::from(n);
        let d = self.link_length();
        let l = self.wavelength;
        Ok((n * l * d / 4.0 + n * n * l * l / 16.0).sqrt())
    }

    /// Radial thickness of zone `n + 1` measured at the midpoint plane.
    pub fn zone_thickness(&self, n: u32) -> Result<f64> {
        Ok(self.zone_boundary_radius(n + 1)? - self.zone_boundary_radius(n)?)
    }

    /// 1-based zone containing `p`.
    pub fn zone_index(&self, p: Vec3) -> u32 {
        let half_waves = self.excess_path(p) / (self.wavelength / 2.0);
        let nearest = half_waves.round();
        let k = if (half_waves - nearest).abs() <= BOUNDARY_SNAP * nearest.max(1.0) {
            nearest
        } else {
            half_waves.floor()
        };
        k as u32 + 1
    }

    /// Unit vector pointing from Tx to Rx.
    pub fn axis(&self) -> Vec3 {
        (self.rx - self.tx) * (1.0 / self.link_length())
    }

    /// Fraction of the Tx→Rx axis at which `p` projects (0 at Tx, 1 at Rx).
    pub fn axial_fraction(&self, p: Vec3) -> f64 {
        (p - self.tx).dot(self.axis()) / self.link_length()
    }

    /// Distance of `p` from the infinite Tx–Rx line.
    pub fn off_axis_distance(&self, p: Vec3) -> f64 {
        let rel = p - self.tx;
        let along = rel.dot(self.axis());
        (rel.dot(rel) - along * along).max(0.0).sqrt()
    }
}
