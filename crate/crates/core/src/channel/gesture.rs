//! Micro-gesture kinematics and gesture scripts.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geometry::Vec3;
use crate::error::{Error, Result};

/// Default vertical range of a keystroke, meters.
pub const KEYSTROKE_TRAVEL: f64 = 0.02;
/// Default keystroke duration, seconds.
pub const KEYSTROKE_DURATION: f64 = 0.7;
/// Allowed horizontal range of a mouse move, meters.
pub const MOUSE_TRAVEL_RANGE: (f64, f64) = (0.015, 0.05);

/// The two desk micro-gestures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureKind {
    #[serde(rename = "typing")]
    Keystroke,
    #[serde(rename = "mouse")]
    MouseMove,
}

impl GestureKind {
    pub const ALL: [GestureKind; 2] = [GestureKind::Keystroke, GestureKind::MouseMove];

    /// Dense index: typing 0, mouse 1.
    pub fn index(self) -> usize {
        match self {
            GestureKind::Keystroke => 0,
            GestureKind::MouseMove => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GestureKind::Keystroke => "typing",
            GestureKind::MouseMove => "mouse",
        }
    }
}

impl fmt::Display for GestureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GestureKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "typing" | "keystroke" | "keyboard" => Ok(GestureKind::Keystroke),
            "mouse" | "mousemove" | "mouse_move" | "mouse-move" => Ok(GestureKind::MouseMove),
            other => Err(format!("unknown gesture label `{other}`")),
        }
    }
}

/// Velocity shape over the course of one gesture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedProfile {
    Constant,
    Sinusoidal,
}

impl FromStr for SpeedProfile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" => Ok(SpeedProfile::Constant),
            "sinusoidal" | "sine" => Ok(SpeedProfile::Sinusoidal),
            other => Err(format!("unknown speed profile `{other}`")),
        }
    }
}

/// A single resolved gesture: where the hand starts and how it moves.
///
/// Keystrokes travel down then back up along `direction` and end at
/// `rest_pos`. Mouse moves travel once along `direction` and end displaced by
/// `travel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureModel {
    pub kind: GestureKind,
    pub rest_pos: Vec3,
    pub travel: f64,
    pub duration: f64,
    pub profile: SpeedProfile,
    /// Unit vector of the motion.
    pub direction: Vec3,
}

impl GestureModel {
    pub fn keystroke(rest_pos: Vec3) -> Self {
        GestureModel {
            kind: GestureKind::Keystroke,
            rest_pos,
            travel: KEYSTROKE_TRAVEL,
            duration: KEYSTROKE_DURATION,
            profile: SpeedProfile::Sinusoidal,
            direction: Vec3::new(0.0, 0.0, -1.0),
        }
    }

    pub fn mouse_move(rest_pos: Vec3, travel: f64, duration: f64, direction: Vec3) -> Self {
        GestureModel {
            kind: GestureKind::MouseMove,
            rest_pos,
            travel,
            duration,
            profile: SpeedProfile::Constant,
            direction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.travel > 0.0 && self.travel.is_finite()) {
            return Err(Error::invalid("travel", "must be positive"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("duration", "must be positive"));
        }
        if !self.rest_pos.is_finite() {
            return Err(Error::invalid("rest_pos", "must be finite"));
        }
        if (self.direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("direction", "must be a unit vector"));
        }
        if self.kind == GestureKind::MouseMove && self.direction.z.abs() > 1e-9 {
            return Err(Error::invalid("direction", "mouse moves are horizontal"));
        }
        Ok(())
    }

    /// Displacement along `direction` at normalized time `u` in [0, 1].
    pub fn displacement(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let shape = match (self.kind, self.profile) {
            (GestureKind::Keystroke, SpeedProfile::Sinusoidal) => 0.5 * (1.0 - (2.0 * PI * u).cos()),
            (GestureKind::Keystroke, SpeedProfile::Constant) => 1.0 - (2.0 * u - 1.0).abs(),
            (GestureKind::MouseMove, SpeedProfile::Sinusoidal) => 0.5 * (1.0 - (PI * u).cos()),
            (GestureKind::MouseMove, SpeedProfile::Constant) => u,
        };
        self.travel * shape
    }

    /// Hand position `tau` seconds after the gesture starts (clamped to the gesture).
    pub fn position(&self, tau: f64) -> Vec3 {
        self.rest_pos + self.direction * self.displacement(tau / self.duration)
    }

    pub fn end_position(&self) -> Vec3 {
        self.position(self.duration)
    }
}

/// A hand at the desk and how strongly it reflects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hand {
    pub home: Vec3,
    pub reflectivity: f64,
}

/// One line of a gesture script, before hand positions are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedGesture {
    pub start: f64,
    pub kind: GestureKind,
    pub travel: f64,
    pub duration: f64,
    pub profile: SpeedProfile,
    /// +1 moves toward the receiver, -1 toward the transmitter. Ignored for keystrokes.
    pub heading: f64,
}

impl ScriptedGesture {
    pub fn keystroke(start: f64) -> Self {
        ScriptedGesture {
            start,
            kind: GestureKind::Keystroke,
            travel: KEYSTROKE_TRAVEL,
            duration: KEYSTROKE_DURATION,
            profile: SpeedProfile::Sinusoidal,
            heading: 1.0,
        }
    }

    pub fn mouse(start: f64, travel: f64, duration: f64, heading: f64) -> Self {
        ScriptedGesture {
            start,
            kind: GestureKind::MouseMove,
            travel,
            duration,
            profile: SpeedProfile::Constant,
            heading,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Timed sequence of gestures performed by a keyboard hand and a mouse hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub duration: f64,
    pub keyboard: Hand,
    pub mouse: Hand,
    pub gestures: Vec<ScriptedGesture>,
}

impl Script {
    pub fn new(duration: f64, keyboard: Hand, mouse: Hand) -> Self {
        Script {
            duration,
            keyboard,
            mouse,
            gestures: Vec::new(),
        }
    }

    pub fn push(&mut self, g: ScriptedGesture) -> &mut Self {
        self.gestures.push(g);
        self
    }

    pub fn hand(&self, kind: GestureKind) -> &Hand {
        match kind {
            GestureKind::Keystroke => &self.keyboard,
            GestureKind::MouseMove => &self.mouse,
        }
    }

    /// Resolves every scripted gesture into a [`GestureModel`], chaining each
    /// hand's position from one gesture to the next. Gestures must be sorted
    /// and non-overlapping.
    pub fn resolve(&self, link_axis: Vec3) -> Result<Vec<(f64, GestureModel)>> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Script("duration must be positive".into()));
        }
        for hand in [&self.keyboard, &self.mouse] {
            if !(hand.reflectivity >= 0.0 && hand.reflectivity.is_finite()) {
                return Err(Error::Script("hand reflectivity must be >= 0".into()));
            }
        }
        let horizontal = {
            let h = Vec3::new(link_axis.x, link_axis.y, 0.0);
            let n = h.norm();
            if n == 0.0 {
                return Err(Error::Script("link axis is vertical; no horizontal mouse direction".into()));
            }
            h * (1.0 / n)
        };
        let mut keyboard_at = self.keyboard.home;
        let mut mouse_at = self.mouse.home;
        let mut prev_end = f64::NEG_INFINITY;
        let mut out = Vec::with_capacity(self.gestures.len());
        for (i, g) in self.gestures.iter().enumerate() {
            if !(g.start >= 0.0 && g.start.is_finite()) {
                return Err(Error::Script(format!("gesture {i}: start must be >= 0")));
            }
            if g.start < prev_end {
                return Err(Error::Script(format!(
                    "gesture {i} at {:.3}s overlaps the previous gesture ending at {prev_end:.3}s",
                    g.start
                )));
            }
            if g.end() > self.duration {
                return Err(Error::Script(format!(
                    "gesture {i} ends at {:.3}s, after the trace ends at {:.3}s",
                    g.end(),
                    self.duration
                )));
            }
            let model = match g.kind {
                GestureKind::Keystroke => GestureModel {
                    kind: g.kind,
                    rest_pos: keyboard_at,
                    travel: g.travel,
                    duration: g.duration,
                    profile: g.profile,
                    direction: Vec3::new(0.0, 0.0, -1.0),
                },
                GestureKind::MouseMove => {
                    if g.heading == 0.0 || !g.heading.is_finite() {
                        return Err(Error::Script(format!("gesture {i}: heading must be +1 or -1")));
                    }
                    let dir = horizontal * g.heading.signum();
                    GestureModel {
                        kind: g.kind,
                        rest_pos: mouse_at,
                        travel: g.travel,
                        duration: g.duration,
                        profile: g.profile,
                        direction: dir,
                    }
                }
            };
            model
                .validate()
                .map_err(|e| Error::Script(format!("gesture {i}: {e}")))?;
            match g.kind {
                GestureKind::Keystroke => keyboard_at = model.end_position(),
                GestureKind::MouseMove => mouse_at = model.end_position(),
            }
            prev_end = g.end();
            out.push((g.start, model));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn hands() -> (Hand, Hand) {
        (
            Hand { home: Vec3::new(0.5, 0.0, -0.61), reflectivity: 0.2 },
            Hand { home: Vec3::new(0.7, 0.0, -0.62), reflectivity: 0.2 },
        )
    }

    #[test]
    fn keystroke_returns_to_rest() {
        let k = GestureModel::keystroke(Vec3::new(0.5, 0.0, -0.6));
        assert_eq!(k.end_position(), k.rest_pos);
        let bottom = k.position(k.duration / 2.0);
        assert_abs_diff_eq!(bottom.z, -0.62, epsilon = 1e-12);
        // down then up
        let zs: Vec<f64> = (0..=100).map(|i| k.position(i as f64 * 0.007).z).collect();
        assert!(zs[..=50].windows(2).all(|w| w[1] <= w[0]));
        assert!(zs[50..].windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn mouse_is_one_directional() {
        let m = GestureModel::mouse_move(Vec3::new(0.7, 0.0, -0.6), 0.03, 0.5, Vec3::new(1.0, 0.0, 0.0));
        let xs: Vec<f64> = (0..=50).map(|i| m.position(i as f64 * 0.01).x).collect();
        assert!(xs.windows(2).all(|w| w[1] >= w[0]));
        assert_abs_diff_eq!(m.end_position().x, 0.73, epsilon = 1e-12);
        assert_eq!(m.end_position().z, -0.6);
    }

    #[test]
    fn invalid_gestures_rejected() {
        let mut k = GestureModel::keystroke(Vec3::new(0.5, 0.0, -0.6));
        k.travel = 0.0;
        assert!(k.validate().is_err());
        let m = GestureModel::mouse_move(Vec3::ZERO, 0.03, 0.5, Vec3::new(0.0, 0.0, 1.0));
        assert!(m.validate().is_err());
    }

    #[test]
    fn script_chains_mouse_positions() {
        let (kb, ms) = hands();
        let mut s = Script::new(10.0, kb, ms);
        s.push(ScriptedGesture::mouse(1.0, 0.03, 0.5, 1.0))
            .push(ScriptedGesture::keystroke(3.0))
            .push(ScriptedGesture::mouse(5.0, 0.03, 0.5, -1.0));
        let r = s.resolve(Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(r[2].1.rest_pos.x, 0.73, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2].1.end_position().x, 0.70, epsilon = 1e-12);
        assert_eq!(r[1].1.rest_pos, kb.home);
    }

    #[test]
    fn overlapping_script_rejected() {
        let (kb, ms) = hands();
        let mut s = Script::new(10.0, kb, ms);
        s.push(ScriptedGesture::keystroke(1.0)).push(ScriptedGesture::keystroke(1.5));
        assert!(matches!(s.resolve(Vec3::new(1.0, 0.0, 0.0)), Err(Error::Script(_))));
    }

    #[test]
    fn gesture_past_end_rejected() {
        let (kb, ms) = hands();
        let mut s = Script::new(1.0, kb, ms);
        s.push(ScriptedGesture::keystroke(0.5));
        assert!(s.resolve(Vec3::new(1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn labels_parse() {
        assert_eq!("typing".parse::<GestureKind>().unwrap(), GestureKind::Keystroke);
        assert_eq!("Mouse".parse::<GestureKind>().unwrap(), GestureKind::MouseMove);
        assert!("jump".parse::<GestureKind>().is_err());
    }
}
