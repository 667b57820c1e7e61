//! Fresnel-zone channel model and CSI trace synthesis.

mod geometry;
mod gesture;
mod model;
mod plate;
mod simulate;
mod trace;

pub use geometry::{FresnelGeometry, Vec3, SPEED_OF_LIGHT};
pub use gesture::{
    GestureKind, GestureModel, Hand, Script, ScriptedGesture, SpeedProfile, KEYSTROKE_DURATION,
    KEYSTROKE_TRAVEL, MOUSE_TRAVEL_RANGE,
};
pub use model::{path_phasor, ChannelModel, DynamicPath, Trajectory};
pub use plate::{plate_drag_response, simulate_plate_sweep, PlateOrientation, PlateSweep};
pub use simulate::{gesture_amplitude, simulate_trace, SubcarrierPlan, DEFAULT_FS};
pub use trace::{Annotation, CsiTrace};
