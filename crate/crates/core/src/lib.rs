//! Desk-scale WiFi CSI sensing: a Fresnel-zone channel simulator, low-pass
//! filtering, variance-based gesture segmentation, keystroke/mouse
//! classification and HMM behavior recognition.
// `!(x > 0.0)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod classify;
pub mod commands;
pub mod config;
pub mod error;
pub mod hmm;
pub mod io;
pub mod preprocess;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};
