//! Photoplethysmography pulse-shape modelling.
//!
//! The pipeline splits a PPG signal into its extrema/envelope part and
//! amplitude-normalised pulses, registers the pulses on a common grid with
//! aligned maxima, and tracks their shape with a B-spline state-space
//! model. Residuals and shape parameters of the fit feed premature-beat
//! detection and classification.

pub mod annotation;
pub mod anomaly;
pub mod decomposition;
pub mod error;
mod par;
pub mod pipeline;
pub mod registration;
pub mod signal;
pub mod spline;
pub mod statespace;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use signal::SampledSignal;
