//! Multi-sensor late-fusion object tracking on race tracks.
//!
//! Detections from several sensors are transformed to the global frame,
//! filtered against the track boundaries, merged, matched to tracks with an
//! optimal assignment and fused by an extended Kalman filter. Delayed frames
//! are applied at their own timestamp in a per-track state history and the
//! correction is propagated forward to the present.

pub mod association;
pub mod config;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod motion;
pub mod pipeline;
pub mod replay;
pub mod runner;
pub mod simulator;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use pipeline::{DetectionFrame, TrackOutput, TrackedObjectList, Tracker};
