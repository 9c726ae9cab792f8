//! Online multi-object tracking with per-target online-learned branches,
//! spatial and temporal attention, a constant-velocity motion model, CLEAR
//! MOT evaluation and a synthetic occlusion simulator.

pub mod branch;
pub mod cli;
pub mod domain;
pub mod engine;
pub mod error;
pub mod features;
pub mod gradsuite;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod overlay;
pub mod rng;
pub mod sim;
pub mod tensor;

pub use domain::{iou, Detection, TargetState, TrackId, TrackStatus};
pub use error::{Error, Result};
