//! Tracking-by-detection with a learned association cost.
//!
//! Each frame, every track/detection pair is described by a sliding window of
//! motion and appearance features ([`features`]), scored in one batched pass
//! by a small regression network ([`mlp`]), gated and solved with the
//! Hungarian method ([`assign`]), and fed to a filter-free track lifecycle
//! ([`tracker`]). [`dataset`] builds training data from ground truth and
//! synthetic sequences, [`eval`] computes CLEAR-MOT metrics.

pub mod assign;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod formats;
pub mod geometry;
pub mod mlp;
pub mod track;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, FrameDimensions};
pub use track::{Descriptor, Detection, TargetState, Track};
