//! Talking-activity detection for classroom video.
//!
//! The pipeline runs per person and per 3-second window: a fixed head box is
//! cropped and resized to 100×100, dense optical flow is computed between
//! consecutive crops, the log flow magnitudes are summed into one projection
//! image, and the pooled projection is classified by a three-member
//! majority-vote ensemble. Distant (background) heads are rejected beforehand
//! by their dominant spatial frequency from a Gabor AM-FM decomposition.

pub mod amfm;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod flow;
pub mod learn;
pub mod media;
pub mod pipeline;
pub mod projection;
pub mod proposals;
pub mod provenance;

pub use error::{Error, Result};
pub use learn::Label;

/// Version string embedded in every artifact this crate writes.
pub const TOOL_VERSION: &str = concat!("talkdet/", env!("CARGO_PKG_VERSION"));
