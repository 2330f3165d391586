//! Post-processing and evaluation for anchor-free temporal action
//! detection.
//!
//! The crate covers the full path from raw per-location predictions to
//! evaluated detections:
//!
//! - [`quality`]: ground-truth boundary quality maps over timesteps and
//!   anchor scales, plus the map regression loss;
//! - [`sampling`]: interpolated multi-scale anchor features as one sparse
//!   matrix product, the boundary-map head, and aligned proposal features;
//! - [`pipeline`]: proposal decoding, refinement, score fusion, bilinear
//!   boundary-quality lookup, and Soft-NMS;
//! - [`losses`]: focal, 1-D generalized IoU, normalized L1, and quality BCE
//!   losses, each with analytic gradients;
//! - [`eval`]: tIoU matching, average precision, mAP tables, and oracle
//!   rescoring;
//! - [`corpus`]: seeded synthetic corpora that exercise all of the above at
//!   desk scale.
//!
//! Everything is deterministic: pure functions over immutable inputs, and
//! a pinned random generator ([`rng`]) wherever sampling is involved.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod interval;
pub mod io;
pub mod losses;
pub mod pipeline;
pub mod quality;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use interval::{tiou, GroundTruthAction, Interval};
pub use quality::{
    anchor_interval, bem_loss, multi_scale_quality_maps, single_scale_quality, AnchorScaleSet,
    BoundarySide, PositiveMask, QualityMapPair,
};
