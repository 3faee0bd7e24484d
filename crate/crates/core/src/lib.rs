//! Mosaic-based evaluation of image saliency methods.
//!
//! A mosaic is a 2×2 composite of four labelled images, two of which belong to
//! the class an explanation is asked for. Because the class of every quadrant is
//! known, the signed attribution mass a saliency map places on each quadrant can
//! be split into true/false positives and negatives ([`confusion`]), turned into
//! seven classification-style scores ([`metrics`]), and the scores themselves
//! checked for consistency across images and methods ([`reliability`]).
//!
//! The pipeline is:
//!
//! 1. [`mosaic`] samples mosaic layouts from labelled image folders and writes
//!    the rasters plus a `manifest.json`.
//! 2. Saliency maps for each mosaic are produced externally (or by
//!    [`synthetic`]) and stored in the interchange format of [`saliency`].
//! 3. [`report`] tallies every map against its mosaic, summarises the
//!    per-method score distributions and computes Krippendorff's α and
//!    Spearman's ρ tables.

pub mod confusion;
pub mod metrics;
pub mod mosaic;
pub mod parallel;
pub mod reliability;
pub mod report;
pub mod saliency;
pub mod seed;
pub mod synthetic;

pub use confusion::{quadrant_class, tally_confusion, ConfusionTally};
pub use metrics::{compute_metrics, MetricKind, MetricVector};
pub use mosaic::{CellPos, ImageRecord, MosaicManifest, MosaicSpec, OtherClassPolicy};
pub use reliability::{
    inter_method_matrix, krippendorff_alpha, rank_row, spearman_rho, AlphaLevel, AlphaResult,
    RatingMatrix, RhoMatrix,
};
pub use saliency::{MethodDescriptor, SaliencyMap, SignCapability};
