//! Two-stage liver/tumor segmentation for abdominal CT, built around a
//! clinically informed weak label.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`volio`] — NIfTI-1 volume I/O, clinical CSV ingestion, and the core
//!   grid types ([`volio::Volume`], [`volio::Mask`]).
//! - [`preprocess`] — orientation standardization, HU windowing, liver
//!   masking, bounding boxes, crop/pad.
//! - [`clinical`] — tumor-to-liver volume ratio (TLVR), linear-model
//!   knowledge extraction, cross-validated feature selection.
//! - [`losses`] — Dice, focal, and weak (soft-TLVR) losses with analytic
//!   per-voxel gradients.
//! - [`segmenter`] — a per-voxel logistic reference model over handcrafted
//!   features, trained with Adam + cosine annealing.
//! - [`postprocess`] — largest-component / hole-filling cleanup and a
//!   morphological region-based active contour for boundary refinement.
//! - [`metrics`] — confusion-based scores (accuracy/Dice/IoU/sensitivity)
//!   with tumor-size stratification.
//! - [`pipeline`] — the two-step global/local orchestration, phantom data
//!   generation, ablation and regularization experiments, and report
//!   emission.

pub mod clinical;
pub mod filters;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod segmenter;
pub mod volio;
