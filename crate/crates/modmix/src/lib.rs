//! Toolkit for bridging RGB and depth-sensor modalities in 2D detection
//! pipelines.
//!
//! The library covers four stages:
//!
//! * [`geometry`]: organized point clouds, bounding boxes, IoU, the `OPC1`
//!   container format and depth-map back-projection;
//! * [`dhs`]: encoding an organized point cloud into a three-channel
//!   (depth, height, signed angle) pseudo-image that image models can
//!   consume;
//! * [`mixing`]: chessboard per-patch and stochastic flood-fill mixture
//!   masks, and pixel-exact composition of two aligned modality images;
//! * [`dataset`] / [`eval`]: building COCO-format detection datasets from
//!   paired RGB + cloud frames, and computing per-category average precision
//!   with subgroup means.
//!
//! Everything downstream of a seed is deterministic: the same inputs and the
//! same seed produce byte-identical outputs, independent of parallelism.

pub mod cli;
pub mod coco;
pub mod dataset;
pub mod dhs;
pub mod eval;
pub mod geometry;
pub mod mixing;
pub mod seed;
