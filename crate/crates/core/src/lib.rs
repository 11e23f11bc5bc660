//! Compound figure separation toolkit.
//!
//! Synthesizes labeled compound figures, trains a single-shot grid detector
//! that predicts subfigure boxes, and scores detections with the ImageCLEF
//! figure-separation metrics (per-figure accuracy, precision, recall, AP).
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the single-precision types used by the tools.

pub mod detector;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod real;
pub mod synthesis;

pub use geometry::{BBox, GeometryError, OverlapDenominator};
pub use real::Real;

/// Single-precision bounding box.
pub type BBox32 = geometry::BBox<f32>;
/// Double-precision bounding box (annotation files and evaluation).
pub type BBox64 = geometry::BBox<f64>;
/// Single-precision activation tensor.
pub type Tensor32 = nn::Tensor<f32>;
/// Double-precision tensor, used mostly for gradient checking.
pub type Tensor64 = nn::Tensor<f64>;
/// Single-precision detector used by the command-line tools.
pub type Detector = detector::DetectorModel<f32>;
pub type Detection32 = detector::Detection<f32>;
