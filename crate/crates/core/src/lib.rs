//! Uncertainty of 6D object-pose estimates from render-and-compare against
//! instance segmentation masks, an ensemble-disagreement baseline, and the
//! evaluation of uncertainty-filtered pose sets.

// `!(x > y)` guards are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod maskval;
pub mod metrics;
pub mod renderer;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, ModelPoints, Pose, TriangleMesh, Vec3};
pub use maskval::{BinaryMask, MaskValConfig, PoseEstimate, Segmentation};
