//! Temporal super-resolution for gridded rainfall.
//!
//! Synthesizes the frame halfway between two rain maps with one of four
//! interpolators (nearest frame, dense optical flow, a plain CNN, and the
//! residual TempNet), scores predictions with MAE/POD/FAR/CSI, and drives
//! the direct, skip-one and iterative evaluation protocols.

pub mod dataset;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod models;
pub mod neural;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
