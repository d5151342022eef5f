//! Tri-level stacked scene classification with perturbation-based
//! explanations.
//!
//! Low-level discriminators read pooled pixels, mid-level ones read
//! color-encoded segmentation maps, high-level ones read bag-of-objects
//! counts. A meta classifier consumes their accuracy-weighted softmax
//! matrices; [`vteg`] explains its output.

pub mod classifier;
pub mod color;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod geometry;
pub mod image;
pub mod scene;
pub mod submodel;
pub mod vteg;
pub mod world;

pub use error::{Error, Result};
