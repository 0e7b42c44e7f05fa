//! Building blocks for multi-stage bi-atrial segmentation of 3-D LGE-MRI:
//! contrast enhancement, grid standardization, coarse-ROI localisation,
//! fine-window crop and stitch, evaluation metrics and the asymmetric loss.
//!
//! Network inference is not part of this crate. Each segmentation stage
//! is delegated to a [`pipeline::BackendSpec`], a file-based contract that
//! any external model can satisfy.

pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod loss;
pub mod mclahe;
pub mod metrics;
pub mod phantom;
pub mod pipeline;

pub use error::{Error, Result};
pub use geometry::{BBox, Placement};
pub use image::{ClassMap, Image, LabelMap, Shape, Spacing, Volume};
