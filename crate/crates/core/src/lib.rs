//! Concept-based explanations for image classifiers.
//!
//! Images are cut into superpixels, a binary surrogate network is fine-tuned
//! on the target class plus its zero-masked superpixels, and the surrogate's
//! target logit on each superpixel becomes that concept's importance.

pub mod cnn;
pub mod concepts;
pub mod dataset;
pub mod error;
pub mod image;
pub mod kmeans;
pub mod metrics;
pub mod report;
pub mod segmentation;
pub mod surrogate;
pub mod synth;

pub use error::{Error, Result, ZeroVariance};
pub use image::Image;
pub use segmentation::{slic_segment, SegmentMask, SlicParams, SuperpixelImage};
pub use surrogate::{Classifier, Embedder, SurrogateModel, TrainingConfig, TARGET_INDEX};
