//! Span-ranking coreference resolution over segment-encoded documents.
//!
//! The crate covers the whole pipeline: corpus readers and subword
//! tokenization, document segmentation with optional overlap gating, a small
//! transformer encoder, the span-ranking scorer with coarse-to-fine pruning
//! and higher-order refinement, training, and the standard coreference and
//! GAP metrics.

pub mod analysis;
pub mod autograd;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod params;
pub mod segment;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Matrix, Real};
