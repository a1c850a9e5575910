//! A small CNN engine for sorting torso radiographs into four classes
//! (view x region), built around a 138,052-parameter network of fire,
//! 1x3/3x1, reduction and parallel-1x3 blocks.
//!
//! - [`ops`]: tensor primitives with forward and backward passes.
//! - [`graph`]: the layer DAG, its summary table and the weight archive.
//! - [`train`]: optimizers, the training loop, metrics and gradient checks.
//! - [`data`]: dataset discovery, image decoding and batching.

pub mod data;
pub mod error;
pub mod graph;
pub mod ops;
mod kernel;
pub mod real;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
