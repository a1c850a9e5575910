//! Layer primitives with hand-written forward and backward passes.

pub mod activation;
pub mod concat;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod pool;
pub mod softmax;

pub use activation::{activation_backward, activation_by_name, activation_forward, Activation};
pub use concat::{concat_channels, split_channels};
pub use conv::{conv2d_backward, conv2d_forward, ConvParams, Padding};
pub use dense::{dense_backward, dense_forward, DenseParams};
pub use dropout::{dropout, dropout_backward};
pub use pool::{pool_backward, pool_forward, PoolKind, PoolSpec, PoolState};
pub use softmax::{cross_entropy_loss, softmax};
