//! Forward and analytic backward passes for every non-RBF layer.
//!
//! Layers are plain data. Callers own the activation caches and pass them back
//! into the backward functions, so one layer value can be driven by any
//! training loop without interior state.

mod activation;
mod batchnorm;
mod linear;
mod loss;
mod pool;
mod pooled;
mod transform;

pub use activation::{relu_backward, relu_forward, Dropout, DropoutMask};
pub use batchnorm::{BatchNorm, BnCache, BN_EPSILON, BN_MOMENTUM};
pub use linear::Linear;
pub use loss::{argmax_rows, softmax_cross_entropy};
pub use pool::{maxpool_points_backward, maxpool_points_forward, Argmax};
pub use pooled::{fusion_pays, pooled_block_backward, pooled_block_infer, pooled_block_train, PooledCache};
pub use transform::{apply_transform, apply_transform_backward};

/// Train mode uses batch statistics and dropout; eval mode is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
