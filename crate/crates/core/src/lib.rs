//! Point-cloud classification with trainable radial basis function layers.

pub mod alloc;
pub mod data;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod kv;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rbf;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
pub use kernels::KernelFn;
pub use tensor::{Param, Tensor};
