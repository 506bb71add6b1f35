//! Network specification, assembly, accounting and checkpoints.

mod checkpoint;
mod flops;
mod network;
mod spec;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use flops::{count_flops, rbf_flops, FlopReport};
pub use network::{DenseBlock, Network, ParamCount, TNet};
pub use spec::{
    parse_kernel_mix, ChannelSpec, ModelSpec, Variant, DEFAULT_CLASSIFIER, DEFAULT_KEEP_PROB,
    DEFAULT_SHARED_MLP, DEFAULT_TNET_FC, DEFAULT_TNET_POINT,
};
