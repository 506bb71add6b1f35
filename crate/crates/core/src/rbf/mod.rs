//! Trainable RBF feature extraction: per-attribute kernel channels, their
//! initialization schemes and the kernel CSV format.

mod init;
mod io;
mod layer;

pub use init::{
    init_kernels, kmeans, sample_in_ball, sample_on_sphere, InitScheme, KMEANS_MAX_ITERS,
    KMEANS_SAMPLE_CAP, LOCAL_INIT_RADIUS, SIGMA_INIT_RANGE,
};
pub(crate) use init::sample_sigmas;
pub use io::{dump_kernels, load_kernels, read_kernels, write_kernels, KernelTable};
pub use layer::{rbf_backward, rbf_forward, MultiChannelRbf, RbfChannel, SIGMA_FLOOR};
