#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;

use std::path::PathBuf;

/// MNIST IDX directory: `$RBFPOINT_DATA/mnist`, else `data/mnist` at the
/// workspace root. `None` when neither holds the training images.
pub fn mnist_dir() -> Option<PathBuf> {
    let env = std::env::var_os("RBFPOINT_DATA").map(|r| PathBuf::from(r).join("mnist"));
    let local = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    [env, Some(local)].into_iter().flatten().find(|d| d.join("train-images-idx3-ubyte").exists())
}
