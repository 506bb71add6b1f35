//! Per-sample inference FLOPs.
//!
//! Convention: every multiply, add, subtract, division, comparison, `exp` and
//! `sqrt` counts 1. A dense layer costs `2·in·out` per row (the bias add
//! completes the last multiply-accumulate). Batch norm folds into one
//! multiply and one add per element, ReLU and max pool are comparisons,
//! dropout is free at inference. A Gaussian kernel on `d` inputs costs
//! `3d + 1`: `d` subtractions, `d` squares, `d − 1` adds, one division, one exp.

use std::fmt;

use crate::model::spec::{ModelSpec, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopReport {
    pub tnet: u64,
    /// Applying the predicted transform to the input columns.
    pub transform: u64,
    pub rbf: u64,
    pub shared_mlp: u64,
    pub pool: u64,
    pub classifier: u64,
    pub total: u64,
}

fn dense_stack(rows: u64, input: usize, widths: &[usize]) -> (u64, usize) {
    let mut prev = input as u64;
    let mut flops = 0;
    for &w in widths {
        let w = w as u64;
        // linear + folded batch norm + ReLU
        flops += rows * (2 * prev * w + 2 * w + w);
        prev = w;
    }
    (flops, prev as usize)
}

fn pool(points: u64, width: usize) -> u64 {
    points.saturating_sub(1) * width as u64
}

/// FLOPs of the RBF layer alone for `points` points.
pub fn rbf_flops(spec: &ModelSpec, points: usize) -> u64 {
    spec.channels
        .iter()
        .map(|c| points as u64 * c.kernels as u64 * c.kernel.flops(c.slice.len()))
        .sum()
}

/// Counts for one sample of `points` points.
pub fn count_flops(spec: &ModelSpec, points: usize) -> FlopReport {
    let n = points as u64;
    let d = spec.coord_dim;
    let mut r = FlopReport::default();
    if spec.use_transform {
        let (point, width) = dense_stack(n, d, &spec.tnet_point_widths);
        let (fc, last) = dense_stack(1, width, &spec.tnet_fc_widths);
        r.tnet = point + pool(n, width) + fc + 2 * (last * d * d) as u64;
        let per_point = (d * (2 * d - 1)) as u64;
        let applied = if spec.transform_normals { 2 } else { 1 };
        r.transform = applied * n * per_point;
    }
    let feat = match spec.variant {
        Variant::Raw => spec.input_dim,
        _ => {
            r.rbf = rbf_flops(spec, points);
            spec.rbf_width()
        }
    };
    let (shared, width) = dense_stack(n, feat, &spec.shared_mlp_widths);
    r.shared_mlp = shared;
    r.pool = pool(n, width);
    let (cls, last) = dense_stack(1, width, &spec.classifier_widths);
    r.classifier = cls + 2 * (last * spec.num_classes) as u64;
    r.total = r.tnet + r.transform + r.rbf + r.shared_mlp + r.pool + r.classifier;
    r
}

impl fmt::Display for FlopReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tnet        {}", self.tnet)?;
        writeln!(f, "transform   {}", self.transform)?;
        writeln!(f, "rbf         {}", self.rbf)?;
        writeln!(f, "shared_mlp  {}", self.shared_mlp)?;
        writeln!(f, "pool        {}", self.pool)?;
        writeln!(f, "classifier  {}", self.classifier)?;
        write!(f, "total       {}", self.total)
    }
}
