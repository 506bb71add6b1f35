use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Residual centroid norm and scale deviation below which normalization is a no-op.
const NORMALIZED_TOL: f64 = 1e-12;

/// One labelled point set. `normals`, when present, are row-aligned with `coords`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    /// `[N, d]`
    pub coords: Tensor,
    /// `[N, 3]`, unit rows.
    pub normals: Option<Tensor>,
    pub label: usize,
}

impl PointCloud {
    pub fn new(coords: Tensor, normals: Option<Tensor>, label: usize) -> Result<Self> {
        if coords.ndim() != 2 {
            return Err(Error::shape("PointCloud", coords.shape(), &[0, 0]));
        }
        if coords.dim(0) == 0 {
            return Err(Error::EmptyCloud);
        }
        if let Some(n) = &normals {
            if n.shape() != [coords.dim(0), coords.dim(1)] {
                return Err(Error::shape("PointCloud normals", n.shape(), coords.shape()));
            }
        }
        Ok(Self { coords, normals, label })
    }

    pub fn len(&self) -> usize {
        self.coords.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.dim(1)
    }

    /// Columns the network sees per point: coordinates, then normals if kept.
    pub fn features(&self, with_normals: bool) -> usize {
        self.dim() * if with_normals && self.normals.is_some() { 2 } else { 1 }
    }

    /// Keeps the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let take = |t: &Tensor| {
            let w = t.cols();
            let mut data = Vec::with_capacity(rows.len() * w);
            for &r in rows {
                data.extend_from_slice(t.row(r));
            }
            Tensor::new(vec![rows.len(), w], data).expect("row count matches")
        };
        Self {
            coords: take(&self.coords),
            normals: self.normals.as_ref().map(take),
            label: self.label,
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        let d = self.dim();
        let mut c = vec![0.0; d];
        for r in 0..self.len() {
            for (a, v) in c.iter_mut().zip(self.coords.row(r)) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.len())
            .map(|r| self.coords.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Centers on the centroid and scales the farthest point to norm 1.
    /// Each step is skipped when already satisfied, so the operation is idempotent.
    pub fn normalize(&mut self) {
        let c = self.centroid();
        if c.iter().map(|v| v * v).sum::<f64>().sqrt() > NORMALIZED_TOL {
            let d = self.dim();
            for (i, v) in self.coords.data_mut().iter_mut().enumerate() {
                *v -= c[i % d];
            }
        }
        let m = self.max_norm();
        if m > 0.0 && (m - 1.0).abs() > NORMALIZED_TOL {
            self.coords.data_mut().iter_mut().for_each(|v| *v /= m);
        }
    }

    /// Writes the network input rows of this cloud into `out` (`N × features`).
    pub(crate) fn write_features(&self, with_normals: bool, out: &mut [f64]) {
        let d = self.dim();
        let normals = self.normals.as_ref().filter(|_| with_normals);
        let w = if normals.is_some() { 2 * d } else { d };
        for r in 0..self.len() {
            let row = &mut out[r * w..(r + 1) * w];
            row[..d].copy_from_slice(self.coords.row(r));
            if let Some(n) = normals {
                row[d..].copy_from_slice(n.row(r));
            }
        }
    }
}

/// Stacks clouds of equal size into a `[B, N, features]` batch.
pub fn batch_tensor(clouds: &[&PointCloud], with_normals: bool) -> Result<Tensor> {
    let first = clouds.first().ok_or(Error::EmptyCloud)?;
    let (n, w) = (first.len(), first.features(with_normals));
    let mut data = vec![0.0; clouds.len() * n * w];
    for (i, c) in clouds.iter().enumerate() {
        if c.len() != n || c.features(with_normals) != w {
            return Err(Error::shape("batch_tensor", &[c.len(), c.features(with_normals)], &[n, w]));
        }
        c.write_features(with_normals, &mut data[i * n * w..(i + 1) * n * w]);
    }
    Tensor::new(vec![clouds.len(), n, w], data)
}
