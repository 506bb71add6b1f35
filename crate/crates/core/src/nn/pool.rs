use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Winning point index per `(batch, feature)` from a max pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Argmax {
    pub points: usize,
    pub indices: Vec<usize>,
}

/// Max over the point axis of `[B, N, F]`. Ties go to the lowest point index.
pub fn maxpool_points_forward(features: &Tensor) -> Result<(Tensor, Argmax)> {
    if features.ndim() != 3 {
        return Err(Error::shape("maxpool_points_forward", features.shape(), &[0, 0, 0]));
    }
    let (b, n, f) = (features.dim(0), features.dim(1), features.dim(2));
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut out = Tensor::zeros(&[b, f]);
    let mut idx = vec![0usize; b * f];
    let data = features.data();
    for bi in 0..b {
        let base = bi * n * f;
        let o = &mut out.data_mut()[bi * f..(bi + 1) * f];
        o.copy_from_slice(&data[base..base + f]);
        let ix = &mut idx[bi * f..(bi + 1) * f];
        for p in 1..n {
            let row = &data[base + p * f..base + (p + 1) * f];
            for j in 0..f {
                if row[j] > o[j] {
                    o[j] = row[j];
                    ix[j] = p;
                }
            }
        }
    }
    Ok((out, Argmax { points: n, indices: idx }))
}

/// Routes each pooled gradient back to its winning point.
pub fn maxpool_points_backward(grad_out: &Tensor, argmax: &Argmax) -> Result<Tensor> {
    if grad_out.ndim() != 2 || grad_out.len() != argmax.indices.len() {
        return Err(Error::shape(
            "maxpool_points_backward",
            grad_out.shape(),
            &[argmax.indices.len()],
        ));
    }
    let (b, f, n) = (grad_out.dim(0), grad_out.dim(1), argmax.points);
    let mut g = Tensor::zeros(&[b, n, f]);
    let gd = g.data_mut();
    for bi in 0..b {
        for j in 0..f {
            let p = argmax.indices[bi * f + j];
            gd[(bi * n + p) * f + j] = grad_out.data()[bi * f + j];
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_identity() {
        let x = Tensor::from_fn(&[2, 1, 3], |i| i as f64 - 2.0);
        let (y, am) = maxpool_points_forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
        let g = Tensor::from_fn(&[2, 3], |i| i as f64);
        assert_eq!(maxpool_points_backward(&g, &am).unwrap().data(), g.data());
    }

    #[test]
    fn increasing_index_picks_last() {
        let (n, f) = (5, 4);
        let x = Tensor::from_fn(&[1, n, f], |i| (i / f) as f64);
        let (y, am) = maxpool_points_forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == (n - 1) as f64));
        assert!(am.indices.iter().all(|&i| i == n - 1));
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let x = Tensor::filled(&[1, 4, 2], 1.0);
        let (_, am) = maxpool_points_forward(&x).unwrap();
        assert_eq!(am.indices, vec![0, 0]);
    }

    #[test]
    fn empty_cloud_is_an_error() {
        assert!(matches!(
            maxpool_points_forward(&Tensor::zeros(&[1, 0, 3])),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn zero_upstream_gives_zero() {
        let x = Tensor::from_fn(&[2, 3, 2], |i| (i as f64).sin());
        let (_, am) = maxpool_points_forward(&x).unwrap();
        let g = maxpool_points_backward(&Tensor::zeros(&[2, 2]), &am).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}
