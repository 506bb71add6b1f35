use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check(points: &Tensor, transform: &Tensor) -> Result<(usize, usize, usize)> {
    if points.ndim() != 3 || transform.ndim() != 3 {
        return Err(Error::shape("apply_transform", points.shape(), transform.shape()));
    }
    let (b, n, d) = (points.dim(0), points.dim(1), points.dim(2));
    if transform.shape() != [b, d, d] {
        return Err(Error::shape("apply_transform", points.shape(), transform.shape()));
    }
    Ok((b, n, d))
}

/// `out[b, n, :] = points[b, n, :] · T[b]` for points `[B, N, d]` and
/// transforms `[B, d, d]`.
pub fn apply_transform(points: &Tensor, transform: &Tensor) -> Result<Tensor> {
    let (b, n, d) = check(points, transform)?;
    let mut out = Tensor::zeros(points.shape());
    let (p, t, o) = (points.data(), transform.data(), out.data_mut());
    for bi in 0..b {
        let tb = &t[bi * d * d..(bi + 1) * d * d];
        for ni in 0..n {
            let row = (bi * n + ni) * d;
            for j in 0..d {
                let mut acc = 0.0;
                for i in 0..d {
                    acc += p[row + i] * tb[i * d + j];
                }
                o[row + j] = acc;
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_points, grad_transform)`.
pub fn apply_transform_backward(
    points: &Tensor,
    transform: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (b, n, d) = check(points, transform)?;
    if grad_out.shape() != points.shape() {
        return Err(Error::shape("apply_transform_backward", grad_out.shape(), points.shape()));
    }
    let mut gp = Tensor::zeros(points.shape());
    let mut gt = Tensor::zeros(transform.shape());
    let (p, t, g) = (points.data(), transform.data(), grad_out.data());
    for bi in 0..b {
        let tb = &t[bi * d * d..(bi + 1) * d * d];
        let gtb = &mut gt.data_mut()[bi * d * d..(bi + 1) * d * d];
        for ni in 0..n {
            let row = (bi * n + ni) * d;
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += g[row + j] * tb[i * d + j];
                    gtb[i * d + j] += p[row + i] * g[row + j];
                }
                gp.data_mut()[row + i] = acc;
            }
        }
    }
    Ok((gp, gt))
}
