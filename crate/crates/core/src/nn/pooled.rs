//! `linear → batch norm → ReLU → max over points`, fused.
//!
//! The pooled gradient reaches one row per `(cloud, feature)`, so the backward
//! pass never forms the dense `[B·N, F]` gradient. What batch norm adds to it
//! is structured: with column-centered inputs `Xc`, `x̂ = Xc·W·diag(s)`, so the
//! large products collapse into `in × in` Gram matrices.

use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Linear};
use crate::tensor::{gemm, Op, Tensor};

/// Train-mode state of a fused block. Only pooled winners are kept.
#[derive(Debug, Clone)]
pub struct PooledCache {
    input: Tensor,
    batch: usize,
    points: usize,
    inv_std: Vec<f64>,
    /// Winning point per `(cloud, feature)`; ties go to the lowest index.
    argmax: Vec<usize>,
    /// `x̂` at the winner.
    h_at: Vec<f64>,
    /// The pooled value is positive, so ReLU passes its gradient.
    active: Vec<bool>,
}

/// The fused backward costs about `in/out` of the dense one.
pub fn fusion_pays(linear: &Linear) -> bool {
    linear.out_features() >= linear.in_features()
}

fn check(linear: &Linear, x: &Tensor, batch: usize, points: usize) -> Result<()> {
    if x.ndim() != 2 || x.rows() != batch * points || x.cols() != linear.in_features() {
        return Err(Error::shape("pooled_block", x.shape(), &[batch * points, linear.in_features()]));
    }
    if points == 0 {
        return Err(Error::EmptyCloud);
    }
    Ok(())
}

/// Eval mode; bit-identical to the unfused layers.
pub fn pooled_block_infer(linear: &Linear, bn: &BatchNorm, x: &Tensor, batch: usize, points: usize) -> Result<Tensor> {
    check(linear, x, batch, points)?;
    let z = linear.forward(x)?;
    let (scale, shift) = bn.eval_affine();
    let f = z.cols();
    let mut out = Tensor::zeros(&[batch, f]);
    for b in 0..batch {
        let o = &mut out.data_mut()[b * f..(b + 1) * f];
        for p in 0..points {
            let zr = z.row(b * points + p);
            for j in 0..f {
                let y = zr[j] * scale[j] + shift[j];
                let y = if y > 0.0 { y } else { 0.0 };
                if p == 0 || y > o[j] {
                    o[j] = y;
                }
            }
        }
    }
    Ok(out)
}

/// Train mode on `[B·N, in]` rows; returns `[B, out]` and updates running
/// statistics. Bit-identical to the unfused layers.
pub fn pooled_block_train(
    linear: &Linear,
    bn: &mut BatchNorm,
    x: Tensor,
    batch: usize,
    points: usize,
) -> Result<(Tensor, PooledCache)> {
    check(linear, &x, batch, points)?;
    let z = linear.forward(&x)?;
    let (mean, inv_std) = bn.batch_stats(&z)?;
    let f = z.cols();
    let (gamma, beta) = (bn.gamma.value.data(), bn.beta.value.data());
    let mut out = Tensor::zeros(&[batch, f]);
    let mut argmax = vec![0usize; batch * f];
    let mut h_at = vec![0.0; batch * f];
    for b in 0..batch {
        let span = b * f..(b + 1) * f;
        let o = &mut out.data_mut()[span.clone()];
        let (ix, ha) = (&mut argmax[span.clone()], &mut h_at[span]);
        for p in 0..points {
            let zr = z.row(b * points + p);
            for j in 0..f {
                let h = (zr[j] - mean[j]) * inv_std[j];
                let y = gamma[j] * h + beta[j];
                let y = if y > 0.0 { y } else { 0.0 };
                if p == 0 || y > o[j] {
                    o[j] = y;
                    ix[j] = p;
                    ha[j] = h;
                }
            }
        }
    }
    let active = out.data().iter().map(|&v| v > 0.0).collect();
    Ok((
        out,
        PooledCache {
            input: x,
            batch,
            points,
            inv_std,
            argmax,
            h_at,
            active,
        },
    ))
}

/// Accumulates linear and batch-norm gradients from `dL/dpooled`; returns the
/// `[B·N, in]` input gradient when requested.
pub fn pooled_block_backward(
    linear: &mut Linear,
    bn: &mut BatchNorm,
    cache: &PooledCache,
    grad: &Tensor,
    need_input_grad: bool,
) -> Result<Option<Tensor>> {
    let (batch, points) = (cache.batch, cache.points);
    let (k, f) = (linear.in_features(), linear.out_features());
    if grad.shape() != [batch, f] {
        return Err(Error::shape("pooled_block_backward", grad.shape(), &[batch, f]));
    }
    let rows = batch * points;
    let n = rows as f64;
    let x = &cache.input;

    // Batch-norm backward restricted to the sparse upstream gradient.
    let mut sum_g = vec![0.0; f];
    let mut sum_gx = vec![0.0; f];
    for (i, &g) in grad.data().iter().enumerate() {
        if cache.active[i] {
            sum_g[i % f] += g;
            sum_gx[i % f] += g * cache.h_at[i];
        }
    }
    if bn.gamma.trainable {
        for (d, s) in bn.gamma.grad.data_mut().iter_mut().zip(&sum_gx) {
            *d += s;
        }
    }
    if bn.beta.trainable {
        for (d, s) in bn.beta.grad.data_mut().iter_mut().zip(&sum_g) {
            *d += s;
        }
    }
    // dL/dz = Sc − 1·uᵀ − x̂·diag(v), with Sc sparse.
    let gamma = bn.gamma.value.data();
    let coef: Vec<f64> = (0..f).map(|j| gamma[j] * cache.inv_std[j] / n).collect();
    let u: Vec<f64> = (0..f).map(|j| coef[j] * sum_g[j]).collect();
    let w: Vec<f64> = (0..f).map(|j| cache.inv_std[j] * coef[j] * sum_gx[j]).collect();
    let sc: Vec<f64> = grad
        .data()
        .iter()
        .enumerate()
        .map(|(i, &g)| if cache.active[i] { n * coef[i % f] * g } else { 0.0 })
        .collect();

    let mut xs = vec![0.0; k];
    for r in 0..rows {
        for (s, v) in xs.iter_mut().zip(x.row(r)) {
            *s += v;
        }
    }
    let mut xc = x.data().to_vec();
    for row in xc.chunks_exact_mut(k) {
        for (v, s) in row.iter_mut().zip(&xs) {
            *v -= s / n;
        }
    }
    let mut cov = vec![0.0; k * k];
    gemm(k, rows, k, &xc, Op::T, &xc, Op::N, 0.0, &mut cov);

    // dW = Xᵀ·Sc − xs·uᵀ − Cov·W·diag(w)
    let wv = linear.weight.value.data().to_vec();
    let mut cw = vec![0.0; k * f];
    gemm(k, k, f, &cov, Op::N, &wv, Op::N, 0.0, &mut cw);
    let dw = linear.weight.grad.data_mut();
    for a in 0..k {
        for j in 0..f {
            dw[a * f + j] -= xs[a] * u[j] + cw[a * f + j] * w[j];
        }
    }
    let mut xt = vec![0.0; k * points];
    for b in 0..batch {
        // One cloud transposed to `[in, N]`, so each gather stays in one row.
        for p in 0..points {
            for (a, v) in x.row(b * points + p).iter().enumerate() {
                xt[a * points + p] = *v;
            }
        }
        let (ix, s) = (&cache.argmax[b * f..(b + 1) * f], &sc[b * f..(b + 1) * f]);
        for a in 0..k {
            let (xa, da) = (&xt[a * points..(a + 1) * points], &mut dw[a * f..(a + 1) * f]);
            for j in 0..f {
                da[j] += xa[ix[j]] * s[j];
            }
        }
    }
    let db = linear.bias.grad.data_mut();
    for j in 0..f {
        db[j] -= n * u[j];
    }
    for row in sc.chunks_exact(f) {
        for (d, s) in db.iter_mut().zip(row) {
            *d += s;
        }
    }
    if !need_input_grad {
        return Ok(None);
    }

    // dX = Sc·Wᵀ − 1·(W·u)ᵀ − Xc·W·diag(w)·Wᵀ
    let neg_wd: Vec<f64> = wv.iter().enumerate().map(|(i, v)| -v * w[i % f]).collect();
    let mut kk = vec![0.0; k * k];
    gemm(k, f, k, &neg_wd, Op::N, &wv, Op::T, 0.0, &mut kk);
    let mut dx = vec![0.0; rows * k];
    gemm(rows, k, k, &xc, Op::N, &kk, Op::N, 0.0, &mut dx);
    drop(xc);
    let wu: Vec<f64> = wv.chunks_exact(f).map(|r| r.iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
    for row in dx.chunks_exact_mut(k) {
        for (d, s) in row.iter_mut().zip(&wu) {
            *d -= s;
        }
    }
    let mut wt = vec![0.0; f * k];
    for a in 0..k {
        for j in 0..f {
            wt[j * k + a] = wv[a * f + j];
        }
    }
    for b in 0..batch {
        for j in 0..f {
            let s = sc[b * f + j];
            if s != 0.0 {
                let r = b * points + cache.argmax[b * f + j];
                for (d, v) in dx[r * k..(r + 1) * k].iter_mut().zip(&wt[j * k..(j + 1) * k]) {
                    *d += s * v;
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), dx).map(Some)
}
