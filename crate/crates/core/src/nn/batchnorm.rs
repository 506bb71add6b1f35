use crate::error::{Error, Result};
use crate::tensor::{Param, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Batch normalization over every leading axis, one statistic per feature
/// (the last axis). For per-point features `[B, N, F]` the statistics pool the
/// batch and point axes together.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Activations saved by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(name: &str, features: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::filled(&[features], 1.0)),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[features])),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.value.len()
    }

    fn check(&self, op: &'static str, x: &Tensor) -> Result<()> {
        if x.cols() != self.features() {
            return Err(Error::shape(op, x.shape(), self.gamma.value.shape()));
        }
        Ok(())
    }

    /// Normalizes with batch statistics and updates the running estimates.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BnCache)> {
        let cache = self.normalize(x.clone())?;
        let mut y = cache.x_hat.clone();
        self.affine(&mut y, false);
        Ok((y, cache))
    }

    /// `relu(forward_train(z))` without a separate activation buffer; pair it
    /// with [`BatchNorm::backward_relu`], which recomputes the ReLU mask.
    pub fn forward_train_relu(&mut self, z: Tensor) -> Result<(Tensor, BnCache)> {
        let cache = self.normalize(z)?;
        let mut y = cache.x_hat.clone();
        self.affine(&mut y, true);
        Ok((y, cache))
    }

    /// Consumes `z`, turning it into `x̂` in place.
    fn normalize(&mut self, mut z: Tensor) -> Result<BnCache> {
        let (mean, inv_std) = self.batch_stats(&z)?;
        for r in 0..z.rows() {
            for ((h, m), s) in z.row_mut(r).iter_mut().zip(&mean).zip(&inv_std) {
                *h = (*h - m) * s;
            }
        }
        Ok(BnCache { x_hat: z, inv_std })
    }

    /// Per-feature batch mean and `1/√(var + ε)`; folds them into the running
    /// estimates. `x̂ = (z − mean)·inv_std` reproduces the train-mode output.
    pub(crate) fn batch_stats(&mut self, z: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check("batchnorm_forward", z)?;
        let (rows, f) = (z.rows(), z.cols());
        if rows < 2 {
            return Err(Error::BatchTooSmall(rows));
        }
        let mut mean = vec![0.0; f];
        for r in 0..rows {
            for (m, v) in mean.iter_mut().zip(z.row(r)) {
                *m += v;
            }
        }
        let inv_rows = 1.0 / rows as f64;
        mean.iter_mut().for_each(|m| *m *= inv_rows);
        let mut var = vec![0.0; f];
        for r in 0..rows {
            for ((s, v), m) in var.iter_mut().zip(z.row(r)).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|s| *s *= inv_rows);
        let inv_std = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();

        let mo = self.momentum;
        for (rm, m) in self.running_mean.data_mut().iter_mut().zip(&mean) {
            *rm = mo * *rm + (1.0 - mo) * m;
        }
        for (rv, v) in self.running_var.data_mut().iter_mut().zip(&var) {
            *rv = mo * *rv + (1.0 - mo) * v;
        }
        Ok((mean, inv_std))
    }

    /// `γ·x̂ + β` in place, optionally clamped at zero.
    fn affine(&self, h: &mut Tensor, relu: bool) {
        let (gamma, beta) = (self.gamma.value.data(), self.beta.value.data());
        for r in 0..h.rows() {
            for ((v, g), b) in h.row_mut(r).iter_mut().zip(gamma).zip(beta) {
                let y = g * *v + b;
                *v = if relu && !(y > 0.0) { 0.0 } else { y };
            }
        }
    }

    /// Normalizes with the running statistics only; rows are independent.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.clone();
        self.eval_in_place(&mut y, false)?;
        Ok(y)
    }

    /// Eval-mode normalization, optionally followed by ReLU, in place.
    pub fn eval_in_place(&self, x: &mut Tensor, relu: bool) -> Result<()> {
        self.check("batchnorm_forward", x)?;
        let (scale, shift) = self.eval_affine();
        for r in 0..x.rows() {
            for ((v, a), b) in x.row_mut(r).iter_mut().zip(&scale).zip(&shift) {
                let y = *v * a + b;
                *v = if relu && !(y > 0.0) { 0.0 } else { y };
            }
        }
        Ok(())
    }

    /// Eval mode as `y = z·scale + shift`.
    pub(crate) fn eval_affine(&self) -> (Vec<f64>, Vec<f64>) {
        let (gamma, beta) = (self.gamma.value.data(), self.beta.value.data());
        let scale: Vec<f64> = (0..self.features())
            .map(|j| gamma[j] / (self.running_var.data()[j] + self.epsilon).sqrt())
            .collect();
        let shift = (0..self.features())
            .map(|j| beta[j] - self.running_mean.data()[j] * scale[j])
            .collect();
        (scale, shift)
    }

    /// Exact gradient of the train-mode output; accumulates `dγ` and `dβ`.
    pub fn backward(&mut self, cache: &BnCache, grad_out: &Tensor) -> Result<Tensor> {
        self.backward_in_place(cache, grad_out.clone(), false)
    }

    /// Gradient through [`BatchNorm::forward_train_relu`]. The ReLU mask is
    /// recomputed from `x̂` with the same arithmetic as the forward pass, so it
    /// matches bit for bit.
    pub fn backward_relu(&mut self, cache: &BnCache, grad_out: Tensor) -> Result<Tensor> {
        self.backward_in_place(cache, grad_out, true)
    }

    fn backward_in_place(&mut self, cache: &BnCache, mut grad: Tensor, relu: bool) -> Result<Tensor> {
        if grad.shape() != cache.x_hat.shape() {
            return Err(Error::shape("batchnorm_backward", grad.shape(), cache.x_hat.shape()));
        }
        let (rows, f) = (grad.rows(), grad.cols());
        let (gamma, beta) = (self.gamma.value.data(), self.beta.value.data());
        let mut sum_g = vec![0.0; f];
        let mut sum_gx = vec![0.0; f];
        for r in 0..rows {
            let (g, h) = (grad.row_mut(r), cache.x_hat.row(r));
            for j in 0..f {
                if relu && !(gamma[j] * h[j] + beta[j] > 0.0) {
                    g[j] = 0.0;
                }
                sum_g[j] += g[j];
                sum_gx[j] += g[j] * h[j];
            }
        }
        let n = rows as f64;
        let coef: Vec<f64> = (0..f).map(|j| gamma[j] * cache.inv_std[j] / n).collect();
        for r in 0..rows {
            let (g, h) = (grad.row_mut(r), cache.x_hat.row(r));
            for j in 0..f {
                g[j] = coef[j] * (n * g[j] - sum_g[j] - h[j] * sum_gx[j]);
            }
        }
        if self.gamma.trainable {
            for (d, s) in self.gamma.grad.data_mut().iter_mut().zip(&sum_gx) {
                *d += s;
            }
        }
        if self.beta.trainable {
            for (d, s) in self.beta.grad.data_mut().iter_mut().zip(&sum_g) {
                *d += s;
            }
        }
        Ok(grad)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.gamma, &self.beta]
    }
}
