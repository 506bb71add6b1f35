use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    relu_inplace(&mut y);
    y
}

fn relu_inplace(x: &mut Tensor) {
    for v in x.data_mut() {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
}

/// Passes gradient where the forward input (or output) was positive. The
/// subgradient at exactly zero is 0.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if x.shape() != grad_out.shape() {
        return Err(Error::shape("relu_backward", x.shape(), grad_out.shape()));
    }
    let mut g = grad_out.clone();
    relu_backward_inplace(x, &mut g);
    Ok(g)
}

fn relu_backward_inplace(activation: &Tensor, grad: &mut Tensor) {
    for (g, &a) in grad.data_mut().iter_mut().zip(activation.data()) {
        if !(a > 0.0) {
            *g = 0.0;
        }
    }
}

/// Inverted dropout: kept activations are scaled by `1 / keep_probability`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub keep_probability: f64,
}

/// Per-element multipliers drawn by a train-mode dropout pass.
#[derive(Debug, Clone)]
pub struct DropoutMask(Vec<f64>);

impl Dropout {
    pub fn new(keep_probability: f64) -> Result<Self> {
        if !(keep_probability > 0.0 && keep_probability <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "keep probability {keep_probability} not in (0, 1]"
            )));
        }
        Ok(Self { keep_probability })
    }

    pub fn forward_train<R: Rng + ?Sized>(&self, x: &mut Tensor, rng: &mut R) -> DropoutMask {
        let p = self.keep_probability;
        let scale = 1.0 / p;
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.random::<f64>() < p { scale } else { 0.0 })
            .collect();
        for (v, m) in x.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        DropoutMask(mask)
    }

    pub fn backward(&self, mask: &DropoutMask, grad: &mut Tensor) {
        for (g, m) in grad.data_mut().iter_mut().zip(&mask.0) {
            *g *= m;
        }
    }
}
