use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::tensor::{gemm, Op, Param, Tensor};

/// Fully connected layer `y = x·W + b` with `W` stored as `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    /// He-uniform weights and zero bias.
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / input.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let weight = Tensor::from_fn(&[input, output], |_| dist.sample(rng));
        Self::from_parts(name, weight, Tensor::zeros(&[output]))
    }

    pub fn from_parts(name: &str, weight: Tensor, bias: Tensor) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), bias),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.dim(1)
    }

    /// `x` is `[rows, in]` (any leading shape flattened to rows).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (input, output) = (self.in_features(), self.out_features());
        if x.cols() != input {
            return Err(Error::shape("linear_forward", x.shape(), self.weight.value.shape()));
        }
        let rows = x.rows();
        let mut out = Vec::with_capacity(rows * output);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.value.data());
        }
        gemm(rows, input, output, x.data(), Op::N, self.weight.value.data(), Op::N, 1.0, &mut out);
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = output;
        Tensor::new(shape, out)
    }

    /// Accumulates `dW += xᵀ·g` and `db += Σ_rows g`, returns `g·Wᵀ`.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let grad_x = self.backward_opt(x, grad_out, true)?;
        Ok(grad_x.expect("input gradient requested"))
    }

    /// As [`Linear::backward`]; pass `need_input_grad = false` when the input
    /// is data and its gradient would be discarded.
    pub fn backward_opt(
        &mut self,
        x: &Tensor,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let (input, output) = (self.in_features(), self.out_features());
        if x.cols() != input || grad_out.cols() != output || x.rows() != grad_out.rows() {
            return Err(Error::shape("linear_backward", x.shape(), grad_out.shape()));
        }
        let rows = x.rows();
        gemm(
            input,
            rows,
            output,
            x.data(),
            Op::T,
            grad_out.data(),
            Op::N,
            1.0,
            self.weight.grad.data_mut(),
        );
        let db = self.bias.grad.data_mut();
        for r in 0..rows {
            for (d, g) in db.iter_mut().zip(grad_out.row(r)) {
                *d += g;
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        let mut gx = vec![0.0; rows * input];
        gemm(
            rows,
            output,
            input,
            grad_out.data(),
            Op::N,
            self.weight.value.data(),
            Op::T,
            0.0,
            &mut gx,
        );
        Tensor::new(x.shape().to_vec(), gx).map(Some)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(w: Vec<f64>, input: usize, output: usize, b: Vec<f64>) -> Linear {
        Linear::from_parts(
            "l",
            Tensor::new(vec![input, output], w).unwrap(),
            Tensor::new(vec![output], b).unwrap(),
        )
    }

    #[test]
    fn identity_weight() {
        let l = layer(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0]);
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(l.forward(&x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn sum_with_bias() {
        let l = layer(vec![1.0, 1.0], 2, 1, vec![0.5]);
        let x = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(l.forward(&x).unwrap().data(), &[2.5]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let l = layer(vec![1.0; 6], 3, 2, vec![0.0; 2]);
        let x = Tensor::zeros(&[1, 2]);
        let msg = l.forward(&x).unwrap_err().to_string();
        assert!(msg.contains("[1, 2]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn scalar_chain_rule() {
        let mut l = layer(vec![3.0], 1, 1, vec![0.0]);
        let x = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let g = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let gx = l.backward(&x, &g).unwrap();
        assert_eq!(l.weight.grad.data(), &[2.0]);
        assert_eq!(l.bias.grad.data(), &[1.0]);
        assert_eq!(gx.data(), &[3.0]);
    }

    #[test]
    fn zero_upstream_leaves_grads() {
        let mut l = layer((0..6).map(f64::from).collect(), 2, 3, vec![0.1, 0.2, 0.3]);
        let x = Tensor::new(vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let gx = l.backward(&x, &Tensor::zeros(&[2, 3])).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(l.weight.grad.data().iter().all(|&v| v == 0.0));
        assert!(l.bias.grad.data().iter().all(|&v| v == 0.0));
    }
}
