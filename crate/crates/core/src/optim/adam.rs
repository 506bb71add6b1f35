use crate::error::{Error, Result};
use crate::tensor::{Param, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Bias-corrected Adam over a fixed, ordered list of parameter tensors.
/// Moments are indexed by position in that list and created on first use.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Option<Tensor>>,
    second: Vec<Option<Tensor>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new()
    }
}

impl AdamState {
    pub fn new() -> Self {
        Self {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// First moment of parameter `i`, if it has ever been updated.
    pub fn first_moment(&self, i: usize) -> Option<&Tensor> {
        self.first.get(i).and_then(Option::as_ref)
    }

    pub fn second_moment(&self, i: usize) -> Option<&Tensor> {
        self.second.get(i).and_then(Option::as_ref)
    }

    /// One update of every trainable parameter with learning rate `lr`.
    /// Frozen parameters and their moments are left untouched. Gradients are
    /// validated before anything changes, so an error leaves the state intact.
    pub fn update(&mut self, params: &mut [&mut Param], lr: f64) -> Result<()> {
        for p in params.iter() {
            if p.trainable && !p.grad.all_finite() {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
            if p.grad.shape() != p.value.shape() {
                return Err(Error::shape("adam", p.grad.shape(), p.value.shape()));
            }
        }
        if self.first.len() < params.len() {
            self.first.resize(params.len(), None);
            self.second.resize(params.len(), None);
        }
        for (i, p) in params.iter().enumerate() {
            if let Some(m) = &self.first[i] {
                m.expect_shape("adam moments", p.value.shape())?;
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (i, p) in params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let m = self.first[i].get_or_insert_with(|| Tensor::zeros(p.value.shape()));
            let v = self.second[i].get_or_insert_with(|| Tensor::zeros(p.value.shape()));
            let (m, v) = (m.data_mut(), v.data_mut());
            let bound = p.lower_bound;
            let g = p.grad.data();
            let w = p.value.data_mut();
            for k in 0..w.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                w[k] -= lr * mhat / (vhat.sqrt() + eps);
                if let Some(b) = bound {
                    if w[k] < b {
                        w[k] = b;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64, g: f64) -> Param {
        let mut p = Param::new("w", Tensor::filled(&[1], v));
        p.grad = Tensor::filled(&[1], g);
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(1.0, 1.0);
        let mut adam = AdamState::new();
        adam.update(&mut [&mut p], 0.01).unwrap();
        let expected = 1.0 - 0.01 * 1.0 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut p = scalar(0.3, 0.0);
        AdamState::new().update(&mut [&mut p], 0.1).unwrap();
        assert_eq!(p.value.data()[0], 0.3);
    }

    #[test]
    fn frozen_parameters_keep_values_and_have_no_moments() {
        let mut a = scalar(1.0, 1.0);
        let mut b = scalar(1.0, 1.0);
        b.trainable = false;
        let mut adam = AdamState::new();
        adam.update(&mut [&mut a, &mut b], 0.1).unwrap();
        assert_eq!(b.value.data()[0], 1.0);
        assert!(adam.first_moment(1).is_none());
        assert!(adam.first_moment(0).is_some());
    }

    #[test]
    fn lower_bound_is_enforced() {
        let mut p = scalar(0.0011, 1.0).with_lower_bound(1e-3);
        AdamState::new().update(&mut [&mut p], 0.5).unwrap();
        assert_eq!(p.value.data()[0], 1e-3);
    }

    #[test]
    fn non_finite_gradient_names_the_group() {
        let mut ok = scalar(1.0, 1.0);
        let mut bad = scalar(1.0, f64::NAN);
        bad.name = "rbf0.sigmas".into();
        let mut adam = AdamState::new();
        match adam.update(&mut [&mut ok, &mut bad], 0.1) {
            Err(Error::NonFiniteGradient(n)) => assert_eq!(n, "rbf0.sigmas"),
            other => panic!("{other:?}"),
        }
        assert_eq!(ok.value.data()[0], 1.0);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn quadratic_descends_monotonically_after_second_step() {
        // f(w) = (w − 3)²
        let mut p = scalar(0.0, 0.0);
        let mut adam = AdamState::new();
        let mut losses = Vec::new();
        for _ in 0..10 {
            let w = p.value.data()[0];
            losses.push((w - 3.0) * (w - 3.0));
            p.grad = Tensor::filled(&[1], 2.0 * (w - 3.0));
            adam.update(&mut [&mut p], 0.1).unwrap();
        }
        assert!(losses[2..].windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }
}
