use std::ops::Range;

use crate::error::{Error, Result};
use crate::kernels::KernelFn;
use crate::tensor::{Param, Tensor};

/// Smallest kernel size kept by the optimizer.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// `M` kernels over one `d`-dimensional input attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfChannel {
    pub kernel: KernelFn,
    /// `[M, d]`
    pub centers: Param,
    /// `[M]`
    pub sigmas: Param,
}

impl RbfChannel {
    pub fn new(name: &str, kernel: KernelFn, centers: Tensor, sigmas: Tensor) -> Result<Self> {
        if centers.ndim() != 2 || sigmas.shape() != [centers.dim(0)] {
            return Err(Error::shape("RbfChannel::new", centers.shape(), sigmas.shape()));
        }
        if let Some(s) = sigmas.data().iter().find(|s| !(**s >= SIGMA_FLOOR)) {
            return Err(Error::InvalidParameter(format!(
                "kernel size {s} below floor {SIGMA_FLOOR}"
            )));
        }
        Ok(Self {
            kernel,
            centers: Param::new(format!("{name}.centers"), centers),
            sigmas: Param::new(format!("{name}.sigmas"), sigmas).with_lower_bound(SIGMA_FLOOR),
        })
    }

    pub fn kernels(&self) -> usize {
        self.centers.value.dim(0)
    }

    pub fn dim(&self) -> usize {
        self.centers.value.dim(1)
    }

    /// `M·(d + 1)`
    pub fn param_count(&self) -> usize {
        self.kernels() * (self.dim() + 1)
    }

    pub fn set_trainable(&mut self, centers: bool, sigmas: bool) {
        self.centers.trainable = centers;
        self.sigmas.trainable = sigmas;
    }

    /// Writes activations for `rows` input rows. Row `r` reads
    /// `input[r·in_stride + in_offset ..][..d]` and writes
    /// `out[r·out_stride + out_offset ..][..M]`.
    pub(crate) fn forward_rows(
        &self,
        input: &[f64],
        in_stride: usize,
        in_offset: usize,
        out: &mut [f64],
        out_stride: usize,
        out_offset: usize,
        rows: usize,
    ) {
        match self.kernel {
            KernelFn::Gaussian => self.sweep(input, in_stride, in_offset, out, out_stride, out_offset, rows, |r2, s| {
                KernelFn::Gaussian.value(r2, s)
            }),
            KernelFn::Markov => self.sweep(input, in_stride, in_offset, out, out_stride, out_offset, rows, |r2, s| {
                KernelFn::Markov.value(r2, s)
            }),
            KernelFn::InverseMultiquadratic => {
                self.sweep(input, in_stride, in_offset, out, out_stride, out_offset, rows, |r2, s| {
                    KernelFn::InverseMultiquadratic.value(r2, s)
                })
            }
            KernelFn::Multiquadratic => {
                self.sweep(input, in_stride, in_offset, out, out_stride, out_offset, rows, |r2, s| {
                    KernelFn::Multiquadratic.value(r2, s)
                })
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    #[inline(always)]
    fn sweep(
        &self,
        input: &[f64],
        in_stride: usize,
        in_offset: usize,
        out: &mut [f64],
        out_stride: usize,
        out_offset: usize,
        rows: usize,
        f: impl Fn(f64, f64) -> f64,
    ) {
        let (m, d) = (self.kernels(), self.dim());
        let centers = self.centers.value.data();
        let sigmas = self.sigmas.value.data();
        for r in 0..rows {
            let x = &input[r * in_stride + in_offset..][..d];
            let o = &mut out[r * out_stride + out_offset..][..m];
            for (k, (ov, &s)) in o.iter_mut().zip(sigmas).enumerate() {
                let c = &centers[k * d..(k + 1) * d];
                let mut r2 = 0.0;
                for (xi, ci) in x.iter().zip(c) {
                    let t = xi - ci;
                    r2 += t * t;
                }
                *ov = f(r2, s);
            }
        }
    }

    /// Chain rule through the kernel partials. Frozen groups accumulate
    /// nothing; the point gradient is added into
    /// `grad_input[r·in_stride + in_offset ..]` when requested.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_rows(
        &mut self,
        input: &[f64],
        in_stride: usize,
        in_offset: usize,
        grad_out: &[f64],
        out_stride: usize,
        out_offset: usize,
        rows: usize,
        mut grad_input: Option<&mut [f64]>,
    ) {
        let (want_c, want_s) = (self.centers.trainable, self.sigmas.trainable);
        if !want_c && !want_s && grad_input.is_none() {
            return;
        }
        let (m, d) = (self.kernels(), self.dim());
        let kernel = self.kernel;
        let centers = self.centers.value.data();
        let sigmas = self.sigmas.value.data();
        let gc = self.centers.grad.data_mut();
        let gs = self.sigmas.grad.data_mut();
        let mut diff = vec![0.0; d];
        for r in 0..rows {
            let x = &input[r * in_stride + in_offset..][..d];
            let g = &grad_out[r * out_stride + out_offset..][..m];
            for k in 0..m {
                let gk = g[k];
                if gk == 0.0 {
                    continue;
                }
                let c = &centers[k * d..(k + 1) * d];
                let mut r2 = 0.0;
                for i in 0..d {
                    diff[i] = x[i] - c[i];
                    r2 += diff[i] * diff[i];
                }
                let (_, dr2, ds) = kernel.partials(r2, sigmas[k]);
                let coef = -2.0 * dr2 * gk;
                if want_c {
                    for i in 0..d {
                        gc[k * d + i] += coef * diff[i];
                    }
                }
                if want_s {
                    gs[k] += gk * ds;
                }
                if let Some(gi) = grad_input.as_deref_mut() {
                    let gx = &mut gi[r * in_stride + in_offset..][..d];
                    for i in 0..d {
                        gx[i] -= coef * diff[i];
                    }
                }
            }
        }
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.centers, &mut self.sigmas]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.centers, &self.sigmas]
    }
}

/// Activation map `[B, N, M]` of one channel for points `[B, N, d]`.
pub fn rbf_forward(points: &Tensor, ch: &RbfChannel) -> Result<Tensor> {
    if points.ndim() != 3 || points.dim(2) != ch.dim() {
        return Err(Error::shape("rbf_forward", points.shape(), ch.centers.value.shape()));
    }
    let (b, n, m) = (points.dim(0), points.dim(1), ch.kernels());
    let mut out = Tensor::zeros(&[b, n, m]);
    ch.forward_rows(points.data(), ch.dim(), 0, out.data_mut(), m, 0, b * n);
    Ok(out)
}

/// Accumulates center and size gradients and returns the point gradient.
pub fn rbf_backward(points: &Tensor, ch: &mut RbfChannel, grad_out: &Tensor) -> Result<Tensor> {
    let (d, m) = (ch.dim(), ch.kernels());
    if points.ndim() != 3 || points.dim(2) != d {
        return Err(Error::shape("rbf_backward", points.shape(), ch.centers.value.shape()));
    }
    let rows = points.dim(0) * points.dim(1);
    if grad_out.shape() != [points.dim(0), points.dim(1), m] {
        return Err(Error::shape("rbf_backward", grad_out.shape(), &[points.dim(0), points.dim(1), m]));
    }
    let mut gp = Tensor::zeros(points.shape());
    ch.backward_rows(points.data(), d, 0, grad_out.data(), m, 0, rows, Some(gp.data_mut()));
    Ok(gp)
}

/// Independent kernel channels bound to disjoint column slices of the input;
/// their activation maps are concatenated in channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelRbf {
    pub channels: Vec<RbfChannel>,
    pub slices: Vec<Range<usize>>,
}

impl MultiChannelRbf {
    pub fn new(channels: Vec<RbfChannel>, slices: Vec<Range<usize>>) -> Result<Self> {
        if channels.len() != slices.len() {
            return Err(Error::InvalidParameter(format!(
                "{} channels but {} attribute slices",
                channels.len(),
                slices.len()
            )));
        }
        for (i, (ch, s)) in channels.iter().zip(&slices).enumerate() {
            if s.len() != ch.dim() {
                return Err(Error::InvalidParameter(format!(
                    "channel {i}: slice {s:?} has width {} but kernels are {}-dimensional",
                    s.len(),
                    ch.dim()
                )));
            }
        }
        Ok(Self { channels, slices })
    }

    pub fn width(&self) -> usize {
        self.channels.iter().map(RbfChannel::kernels).sum()
    }

    pub fn param_count(&self) -> usize {
        self.channels.iter().map(RbfChannel::param_count).sum()
    }

    fn check_bounds(&self, cols: usize) -> Result<()> {
        for (i, s) in self.slices.iter().enumerate() {
            if s.end > cols {
                return Err(Error::InvalidParameter(format!(
                    "channel {i}: slice {s:?} out of bounds for {cols} input columns"
                )));
            }
        }
        Ok(())
    }

    /// `[B, N, D] → [B, N, ΣM]`
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        if input.ndim() != 3 {
            return Err(Error::shape("multichannel_forward", input.shape(), &[0, 0, 0]));
        }
        self.check_bounds(input.dim(2))?;
        let (b, n, cols) = (input.dim(0), input.dim(1), input.dim(2));
        let width = self.width();
        let mut out = Tensor::zeros(&[b, n, width]);
        let mut off = 0;
        for (ch, s) in self.channels.iter().zip(&self.slices) {
            ch.forward_rows(input.data(), cols, s.start, out.data_mut(), width, off, b * n);
            off += ch.kernels();
        }
        Ok(out)
    }

    /// Returns the input gradient when `need_input_grad` is set.
    pub fn backward(
        &mut self,
        input: &Tensor,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let width = self.width();
        if input.ndim() != 3 || grad_out.shape() != [input.dim(0), input.dim(1), width] {
            return Err(Error::shape("multichannel_backward", grad_out.shape(), input.shape()));
        }
        self.check_bounds(input.dim(2))?;
        let (rows, cols) = (input.dim(0) * input.dim(1), input.dim(2));
        let mut gi = need_input_grad.then(|| Tensor::zeros(input.shape()));
        let mut off = 0;
        for (ch, s) in self.channels.iter_mut().zip(&self.slices) {
            ch.backward_rows(
                input.data(),
                cols,
                s.start,
                grad_out.data(),
                width,
                off,
                rows,
                gi.as_mut().map(|t| t.data_mut()),
            );
            off += ch.kernels();
        }
        Ok(gi)
    }

    pub fn set_trainable(&mut self, centers: bool, sigmas: bool) {
        self.channels.iter_mut().for_each(|c| c.set_trainable(centers, sigmas));
    }
}
