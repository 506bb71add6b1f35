//! Radial basis kernel functions and their analytic partial derivatives.
//!
//! Every kernel is a function of `r² = ‖x − c‖²` and a positive scale `σ`.
//! For the multiquadratic kernel `σ` plays the role of the scaling constant ε,
//! so all four kernels share one parameterization.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Guard on `r` in the Markov center derivative, which is singular at `r = 0`.
pub const MARKOV_R_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFn {
    /// `exp(−r²/σ²)`
    Gaussian,
    /// `exp(−r/σ²)`
    Markov,
    /// `(1 + σ²r²)^(−1/2)`
    InverseMultiquadratic,
    /// `(1 + σ²r²)^(1/2)`, a global kernel
    Multiquadratic,
}

/// Kernel response with partials w.r.t. center, scale and input point.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEval {
    pub value: f64,
    pub d_center: Vec<f64>,
    pub d_sigma: f64,
    pub d_point: Vec<f64>,
}

impl KernelFn {
    pub const ALL: [KernelFn; 4] = [
        KernelFn::Gaussian,
        KernelFn::Markov,
        KernelFn::InverseMultiquadratic,
        KernelFn::Multiquadratic,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            KernelFn::Gaussian => "gaussian",
            KernelFn::Markov => "markov",
            KernelFn::InverseMultiquadratic => "imq",
            KernelFn::Multiquadratic => "mq",
        }
    }

    /// Local kernels peak at `r = 0` and decay with distance.
    pub fn is_local(self) -> bool {
        !matches!(self, KernelFn::Multiquadratic)
    }

    /// Response for a squared distance.
    #[inline]
    pub fn value(self, r2: f64, sigma: f64) -> f64 {
        match self {
            KernelFn::Gaussian => (-r2 / (sigma * sigma)).exp(),
            KernelFn::Markov => (-r2.sqrt() / (sigma * sigma)).exp(),
            KernelFn::InverseMultiquadratic => 1.0 / (1.0 + sigma * sigma * r2).sqrt(),
            KernelFn::Multiquadratic => (1.0 + sigma * sigma * r2).sqrt(),
        }
    }

    /// `(value, ∂value/∂r², ∂value/∂σ)`.
    ///
    /// The center gradient is `−2·∂value/∂r²·(x − c)` and the point gradient
    /// is its negation.
    #[inline]
    pub fn partials(self, r2: f64, sigma: f64) -> (f64, f64, f64) {
        let s2 = sigma * sigma;
        match self {
            KernelFn::Gaussian => {
                let v = (-r2 / s2).exp();
                (v, -v / s2, v * 2.0 * r2 / (s2 * sigma))
            }
            KernelFn::Markov => {
                let r = r2.sqrt();
                let v = (-r / s2).exp();
                let dr2 = -v / (2.0 * s2 * r.max(MARKOV_R_GUARD));
                (v, dr2, v * 2.0 * r / (s2 * sigma))
            }
            KernelFn::InverseMultiquadratic => {
                let q = 1.0 + s2 * r2;
                let v = 1.0 / q.sqrt();
                let v3 = v / q;
                (v, -0.5 * s2 * v3, -sigma * r2 * v3)
            }
            KernelFn::Multiquadratic => {
                let q = 1.0 + s2 * r2;
                let v = q.sqrt();
                (v, 0.5 * s2 / v, sigma * r2 / v)
            }
        }
    }

    /// Full evaluation at a point `x` against center `c`.
    pub fn eval(self, x: &[f64], c: &[f64], sigma: f64) -> Result<KernelEval> {
        if x.len() != c.len() {
            return Err(Error::shape("kernel_eval", &[x.len()], &[c.len()]));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("kernel size must be > 0, got {sigma}")));
        }
        let diff: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
        let r2 = diff.iter().map(|d| d * d).sum();
        let (value, dr2, d_sigma) = self.partials(r2, sigma);
        let d_center: Vec<f64> = diff.iter().map(|d| -2.0 * dr2 * d).collect();
        let d_point = d_center.iter().map(|g| -g).collect();
        Ok(KernelEval {
            value,
            d_center,
            d_sigma,
            d_point,
        })
    }

    /// Floating-point operations for one evaluation on a `d`-dimensional
    /// input: `d` subtractions, `d` multiplications and `d − 1` additions for
    /// `r²`, plus the kernel-specific tail (each of exp, sqrt and division
    /// counts as one).
    pub fn flops(self, d: usize) -> u64 {
        let distance = (3 * d).saturating_sub(1) as u64;
        distance
            + match self {
                // r²/σ², exp
                KernelFn::Gaussian => 2,
                // sqrt, r/σ², exp
                KernelFn::Markov => 3,
                // σ²·r², 1 + ·, sqrt, 1/·
                KernelFn::InverseMultiquadratic => 4,
                // σ²·r², 1 + ·, sqrt
                KernelFn::Multiquadratic => 3,
            }
    }
}

impl fmt::Display for KernelFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for KernelFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelFn::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown kernel `{s}`")))
    }
}

pub fn eval_gaussian(x: &[f64], c: &[f64], sigma: f64) -> Result<KernelEval> {
    KernelFn::Gaussian.eval(x, c, sigma)
}

pub fn eval_markov(x: &[f64], c: &[f64], sigma: f64) -> Result<KernelEval> {
    KernelFn::Markov.eval(x, c, sigma)
}

pub fn eval_imq(x: &[f64], c: &[f64], sigma: f64) -> Result<KernelEval> {
    KernelFn::InverseMultiquadratic.eval(x, c, sigma)
}

pub fn eval_multiquadratic(x: &[f64], c: &[f64], sigma: f64) -> Result<KernelEval> {
    KernelFn::Multiquadratic.eval(x, c, sigma)
}
