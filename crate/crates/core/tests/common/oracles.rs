//! Brute-force oracles shared by the integration and acceptance suites.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbfpoint::data::synthetic_shapes;
use rbfpoint::model::{ModelSpec, Network};
use rbfpoint::rbf::{rbf_forward, InitScheme, MultiChannelRbf, RbfChannel};
use rbfpoint::{KernelFn, Tensor};

/// Kernel response written straight from the formulas, through the distance
/// rather than its square.
fn scalar_kernel(kernel: KernelFn, x: &[f64], c: &[f64], sigma: f64) -> f64 {
    let r = x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    match kernel {
        KernelFn::Gaussian => (-(r / sigma).powi(2)).exp(),
        KernelFn::Markov => (-r / sigma.powi(2)).exp(),
        KernelFn::InverseMultiquadratic => (1.0 + (sigma * r).powi(2)).powf(-0.5),
        KernelFn::Multiquadratic => (1.0 + (sigma * r).powi(2)).powf(0.5),
    }
}

/// `out[b][n][m]` by three nested loops.
pub fn rbf_triple_loop(points: &Tensor, ch: &RbfChannel) -> Vec<f64> {
    let (b, n, d) = (points.dim(0), points.dim(1), points.dim(2));
    let m = ch.kernels();
    let (c, s) = (ch.centers.value.data(), ch.sigmas.value.data());
    let mut out = Vec::with_capacity(b * n * m);
    for bi in 0..b {
        for ni in 0..n {
            let x = &points.data()[(bi * n + ni) * d..][..d];
            for mi in 0..m {
                out.push(scalar_kernel(ch.kernel, x, &c[mi * d..][..d], s[mi]));
            }
        }
    }
    out
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

fn random_channel(rng: &mut ChaCha8Rng, d: usize) -> RbfChannel {
    let m = rng.random_range(1..=12);
    let kernel = KernelFn::ALL[rng.random_range(0..4)];
    let centers = random_tensor(rng, &[m, d], -1.0, 1.0);
    let sigmas = random_tensor(rng, &[m], 0.05, 2.0);
    RbfChannel::new("oracle", kernel, centers, sigmas).unwrap()
}

/// Error relative to `max(|oracle|, 1)`, which is absolute for the bounded
/// local kernels.
fn scaled_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter().zip(want).map(|(g, w)| (g - w).abs() / w.abs().max(1.0)).fold(0.0, f64::max)
}

/// Largest deviation of `rbf_forward` from the triple loop over random
/// single-channel instances.
pub fn rbf_oracle_max_err(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (b, n, d) = (rng.random_range(1..=3), rng.random_range(1..=24), rng.random_range(1..=4));
        let ch = random_channel(&mut rng, d);
        let x = random_tensor(&mut rng, &[b, n, d], -1.2, 1.2);
        worst = worst.max(scaled_err(rbf_forward(&x, &ch).unwrap().data(), &rbf_triple_loop(&x, &ch)));
    }
    worst
}

/// Largest deviation of a multi-channel layer from independent per-channel
/// calls on the sliced input, concatenated.
pub fn multichannel_max_err(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (b, n) = (rng.random_range(1..=3), rng.random_range(1..=16));
        // Coordinates then normals, the usual two-attribute layout, plus a
        // channel over a sub-slice of its own.
        let slices = [0..3, 3..6, 1..3];
        let channels: Vec<RbfChannel> = slices.iter().map(|s| random_channel(&mut rng, s.len())).collect();
        let x = random_tensor(&mut rng, &[b, n, 6], -1.0, 1.0);
        let layer = MultiChannelRbf::new(channels.clone(), slices.to_vec()).unwrap();
        let got = layer.forward(&x).unwrap();
        let width = layer.width();
        let mut want = vec![0.0; b * n * width];
        let mut off = 0;
        for (ch, s) in channels.iter().zip(&slices) {
            let part = Tensor::from_fn(&[b, n, s.len()], |i| x.data()[(i / s.len()) * 6 + s.start + i % s.len()]);
            let y = rbf_forward(&part, ch).unwrap();
            for row in 0..b * n {
                want[row * width + off..][..ch.kernels()].copy_from_slice(&y.data()[row * ch.kernels()..][..ch.kernels()]);
            }
            off += ch.kernels();
        }
        worst = worst.max(scaled_err(got.data(), &want));
    }
    worst
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PermutationReport {
    pub clouds: usize,
    /// Logit vectors that differ in any bit after permuting the points.
    pub mismatches: usize,
}

/// Eval-mode logits of `clouds` synthetic clouds before and after a random
/// point permutation, for both variants with their default architecture.
pub fn permutation_check(clouds: usize, points: usize, seed: u64) -> PermutationReport {
    let ds = synthetic_shapes(clouds, points, seed, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PermutationReport::default();
    for spec in [ModelSpec::vanilla(3, ds.num_classes, 300), ModelSpec::enhanced(3, ds.num_classes, 300)] {
        let net = Network::build(&spec, seed, InitScheme::Random, None).unwrap();
        for cloud in &ds.clouds {
            let mut order: Vec<usize> = (0..cloud.len()).collect();
            order.shuffle(&mut rng);
            let logits = |c: &rbfpoint::data::PointCloud| {
                let x = rbfpoint::data::batch_tensor(&[c], false).unwrap();
                net.infer(&x).unwrap().into_data()
            };
            let a = logits(cloud);
            let b = logits(&cloud.select(&order));
            report.clouds += 1;
            if a.iter().zip(&b).any(|(p, q)| p.to_bits() != q.to_bits()) {
                report.mismatches += 1;
            }
        }
    }
    report
}
