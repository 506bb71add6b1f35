//! Central finite-difference oracle for every backward pass.
//!
//! Each suite draws random small instances and compares analytic gradients
//! against `(f(θ+h) − f(θ−h)) / 2h` for a random linear readout of the
//! layer output. Coordinates whose perturbation flips a ReLU sign or a
//! max-pool winner are non-smooth points and are skipped and counted.
//!
//! A coordinate that misses the tolerance is probed again at a tenth of the
//! step. If the two differences disagree with each other beyond the
//! tolerance, the difference has not converged there (roundoff on an exactly
//! zero gradient, or curvature large enough that the step-squared truncation
//! term dominates); it is skipped and counted like a kink. A wrong analytic
//! gradient still fails, since both differences then agree with each other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use rbfpoint::model::{ChannelSpec, ModelSpec, Network, Variant};
use rbfpoint::nn::{
    apply_transform, apply_transform_backward, maxpool_points_backward, maxpool_points_forward,
    relu_backward, relu_forward, softmax_cross_entropy, BatchNorm, Linear, Mode,
};
use rbfpoint::rbf::{rbf_backward, rbf_forward, InitScheme, RbfChannel};
use rbfpoint::{KernelFn, Tensor};

pub const STEP: f64 = 1e-5;
/// Confirmation step for coordinates that miss the tolerance at `STEP`.
pub const FINE_STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor: gradients below this are compared in absolute terms.
/// Central differences at this step carry roundoff near 1e-10 on an O(1) loss.
pub const FLOOR: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub name: &'static str,
    pub instances: usize,
    pub coords: usize,
    /// Kinks plus unconverged differences.
    pub skipped: usize,
    pub unconverged: usize,
    pub max_rel: f64,
}

impl Summary {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            ..Self::default()
        }
    }

    /// `fine` computes the difference at [`FINE_STEP`] on demand.
    fn record(&mut self, analytic: f64, numeric: f64, fine: impl FnOnce() -> f64) {
        let e = rel_err(analytic, numeric);
        if e > TOLERANCE && rel_err(numeric, fine()) > TOLERANCE {
            self.skipped += 1;
            self.unconverged += 1;
            return;
        }
        self.coords += 1;
        if !(e <= self.max_rel) {
            self.max_rel = e;
        }
    }

    pub fn passed(&self, min_instances: usize) -> bool {
        self.instances >= min_instances && self.max_rel <= TOLERANCE
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let u = Uniform::new(lo, hi).unwrap();
    Tensor::from_fn(shape, |_| u.sample(rng))
}

fn normal(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Central difference of `f` over every entry of `t`, skipping entries where
/// `smooth` reports a non-smooth crossing.
fn numeric_each(
    t: &mut Tensor,
    analytic: &Tensor,
    summary: &mut Summary,
    mut f: impl FnMut(&Tensor) -> f64,
    mut smooth: impl FnMut(&Tensor) -> bool,
) {
    for i in 0..t.len() {
        let orig = t.data()[i];
        t.data_mut()[i] = orig + STEP;
        let (fp, sp) = (f(t), smooth(t));
        t.data_mut()[i] = orig - STEP;
        let (fm, sm) = (f(t), smooth(t));
        t.data_mut()[i] = orig;
        if !(sp && sm) {
            summary.skipped += 1;
            continue;
        }
        summary.record(analytic.data()[i], (fp - fm) / (2.0 * STEP), || {
            t.data_mut()[i] = orig + FINE_STEP;
            let fp = f(t);
            t.data_mut()[i] = orig - FINE_STEP;
            let fm = f(t);
            t.data_mut()[i] = orig;
            (fp - fm) / (2.0 * FINE_STEP)
        });
    }
}

fn always(_: &Tensor) -> bool {
    true
}

pub fn linear(instances: usize, seed: u64) -> Summary {
    let mut s = Summary::new("linear");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let (rows, i, o) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..6));
        let mut layer = Linear::new("l", i, o, &mut rng);
        layer.bias.value = normal(&[o], &mut rng);
        let mut x = normal(&[rows, i], &mut rng);
        let w = normal(&[rows, o], &mut rng);
        let gx = layer.backward(&x, &w).unwrap();
        let (gw, gb) = (layer.weight.grad.clone(), layer.bias.grad.clone());
        let base = layer.clone();
        numeric_each(&mut x, &gx, &mut s, |x| dot(&base.forward(x).unwrap(), &w), always);
        let mut wt = base.weight.value.clone();
        numeric_each(&mut wt, &gw, &mut s, |wt| {
            let l = Linear::from_parts("l", wt.clone(), base.bias.value.clone());
            dot(&l.forward(&x).unwrap(), &w)
        }, always);
        let mut bt = base.bias.value.clone();
        numeric_each(&mut bt, &gb, &mut s, |bt| {
            let l = Linear::from_parts("l", base.weight.value.clone(), bt.clone());
            dot(&l.forward(&x).unwrap(), &w)
        }, always);
        s.instances += 1;
    }
    s
}

pub fn batchnorm(instances: usize, seed: u64) -> Summary {
    let mut s = Summary::new("batch_norm");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let (rows, f) = (rng.random_range(2..7), rng.random_range(1..5));
        let mut bn = BatchNorm::new("bn", f);
        bn.gamma.value = uniform(&[f], 0.5, 1.5, &mut rng);
        bn.beta.value = normal(&[f], &mut rng);
        let mut x = normal(&[rows, f], &mut rng);
        let w = normal(&[rows, f], &mut rng);
        let (_, cache) = bn.forward_train(&x).unwrap();
        let gx = bn.backward(&cache, &w).unwrap();
        let (gg, gb) = (bn.gamma.grad.clone(), bn.beta.grad.clone());
        let base = bn.clone();
        let eval = |bn: &BatchNorm, x: &Tensor| dot(&bn.clone().forward_train(x).unwrap().0, &w);
        numeric_each(&mut x, &gx, &mut s, |x| eval(&base, x), always);
        let mut g = base.gamma.value.clone();
        numeric_each(&mut g, &gg, &mut s, |g| {
            let mut b = base.clone();
            b.gamma.value = g.clone();
            eval(&b, &x)
        }, always);
        let mut bt = base.beta.value.clone();
        numeric_each(&mut bt, &gb, &mut s, |bt| {
            let mut b = base.clone();
            b.beta.value = bt.clone();
            eval(&b, &x)
        }, always);
        s.instances += 1;
    }
    s
}

pub fn relu(instances: usize, seed: u64) -> Summary {
    let mut s = Summary::new("relu");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let n = rng.random_range(1..12);
        let mut x = normal(&[n], &mut rng);
        let w = normal(&[n], &mut rng);
        let gx = relu_backward(&x, &w).unwrap();
        let signs: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
        numeric_each(&mut x, &gx, &mut s, |x| dot(&relu_forward(x), &w), |x| {
            x.data().iter().zip(&signs).all(|(&v, &p)| (v > 0.0) == p)
        });
        s.instances += 1;
    }
    s
}

pub fn maxpool(instances: usize, seed: u64) -> Summary {
    let mut s = Summary::new("max_pool");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let (b, n, f) = (rng.random_range(1..3), rng.random_range(1..6), rng.random_range(1..4));
        let mut x = normal(&[b, n, f], &mut rng);
        let w = normal(&[b, f], &mut rng);
        let (_, am) = maxpool_points_forward(&x).unwrap();
        let gx = maxpool_points_backward(&w, &am).unwrap();
        numeric_each(
            &mut x,
            &gx,
            &mut s,
            |x| dot(&maxpool_points_forward(x).unwrap().0, &w),
            |x| maxpool_points_forward(x).unwrap().1 == am,
        );
        s.instances += 1;
    }
    s
}

pub fn softmax_ce(instances: usize, seed: u64) -> Summary {
    let mut s = Summary::new("softmax_cross_entropy");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let (b, l) = (rng.random_range(1..5), rng.random_range(2..7));
        let mut z = uniform(&[b, l], -3.0, 3.0, &mut rng);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..l)).collect();
        let (_, g) = softmax_cross_entropy(&z, &labels).unwrap();
        numeric_each(&mut z, &g, &mut s, |z| softmax_cross_entropy(z, &labels).unwrap().0, always);
        s.instances += 1;
    }
    s
}

pub fn transform(instances: usize, seed: u64) -> Summary {
    let mut s = Summary::new("transform");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let (b, n, d) = (rng.random_range(1..3), rng.random_range(1..6), rng.random_range(2..4));
        let mut p = normal(&[b, n, d], &mut rng);
        let mut t = normal(&[b, d, d], &mut rng);
        let w = normal(&[b, n, d], &mut rng);
        let (gp, gt) = apply_transform_backward(&p, &t, &w).unwrap();
        let t0 = t.clone();
        numeric_each(&mut p, &gp, &mut s, |p| dot(&apply_transform(p, &t0).unwrap(), &w), always);
        let p0 = p.clone();
        numeric_each(&mut t, &gt, &mut s, |t| dot(&apply_transform(&p0, t).unwrap(), &w), always);
        s.instances += 1;
    }
    s
}

pub fn rbf(kernel: KernelFn, instances: usize, seed: u64) -> Summary {
    let name = match kernel {
        KernelFn::Gaussian => "rbf_gaussian",
        KernelFn::Markov => "rbf_markov",
        KernelFn::InverseMultiquadratic => "rbf_imq",
        KernelFn::Multiquadratic => "rbf_mq",
    };
    let mut s = Summary::new(name);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let (b, n, m, d) = (
            rng.random_range(1..3),
            rng.random_range(1..5),
            rng.random_range(1..5),
            rng.random_range(1..4),
        );
        let mut x = uniform(&[b, n, d], -1.0, 1.0, &mut rng);
        let centers = uniform(&[m, d], -1.0, 1.0, &mut rng);
        let sigmas = uniform(&[m], 0.3, 1.2, &mut rng);
        let w = normal(&[b, n, m], &mut rng);
        let mut ch = RbfChannel::new("rbf", kernel, centers, sigmas).unwrap();
        let gx = rbf_backward(&x, &mut ch, &w).unwrap();
        let (gc, gs) = (ch.centers.grad.clone(), ch.sigmas.grad.clone());
        let base = ch.clone();
        numeric_each(&mut x, &gx, &mut s, |x| dot(&rbf_forward(x, &base).unwrap(), &w), always);
        let mut c = base.centers.value.clone();
        numeric_each(&mut c, &gc, &mut s, |c| {
            let mut ch = base.clone();
            ch.centers.value = c.clone();
            dot(&rbf_forward(&x, &ch).unwrap(), &w)
        }, always);
        let mut sg = base.sigmas.value.clone();
        numeric_each(&mut sg, &gs, &mut s, |sg| {
            let mut ch = base.clone();
            ch.sigmas.value = sg.clone();
            dot(&rbf_forward(&x, &ch).unwrap(), &w)
        }, always);
        s.instances += 1;
    }
    s
}

/// ReLU signs and pool winners of a train-mode pass, recomputed from the
/// public layer pieces. Equal signatures mean the same smooth piece.
fn signature(net: &Network, points: &Tensor, rng: &ChaCha8Rng) -> Vec<usize> {
    let mut rng = rng.clone();
    let mut sig = Vec::new();
    let spec = &net.spec;
    let (b, n, cols, d) = (points.dim(0), points.dim(1), points.dim(2), spec.coord_dim);
    let dense = |blocks: &[rbfpoint::model::DenseBlock], mut x: Tensor, sig: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        for blk in blocks {
            let z = blk.linear.forward(&x).unwrap();
            let (mut y, _) = blk.bn.clone().forward_train(&z).unwrap();
            sig.extend(y.data().iter().map(|&v| (v > 0.0) as usize));
            y = relu_forward(&y);
            if let Some(dr) = &blk.dropout {
                if dr.keep_probability < 1.0 {
                    dr.forward_train(&mut y, rng);
                }
            }
            x = y;
        }
        x
    };
    let column_block = |t: &Tensor, start: usize, w: usize| {
        Tensor::from_fn(&[b, n, w], |i| t.data()[(i / w) * cols + start + i % w])
    };
    let mut x = points.clone();
    if let Some(t) = &net.tnet {
        let coords = column_block(points, 0, d).reshape(&[b * n, d]).unwrap();
        let feat = dense(&t.point_blocks, coords, &mut sig, &mut rng);
        let w = feat.cols();
        let (pooled, am) = maxpool_points_forward(&feat.reshape(&[b, n, w]).unwrap()).unwrap();
        sig.extend(am.indices);
        let h = dense(&t.fc_blocks, pooled, &mut sig, &mut rng);
        let tm = t.head.forward(&h).unwrap().reshape(&[b, d, d]).unwrap();
        let mut groups = vec![0];
        if spec.transform_normals {
            groups.push(d);
        }
        for start in groups {
            let moved = apply_transform(&column_block(points, start, d), &tm).unwrap();
            for r in 0..b * n {
                x.data_mut()[r * cols + start..r * cols + start + d]
                    .copy_from_slice(&moved.data()[r * d..(r + 1) * d]);
            }
        }
    }
    let feat = match spec.variant {
        Variant::Raw => x,
        _ => net.rbf.forward(&x).unwrap(),
    };
    let w = feat.dim(2);
    let feat = dense(&net.shared, feat.reshape(&[b * n, w]).unwrap(), &mut sig, &mut rng);
    let w = feat.cols();
    let (pooled, am) = maxpool_points_forward(&feat.reshape(&[b, n, w]).unwrap()).unwrap();
    sig.extend(am.indices);
    dense(&net.classifier, pooled, &mut sig, &mut rng);
    sig
}

fn loss(net: &mut Network, x: &Tensor, labels: &[usize], rng: &ChaCha8Rng) -> f64 {
    let logits = net.forward(x, Mode::Train, &mut rng.clone()).unwrap();
    net.clear_cache();
    softmax_cross_entropy(&logits, labels).unwrap().0
}

/// Tiny network for the end-to-end check. Cycles through variants, kernel
/// functions, transform on/off and an extra normal channel.
pub fn tiny_network_spec(i: usize) -> ModelSpec {
    let kernel = [
        KernelFn::Gaussian,
        KernelFn::Markov,
        KernelFn::InverseMultiquadratic,
        KernelFn::Multiquadratic,
    ][i % 4];
    let mut spec = if i % 3 == 2 {
        ModelSpec::vanilla(3, 3, 4)
    } else {
        ModelSpec::enhanced(3, 3, 4)
    };
    if spec.variant == Variant::Enhanced {
        spec.shared_mlp_widths = vec![3, 5, 6];
    }
    spec.channels[0].kernel = kernel;
    spec.classifier_widths = vec![5, 4];
    spec.tnet_point_widths = vec![4, 5];
    spec.tnet_fc_widths = vec![4];
    spec.use_transform = i % 2 == 0;
    if i % 5 == 1 {
        spec.input_dim = 6;
        spec.transform_normals = spec.use_transform;
        spec.channels.push(ChannelSpec::new(KernelFn::Gaussian, 3, 3..6));
    }
    spec
}

pub fn network(instances: usize, seed: u64) -> Summary {
    let mut s = Summary::new("network_end_to_end");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let spec = tiny_network_spec(i);
        let mut net = Network::build(&spec, rng.random(), InitScheme::Random, None).unwrap();
        // Random, non-identity transform and non-trivial batch-norm affine terms.
        for p in net.params_mut() {
            if p.name.ends_with(".gamma") {
                p.value = uniform(p.value.shape(), 0.5, 1.5, &mut rng);
            } else if p.name.ends_with(".beta") || p.name.starts_with("tnet.head") {
                let shift = normal(p.value.shape(), &mut rng);
                for (v, d) in p.value.data_mut().iter_mut().zip(shift.data()) {
                    *v += 0.3 * d;
                }
            } else if p.name.ends_with("sigmas") {
                p.value = uniform(p.value.shape(), 0.4, 1.0, &mut rng);
            }
        }
        let (b, n) = (3, 8);
        let x = uniform(&[b, n, spec.input_dim], -1.0, 1.0, &mut rng);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..spec.num_classes)).collect();
        let drop_rng = ChaCha8Rng::seed_from_u64(rng.random());

        net.zero_grads();
        let logits = net.forward(&x, Mode::Train, &mut drop_rng.clone()).unwrap();
        let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
        net.backward(&g).unwrap();
        let grads: Vec<Tensor> = net.params().iter().map(|p| p.grad.clone()).collect();
        let sig0 = signature(&net, &x, &drop_rng);

        for (pi, grad) in grads.iter().enumerate() {
            for j in 0..grad.len() {
                let orig = net.params()[pi].value.data()[j];
                let probe = |net: &mut Network, v: f64| {
                    net.params_mut()[pi].value.data_mut()[j] = v;
                    (loss(net, &x, &labels, &drop_rng), signature(net, &x, &drop_rng) == sig0)
                };
                let (fp, sp) = probe(&mut net, orig + STEP);
                let (fm, sm) = probe(&mut net, orig - STEP);
                net.params_mut()[pi].value.data_mut()[j] = orig;
                if !(sp && sm) {
                    s.skipped += 1;
                    continue;
                }
                s.record(grad.data()[j], (fp - fm) / (2.0 * STEP), || {
                    let (fp, _) = probe(&mut net, orig + FINE_STEP);
                    let (fm, _) = probe(&mut net, orig - FINE_STEP);
                    net.params_mut()[pi].value.data_mut()[j] = orig;
                    (fp - fm) / (2.0 * FINE_STEP)
                });
            }
        }
        s.instances += 1;
    }
    s
}

pub fn all(instances: usize, seed: u64) -> Vec<Summary> {
    vec![
        linear(instances, seed),
        batchnorm(instances, seed + 1),
        relu(instances, seed + 2),
        maxpool(instances, seed + 3),
        softmax_ce(instances, seed + 4),
        transform(instances, seed + 5),
        rbf(KernelFn::Gaussian, instances, seed + 6),
        rbf(KernelFn::Markov, instances, seed + 7),
        rbf(KernelFn::InverseMultiquadratic, instances, seed + 8),
        rbf(KernelFn::Multiquadratic, instances, seed + 9),
        network(instances, seed + 10),
    ]
}
