use rand::Rng;

use crate::error::{Error, Result};
use crate::model::spec::{ModelSpec, Variant};
use crate::nn::{
    apply_transform, apply_transform_backward, fusion_pays, maxpool_points_backward, maxpool_points_forward,
    pooled_block_backward, pooled_block_infer, pooled_block_train, Argmax, PooledCache, BatchNorm, BnCache, Dropout, DropoutMask, Linear,
    Mode,
};
use crate::rbf::{init_kernels, sample_on_sphere, sample_sigmas, InitScheme, MultiChannelRbf, RbfChannel};
use crate::seed::{stream, substream};
use crate::tensor::{Param, Tensor};

/// `linear → batch norm → ReLU → optional dropout`, applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    pub linear: Linear,
    pub bn: BatchNorm,
    pub dropout: Option<Dropout>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Tensor,
    bn: BnCache,
    mask: Option<DropoutMask>,
}

impl DenseBlock {
    fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, keep: Option<f64>, rng: &mut R) -> Self {
        Self {
            linear: Linear::new(&format!("{name}.linear"), input, output, rng),
            bn: BatchNorm::new(&format!("{name}.bn"), output),
            dropout: keep.map(|p| Dropout { keep_probability: p }),
        }
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.linear.forward(x)?;
        self.bn.eval_in_place(&mut y, true)?;
        Ok(y)
    }

    fn forward_train<R: Rng + ?Sized>(&mut self, x: Tensor, rng: &mut R) -> Result<(Tensor, BlockCache)> {
        let z = self.linear.forward(&x)?;
        let (mut y, bn) = self.bn.forward_train_relu(z)?;
        let mask = match &self.dropout {
            Some(d) if d.keep_probability < 1.0 => Some(d.forward_train(&mut y, rng)),
            _ => None,
        };
        Ok((y, BlockCache { input: x, bn, mask }))
    }

    fn backward(&mut self, cache: &BlockCache, mut grad: Tensor, need_input_grad: bool) -> Result<Option<Tensor>> {
        if let (Some(d), Some(mask)) = (&self.dropout, &cache.mask) {
            d.backward(mask, &mut grad);
        }
        let gz = self.bn.backward_relu(&cache.bn, grad)?;
        self.linear.backward_opt(&cache.input, &gz, need_input_grad)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        let [a, b] = self.linear.params_mut();
        let [c, d] = self.bn.params_mut();
        [a, b, c, d].into_iter()
    }

    fn params(&self) -> impl Iterator<Item = &Param> {
        let [a, b] = self.linear.params();
        let [c, d] = self.bn.params();
        [a, b, c, d].into_iter()
    }
}

fn stack<R: Rng + ?Sized>(
    prefix: &str,
    input: usize,
    widths: &[usize],
    keep: Option<f64>,
    rng: &mut R,
) -> Vec<DenseBlock> {
    let mut prev = input;
    widths
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let b = DenseBlock::new(&format!("{prefix}{i}"), prev, w, keep, rng);
            prev = w;
            b
        })
        .collect()
}

fn stack_infer(blocks: &[DenseBlock], mut x: Tensor) -> Result<Tensor> {
    for b in blocks {
        x = b.infer(&x)?;
    }
    Ok(x)
}

fn stack_train<R: Rng + ?Sized>(
    blocks: &mut [DenseBlock],
    mut x: Tensor,
    rng: &mut R,
) -> Result<(Tensor, Vec<BlockCache>)> {
    let mut caches = Vec::with_capacity(blocks.len());
    for b in blocks {
        let (y, c) = b.forward_train(x, rng)?;
        caches.push(c);
        x = y;
    }
    Ok((x, caches))
}

/// Backward through a stack; returns the input gradient when requested.
fn stack_backward(
    blocks: &mut [DenseBlock],
    caches: &[BlockCache],
    mut grad: Tensor,
    need_input_grad: bool,
) -> Result<Option<Tensor>> {
    let n = blocks.len();
    for (i, (b, c)) in blocks.iter_mut().zip(caches).enumerate().rev() {
        let need = i > 0 || need_input_grad;
        match b.backward(c, grad, need)? {
            Some(g) => grad = g,
            None => {
                debug_assert!(i == 0 && n > 0);
                return Ok(None);
            }
        }
    }
    Ok(Some(grad))
}

/// Per-point blocks followed by the max pool over points.
#[derive(Debug, Clone)]
enum PoolCache {
    /// The last block ran fused with the pool.
    Fused(Vec<BlockCache>, PooledCache),
    Plain(Vec<BlockCache>, Argmax),
}

fn fusable(blocks: &[DenseBlock]) -> bool {
    blocks
        .last()
        .is_some_and(|b| b.dropout.is_none_or(|d| d.keep_probability >= 1.0) && fusion_pays(&b.linear))
}

/// `[B·N, w]` rows to `[B, F]` pooled features.
fn pool_infer(blocks: &[DenseBlock], x: Tensor, batch: usize, points: usize) -> Result<Tensor> {
    match blocks.split_last() {
        Some((last, init)) => {
            let h = stack_infer(init, x)?;
            pooled_block_infer(&last.linear, &last.bn, &h, batch, points)
        }
        None => {
            let w = x.cols();
            Ok(maxpool_points_forward(&x.reshape(&[batch, points, w])?)?.0)
        }
    }
}

fn pool_train<R: Rng + ?Sized>(
    blocks: &mut [DenseBlock],
    x: Tensor,
    batch: usize,
    points: usize,
    rng: &mut R,
) -> Result<(Tensor, PoolCache)> {
    if fusable(blocks) {
        let (last, init) = blocks.split_last_mut().expect("fusable stacks are non-empty");
        let (h, caches) = stack_train(init, x, rng)?;
        let (pooled, pc) = pooled_block_train(&last.linear, &mut last.bn, h, batch, points)?;
        return Ok((pooled, PoolCache::Fused(caches, pc)));
    }
    let (h, caches) = stack_train(blocks, x, rng)?;
    let w = h.cols();
    let (pooled, argmax) = maxpool_points_forward(&h.reshape(&[batch, points, w])?)?;
    Ok((pooled, PoolCache::Plain(caches, argmax)))
}

/// Gradient with respect to the `[B·N, w]` input rows, when requested.
fn pool_backward(
    blocks: &mut [DenseBlock],
    cache: &PoolCache,
    grad: &Tensor,
    need_input_grad: bool,
) -> Result<Option<Tensor>> {
    match cache {
        PoolCache::Fused(caches, pc) => {
            let (last, init) = blocks.split_last_mut().expect("fused stacks are non-empty");
            let g = pooled_block_backward(&mut last.linear, &mut last.bn, pc, grad, need_input_grad || !init.is_empty())?;
            match g {
                Some(g) if !init.is_empty() => stack_backward(init, caches, g, need_input_grad),
                g => Ok(g),
            }
        }
        PoolCache::Plain(caches, argmax) => {
            let g = maxpool_points_backward(grad, argmax)?;
            let (b, n, w) = (g.dim(0), g.dim(1), g.dim(2));
            let g = g.reshape(&[b * n, w])?;
            if blocks.is_empty() {
                return Ok(Some(g));
            }
            stack_backward(blocks, caches, g, need_input_grad)
        }
    }
}

fn last_width(blocks: &[DenseBlock], input: usize) -> usize {
    blocks.last().map(|b| b.linear.out_features()).unwrap_or(input)
}

/// Spatial transformer predicting a `d×d` matrix per cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct TNet {
    pub dim: usize,
    pub point_blocks: Vec<DenseBlock>,
    pub fc_blocks: Vec<DenseBlock>,
    /// Zero weights and identity bias at initialization.
    pub head: Linear,
}

#[derive(Debug, Clone)]
struct TNetCache {
    batch: usize,
    point: PoolCache,
    fc: Vec<BlockCache>,
    head_input: Tensor,
}

impl TNet {
    fn new<R: Rng + ?Sized>(dim: usize, point_widths: &[usize], fc_widths: &[usize], rng: &mut R) -> Self {
        let point_blocks = stack("tnet.point", dim, point_widths, None, rng);
        let pooled = last_width(&point_blocks, dim);
        let fc_blocks = stack("tnet.fc", pooled, fc_widths, None, rng);
        let last = last_width(&fc_blocks, pooled);
        let bias = Tensor::eye(dim).reshape(&[dim * dim]).expect("d² elements");
        let head = Linear::from_parts("tnet.head", Tensor::zeros(&[last, dim * dim]), bias);
        Self {
            dim,
            point_blocks,
            fc_blocks,
            head,
        }
    }

    fn infer(&self, coords: &Tensor) -> Result<Tensor> {
        let (b, n, d) = (coords.dim(0), coords.dim(1), self.dim);
        let rows = coords.clone().reshape(&[b * n, d])?;
        let pooled = pool_infer(&self.point_blocks, rows, b, n)?;
        let h = stack_infer(&self.fc_blocks, pooled)?;
        self.head.forward(&h)?.reshape(&[b, d, d])
    }

    fn forward_train<R: Rng + ?Sized>(&mut self, coords: &Tensor, rng: &mut R) -> Result<(Tensor, TNetCache)> {
        let (b, n, d) = (coords.dim(0), coords.dim(1), self.dim);
        let rows = coords.clone().reshape(&[b * n, d])?;
        let (pooled, point) = pool_train(&mut self.point_blocks, rows, b, n, rng)?;
        let (h, fc) = stack_train(&mut self.fc_blocks, pooled, rng)?;
        let t = self.head.forward(&h)?.reshape(&[b, d, d])?;
        Ok((
            t,
            TNetCache {
                batch: b,
                point,
                fc,
                head_input: h,
            },
        ))
    }

    fn backward(&mut self, cache: &TNetCache, grad_t: &Tensor) -> Result<()> {
        let (b, d) = (cache.batch, self.dim);
        let g = grad_t.clone().reshape(&[b, d * d])?;
        let gh = self.head.backward(&cache.head_input, &g)?;
        let gp = stack_backward(&mut self.fc_blocks, &cache.fc, gh, true)?.expect("requested");
        pool_backward(&mut self.point_blocks, &cache.point, &gp, false)?;
        Ok(())
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        for b in &mut self.point_blocks {
            v.extend(b.params_mut());
        }
        for b in &mut self.fc_blocks {
            v.extend(b.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }

    fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = Vec::new();
        for b in &self.point_blocks {
            v.extend(b.params());
        }
        for b in &self.fc_blocks {
            v.extend(b.params());
        }
        v.extend(self.head.params());
        v
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    batch: usize,
    points: usize,
    input: Tensor,
    tnet: Option<(Tensor, TNetCache)>,
    /// Input after the spatial transform; what the RBF layer consumed.
    transformed: Tensor,
    shared: PoolCache,
    classifier: Vec<BlockCache>,
    head_input: Tensor,
}

/// Exact parameter totals per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamCount {
    pub tnet: usize,
    pub rbf: usize,
    /// Linear weights and biases of the shared MLP.
    pub shared_mlp: usize,
    /// Linear weights and biases of the classifier, output layer included.
    pub classifier: usize,
    /// Batch-norm scale and shift outside the transform network.
    pub batch_norm: usize,
    pub total: usize,
}

/// The assembled classifier: transform → RBF channels → shared MLP → max pool → head.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: ModelSpec,
    pub tnet: Option<TNet>,
    pub rbf: MultiChannelRbf,
    pub shared: Vec<DenseBlock>,
    pub classifier: Vec<DenseBlock>,
    pub head: Linear,
    cache: Option<ForwardCache>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.tnet == other.tnet
            && self.rbf == other.rbf
            && self.shared == other.shared
            && self.classifier == other.classifier
            && self.head == other.head
    }
}

impl Network {
    /// Deterministic given `seed`. `training_points` is a `[P, input_dim]`
    /// pool of input rows, needed by the k-means scheme.
    pub fn build(
        spec: &ModelSpec,
        seed: u64,
        init: InitScheme,
        training_points: Option<&Tensor>,
    ) -> Result<Self> {
        spec.validate()?;
        let mut rng = substream(seed, stream::INIT, 0);
        let tnet = spec.use_transform.then(|| {
            TNet::new(spec.coord_dim, &spec.tnet_point_widths, &spec.tnet_fc_widths, &mut rng)
        });

        let mut channels = Vec::with_capacity(spec.channels.len());
        for (i, c) in spec.channels.iter().enumerate() {
            let d = c.slice.len();
            let is_attribute = c.slice.start >= spec.coord_dim;
            let (centers, sigmas) = if is_attribute && init == InitScheme::Random {
                // Extra attributes (normals) are unit vectors: sample their surface.
                let centers: Vec<f64> = (0..c.kernels).flat_map(|_| sample_on_sphere(d, &mut rng)).collect();
                (Tensor::new(vec![c.kernels, d], centers)?, sample_sigmas(c.kernels, &mut rng))
            } else {
                let pooled = match (init, training_points) {
                    (InitScheme::Kmeans, Some(tp)) => {
                        if tp.cols() != spec.input_dim {
                            return Err(Error::shape("build", tp.shape(), &[0, spec.input_dim]));
                        }
                        let mut flat = Vec::with_capacity(tp.rows() * d);
                        for r in 0..tp.rows() {
                            flat.extend_from_slice(&tp.row(r)[c.slice.clone()]);
                        }
                        Some(flat)
                    }
                    _ => None,
                };
                init_kernels(init, c.kernels, d, &mut rng, pooled.as_deref())?
            };
            channels.push(RbfChannel::new(&format!("rbf{i}"), c.kernel, centers, sigmas)?);
        }
        let rbf = MultiChannelRbf::new(channels, spec.channels.iter().map(|c| c.slice.clone()).collect())?;

        let feat_in = match spec.variant {
            Variant::Raw => spec.input_dim,
            _ => rbf.width(),
        };
        let shared = stack("shared", feat_in, &spec.shared_mlp_widths, None, &mut rng);
        let pooled = last_width(&shared, feat_in);
        let classifier = stack("cls", pooled, &spec.classifier_widths, Some(spec.keep_prob), &mut rng);
        let head_in = last_width(&classifier, pooled);
        let head = Linear::new("head", head_in, spec.num_classes, &mut rng);
        Ok(Self {
            spec: spec.clone(),
            tnet,
            rbf,
            shared,
            classifier,
            head,
            cache: None,
        })
    }

    fn check_input(&self, points: &Tensor) -> Result<(usize, usize)> {
        if points.ndim() != 3 || points.dim(2) != self.spec.input_dim {
            return Err(Error::shape("forward", points.shape(), &[0, 0, self.spec.input_dim]));
        }
        if points.dim(1) == 0 {
            return Err(Error::EmptyCloud);
        }
        Ok((points.dim(0), points.dim(1)))
    }

    fn coords(&self, points: &Tensor) -> Tensor {
        let (b, n, cols, d) = (points.dim(0), points.dim(1), points.dim(2), self.spec.coord_dim);
        let mut out = Tensor::zeros(&[b, n, d]);
        for r in 0..b * n {
            out.data_mut()[r * d..(r + 1) * d].copy_from_slice(&points.data()[r * cols..r * cols + d]);
        }
        out
    }

    fn columns(points: &Tensor, start: usize, width: usize) -> Tensor {
        let (b, n, cols) = (points.dim(0), points.dim(1), points.dim(2));
        let mut out = Tensor::zeros(&[b, n, width]);
        for r in 0..b * n {
            out.data_mut()[r * width..(r + 1) * width]
                .copy_from_slice(&points.data()[r * cols + start..r * cols + start + width]);
        }
        out
    }

    fn put_columns(dst: &mut Tensor, src: &Tensor, start: usize) {
        let (cols, w) = (dst.dim(2), src.dim(2));
        for r in 0..dst.dim(0) * dst.dim(1) {
            dst.data_mut()[r * cols + start..r * cols + start + w]
                .copy_from_slice(&src.data()[r * w..(r + 1) * w]);
        }
    }

    fn transform_input(&self, points: &Tensor, t: &Tensor) -> Result<Tensor> {
        let d = self.spec.coord_dim;
        let mut out = points.clone();
        let moved = apply_transform(&self.coords(points), t)?;
        Self::put_columns(&mut out, &moved, 0);
        if self.spec.transform_normals {
            let normals = apply_transform(&Self::columns(points, d, d), t)?;
            Self::put_columns(&mut out, &normals, d);
        }
        Ok(out)
    }

    fn features(&self, x: &Tensor) -> Result<Tensor> {
        match self.spec.variant {
            Variant::Raw => Ok(x.clone()),
            _ => self.rbf.forward(x),
        }
    }

    /// The predicted `[B, d, d]` transform, or `None` without a transform network.
    pub fn predict_transform(&self, points: &Tensor) -> Result<Option<Tensor>> {
        self.check_input(points)?;
        self.tnet.as_ref().map(|t| t.infer(&self.coords(points))).transpose()
    }

    /// Eval-mode logits. Every per-point stage is row-independent, so the
    /// output does not depend on point order or on the rest of the batch.
    pub fn infer(&self, points: &Tensor) -> Result<Tensor> {
        let (b, n) = self.check_input(points)?;
        let x = match &self.tnet {
            Some(t) => {
                let tm = t.infer(&self.coords(points))?;
                self.transform_input(points, &tm)?
            }
            None => points.clone(),
        };
        let feat = self.features(&x)?;
        let w = feat.dim(2);
        let pooled = pool_infer(&self.shared, feat.reshape(&[b * n, w])?, b, n)?;
        let h = stack_infer(&self.classifier, pooled)?;
        self.head.forward(&h)
    }

    /// Logits for `[B, N, input_dim]` points. Train mode caches activations
    /// for [`Network::backward`] and draws dropout masks from `rng`.
    pub fn forward<R: Rng + ?Sized>(&mut self, points: &Tensor, mode: Mode, rng: &mut R) -> Result<Tensor> {
        if mode == Mode::Eval {
            self.cache = None;
            return self.infer(points);
        }
        let (b, n) = self.check_input(points)?;
        let coords = self.coords(points);
        let (x, tnet) = match self.tnet.as_mut() {
            Some(t) => {
                let (tm, tc) = t.forward_train(&coords, rng)?;
                let x = self.transform_input(points, &tm)?;
                (x, Some((tm, tc)))
            }
            None => (points.clone(), None),
        };
        let feat = self.features(&x)?;
        let w = feat.dim(2);
        let (pooled, shared) = pool_train(&mut self.shared, feat.reshape(&[b * n, w])?, b, n, rng)?;
        let (h, classifier) = stack_train(&mut self.classifier, pooled, rng)?;
        let logits = self.head.forward(&h)?;
        self.cache = Some(ForwardCache {
            batch: b,
            points: n,
            input: points.clone(),
            tnet,
            transformed: x,
            shared,
            classifier,
            head_input: h,
        });
        Ok(logits)
    }

    /// Accumulates gradients of every trainable group from `dL/dlogits`.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<()> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        let (b, n) = (cache.batch, cache.points);
        let gh = self.head.backward(&cache.head_input, grad_logits)?;
        let gp = stack_backward(&mut self.classifier, &cache.classifier, gh, true)?.expect("requested");
        let need_feat_grad = self.spec.variant != Variant::Raw || self.tnet.is_some();
        let gfeat = pool_backward(&mut self.shared, &cache.shared, &gp, need_feat_grad)?;
        let need_input_grad = self.tnet.is_some();
        let gx = match self.spec.variant {
            Variant::Raw => gfeat,
            _ => {
                let g = gfeat.expect("feature gradient").reshape(&[b, n, self.rbf.width()])?;
                self.rbf.backward(&cache.transformed, &g, need_input_grad)?
            }
        };
        if let (Some(t), Some((tm, tc))) = (self.tnet.as_mut(), cache.tnet.as_ref()) {
            let gx = gx.expect("input gradient").reshape(&[b, n, self.spec.input_dim])?;
            let d = self.spec.coord_dim;
            let coords = Self::columns(&cache.input, 0, d);
            let (_, mut gt) = apply_transform_backward(&coords, tm, &Self::columns(&gx, 0, d))?;
            if self.spec.transform_normals {
                let normals = Self::columns(&cache.input, d, d);
                let (_, gtn) = apply_transform_backward(&normals, tm, &Self::columns(&gx, d, d))?;
                for (a, c) in gt.data_mut().iter_mut().zip(gtn.data()) {
                    *a += c;
                }
            }
            t.backward(tc, &gt)?;
        }
        Ok(())
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Every trainable tensor in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        if let Some(t) = self.tnet.as_mut() {
            v.extend(t.params_mut());
        }
        for c in &mut self.rbf.channels {
            v.extend(c.params_mut());
        }
        for b in &mut self.shared {
            v.extend(b.params_mut());
        }
        for b in &mut self.classifier {
            v.extend(b.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = Vec::new();
        if let Some(t) = self.tnet.as_ref() {
            v.extend(t.params());
        }
        for c in &self.rbf.channels {
            v.extend(c.params());
        }
        for b in &self.shared {
            v.extend(b.params());
        }
        for b in &self.classifier {
            v.extend(b.params());
        }
        v.extend(self.head.params());
        v
    }

    /// Batch-norm running statistics, in the same block order as the parameters.
    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut blocks: Vec<&mut DenseBlock> = Vec::new();
        if let Some(t) = self.tnet.as_mut() {
            blocks.extend(t.point_blocks.iter_mut());
            blocks.extend(t.fc_blocks.iter_mut());
        }
        blocks.extend(self.shared.iter_mut());
        blocks.extend(self.classifier.iter_mut());
        let mut v = Vec::new();
        for b in blocks {
            let base = b.bn.gamma.name.trim_end_matches(".gamma").to_string();
            v.push((format!("{base}.running_mean"), &mut b.bn.running_mean));
            v.push((format!("{base}.running_var"), &mut b.bn.running_var));
        }
        v
    }

    pub fn buffers(&self) -> Vec<(String, &Tensor)> {
        let mut blocks: Vec<&DenseBlock> = Vec::new();
        if let Some(t) = self.tnet.as_ref() {
            blocks.extend(t.point_blocks.iter());
            blocks.extend(t.fc_blocks.iter());
        }
        blocks.extend(self.shared.iter());
        blocks.extend(self.classifier.iter());
        let mut v = Vec::new();
        for b in blocks {
            let base = b.bn.gamma.name.trim_end_matches(".gamma").to_string();
            v.push((format!("{base}.running_mean"), &b.bn.running_mean));
            v.push((format!("{base}.running_var"), &b.bn.running_var));
        }
        v
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Freezes or releases the kernel centers and sizes of every channel.
    pub fn set_rbf_trainable(&mut self, centers: bool, sigmas: bool) {
        self.rbf.set_trainable(centers, sigmas);
    }

    pub fn param_count(&self) -> ParamCount {
        let linear = |blocks: &[DenseBlock]| -> usize {
            blocks.iter().map(|b| b.linear.weight.numel() + b.linear.bias.numel()).sum()
        };
        let bn = |blocks: &[DenseBlock]| -> usize { blocks.iter().map(|b| 2 * b.bn.features()).sum() };
        let tnet = self.tnet.as_ref().map_or(0, |t| {
            linear(&t.point_blocks)
                + linear(&t.fc_blocks)
                + bn(&t.point_blocks)
                + bn(&t.fc_blocks)
                + t.head.weight.numel()
                + t.head.bias.numel()
        });
        let rbf = self.rbf.param_count();
        let shared_mlp = linear(&self.shared);
        let classifier = linear(&self.classifier) + self.head.weight.numel() + self.head.bias.numel();
        let batch_norm = bn(&self.shared) + bn(&self.classifier);
        ParamCount {
            tnet,
            rbf,
            shared_mlp,
            classifier,
            batch_norm,
            total: tnet + rbf + shared_mlp + classifier + batch_norm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    fn tiny(variant: Variant, transform: bool) -> ModelSpec {
        let mut spec = match variant {
            Variant::Raw => ModelSpec::raw(3, 4),
            Variant::Vanilla => ModelSpec::vanilla(3, 4, 5),
            Variant::Enhanced => ModelSpec::enhanced(3, 4, 5),
        };
        if variant == Variant::Enhanced {
            spec.shared_mlp_widths = vec![3, 6];
        }
        spec.classifier_widths = vec![7];
        spec.tnet_point_widths = vec![4, 6];
        spec.tnet_fc_widths = vec![5];
        spec.use_transform = transform;
        spec
    }

    fn cloud(b: usize, n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        Tensor::from_fn(&[b, n, d], |_| u.sample(&mut rng))
    }

    #[test]
    fn shared_mlp_parameter_count() {
        let net = Network::build(&ModelSpec::enhanced(3, 40, 300), 0, InitScheme::Random, None).unwrap();
        let c = net.param_count();
        assert_eq!(c.rbf, 1200);
        assert_eq!(c.shared_mlp, 139_088);
        assert_eq!(c.total, net.params().iter().map(|p| p.numel()).sum::<usize>());
    }

    #[test]
    fn transform_is_identity_at_init() {
        let net = Network::build(&tiny(Variant::Vanilla, true), 1, InitScheme::Random, None).unwrap();
        let t = net.predict_transform(&cloud(2, 9, 3, 4)).unwrap().unwrap();
        for b in 0..2 {
            assert_eq!(&t.data()[b * 9..(b + 1) * 9], Tensor::eye(3).data());
        }
    }

    #[test]
    fn eval_is_permutation_and_duplicate_invariant() {
        for transform in [false, true] {
            let net = Network::build(&tiny(Variant::Enhanced, transform), 2, InitScheme::Random, None).unwrap();
            let x = cloud(1, 12, 3, 5);
            let base = net.infer(&x).unwrap();
            let mut perm = Tensor::zeros(&[1, 12, 3]);
            for i in 0..12 {
                perm.row_mut((i * 5) % 12).copy_from_slice(x.row(i));
            }
            assert_eq!(net.infer(&perm).unwrap(), base);
            let mut dup = x.data().to_vec();
            dup.extend_from_slice(x.data());
            let dup = Tensor::new(vec![1, 24, 3], dup).unwrap();
            assert_eq!(net.infer(&dup).unwrap(), base);
        }
    }

    #[test]
    fn eval_is_batch_independent() {
        let net = Network::build(&tiny(Variant::Enhanced, true), 2, InitScheme::Random, None).unwrap();
        let x = cloud(3, 6, 3, 8);
        let all = net.infer(&x).unwrap();
        let one = net.infer(&Tensor::new(vec![1, 6, 3], x.data()[18..36].to_vec()).unwrap()).unwrap();
        assert_eq!(one.data(), &all.data()[4..8]);
    }

    #[test]
    fn vanilla_is_enhanced_without_shared_mlp() {
        let mut e = tiny(Variant::Enhanced, true);
        e.shared_mlp_widths.clear();
        let v = Network::build(&tiny(Variant::Vanilla, true), 9, InitScheme::Random, None).unwrap();
        let e = Network::build(&e, 9, InitScheme::Random, None).unwrap();
        let x = cloud(2, 7, 3, 1);
        assert_eq!(v.infer(&x).unwrap(), e.infer(&x).unwrap());
    }

    #[test]
    fn backward_requires_cache_and_zero_upstream_gives_zero() {
        let mut net = Network::build(&tiny(Variant::Enhanced, true), 3, InitScheme::Random, None).unwrap();
        let g = Tensor::zeros(&[2, 4]);
        assert!(matches!(net.backward(&g), Err(Error::NoForwardCache)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        net.forward(&cloud(2, 5, 3, 2), Mode::Train, &mut rng).unwrap();
        net.backward(&g).unwrap();
        assert!(net.params().iter().all(|p| p.grad.max_abs() == 0.0));
        assert!(!net.has_cache());
    }

    #[test]
    fn frozen_kernels_get_no_gradient() {
        let mut net = Network::build(&tiny(Variant::Vanilla, false), 3, InitScheme::Random, None).unwrap();
        net.set_rbf_trainable(false, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = net.forward(&cloud(2, 5, 3, 2), Mode::Train, &mut rng).unwrap();
        net.backward(&Tensor::filled(logits.shape(), 1.0)).unwrap();
        let c = &net.rbf.channels[0];
        assert_eq!(c.centers.grad.max_abs(), 0.0);
        assert_eq!(c.sigmas.grad.max_abs(), 0.0);
        assert!(net.head.weight.grad.max_abs() > 0.0);
    }

    #[test]
    fn raw_variant_pools_input_columns() {
        let net = Network::build(&tiny(Variant::Raw, false), 3, InitScheme::Random, None).unwrap();
        assert_eq!(net.param_count().rbf, 0);
        assert_eq!(net.classifier[0].linear.in_features(), 3);
        assert_eq!(net.infer(&cloud(2, 5, 3, 0)).unwrap().shape(), &[2, 4]);
    }

    #[test]
    fn build_is_deterministic() {
        let a = Network::build(&tiny(Variant::Enhanced, true), 11, InitScheme::Random, None).unwrap();
        let b = Network::build(&tiny(Variant::Enhanced, true), 11, InitScheme::Random, None).unwrap();
        let c = Network::build(&tiny(Variant::Enhanced, true), 12, InitScheme::Random, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let net = Network::build(&tiny(Variant::Vanilla, false), 0, InitScheme::Random, None).unwrap();
        assert!(matches!(net.infer(&cloud(1, 4, 2, 0)), Err(Error::Shape { .. })));
        assert!(matches!(net.infer(&Tensor::zeros(&[1, 0, 3])), Err(Error::EmptyCloud)));
    }
}
