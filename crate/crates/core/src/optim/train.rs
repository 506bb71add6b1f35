use rand::seq::SliceRandom;

use crate::data::{augment, batch_tensor, AugmentConfig, Dataset, PointCloud};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::nn::{argmax_rows, softmax_cross_entropy, Mode};
use crate::optim::AdamState;
use crate::seed::{stream, substream};

pub const BATCH_SIZE: usize = 32;
/// The recipe gives no epoch count; long enough for the schedule to decay.
pub const DEFAULT_EPOCHS: usize = 250;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub augment: AugmentConfig,
    /// Feed normals as extra input columns when the clouds carry them.
    pub use_normals: bool,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            batch_size: BATCH_SIZE,
            augment: AugmentConfig::default(),
            use_normals: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean cross-entropy over samples.
    pub loss: f64,
    /// Fraction of samples whose train-mode prediction was correct.
    pub accuracy: f64,
}

/// Consecutive `[start, end)` batches. A trailing batch of one sample joins
/// the previous batch, because batch norm needs two rows.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let bs = batch_size.max(1);
    let mut out: Vec<(usize, usize)> = (0..n).step_by(bs).map(|s| (s, (s + bs).min(n))).collect();
    if out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, e) = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").1 = e;
    }
    out
}

/// One pass over `ds` in a seeded order: augment, train-mode forward, loss,
/// backward, Adam update. Fully determined by `(opts.seed, epoch)`.
pub fn train_epoch(
    net: &mut Network,
    adam: &mut AdamState,
    ds: &Dataset,
    epoch: usize,
    lr: f64,
    opts: &TrainOptions,
) -> Result<EpochStats> {
    if ds.is_empty() {
        return Err(Error::InvalidParameter("training set is empty".into()));
    }
    let e = epoch as u64;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut substream(opts.seed, stream::SHUFFLE, e));
    let mut aug_rng = substream(opts.seed, stream::AUGMENT, e);
    let mut drop_rng = substream(opts.seed, stream::DROPOUT, e);

    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for (s, t) in batch_ranges(order.len(), opts.batch_size) {
        let idx = &order[s..t];
        let clouds: Vec<PointCloud> = idx
            .iter()
            .map(|&i| {
                if opts.augment.is_identity() {
                    Ok(ds.clouds[i].clone())
                } else {
                    augment(&ds.clouds[i], &mut aug_rng, &opts.augment)
                }
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&PointCloud> = clouds.iter().collect();
        let x = batch_tensor(&refs, opts.use_normals)?;
        let labels: Vec<usize> = clouds.iter().map(|c| c.label).collect();

        net.zero_grads();
        let logits = net.forward(&x, Mode::Train, &mut drop_rng)?;
        let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
        net.backward(&grad)?;
        adam.update(&mut net.params_mut(), lr)?;

        loss_sum += loss * labels.len() as f64;
        correct += argmax_rows(&logits).iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    let n = ds.len() as f64;
    Ok(EpochStats {
        loss: loss_sum / n,
        accuracy: correct as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub predictions: Vec<usize>,
    /// `(correct, total)` per class.
    pub per_class: Vec<(usize, usize)>,
}

impl EvalReport {
    pub fn instance_accuracy(&self) -> f64 {
        let (c, t) = self.per_class.iter().fold((0, 0), |(a, b), &(c, t)| (a + c, b + t));
        if t == 0 {
            0.0
        } else {
            c as f64 / t as f64
        }
    }

    /// Unweighted mean recall over classes present in the evaluated set.
    pub fn class_accuracy(&self) -> f64 {
        let recalls: Vec<f64> = self
            .per_class
            .iter()
            .filter(|(_, t)| *t > 0)
            .map(|&(c, t)| c as f64 / t as f64)
            .collect();
        if recalls.is_empty() {
            0.0
        } else {
            recalls.iter().sum::<f64>() / recalls.len() as f64
        }
    }
}

/// Eval-mode predictions. Consecutive clouds of equal size share a batch;
/// inference is row-independent, so batching does not change any output.
pub fn evaluate(net: &Network, clouds: &[PointCloud], num_classes: usize, use_normals: bool, batch_size: usize) -> Result<EvalReport> {
    let mut predictions = Vec::with_capacity(clouds.len());
    let mut per_class = vec![(0usize, 0usize); num_classes];
    let mut start = 0;
    while start < clouds.len() {
        let n = clouds[start].len();
        let mut end = start + 1;
        while end < clouds.len() && end - start < batch_size.max(1) && clouds[end].len() == n {
            end += 1;
        }
        let refs: Vec<&PointCloud> = clouds[start..end].iter().collect();
        let logits = net.infer(&batch_tensor(&refs, use_normals)?)?;
        for (p, c) in argmax_rows(&logits).into_iter().zip(refs) {
            let slot = per_class.get_mut(c.label).ok_or(Error::LabelOutOfRange {
                label: c.label,
                classes: num_classes,
            })?;
            slot.1 += 1;
            slot.0 += (p == c.label) as usize;
            predictions.push(p);
        }
        start = end;
    }
    Ok(EvalReport { predictions, per_class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_shapes;
    use crate::model::ModelSpec;
    use crate::optim::LrSchedule;
    use crate::rbf::InitScheme;

    #[test]
    fn trailing_singleton_joins_previous_batch() {
        assert_eq!(batch_ranges(65, 32), vec![(0, 32), (32, 65)]);
        assert_eq!(batch_ranges(64, 32), vec![(0, 32), (32, 64)]);
        assert_eq!(batch_ranges(1, 32), vec![(0, 1)]);
        assert_eq!(batch_ranges(0, 32), vec![]);
    }

    #[test]
    fn class_accuracy_is_mean_recall() {
        let r = EvalReport {
            predictions: vec![],
            per_class: vec![(9, 10), (0, 0), (1, 2)],
        };
        assert!((r.instance_accuracy() - 10.0 / 12.0).abs() < 1e-15);
        assert!((r.class_accuracy() - 0.7).abs() < 1e-15);
    }

    fn small() -> (Network, Dataset) {
        let ds = synthetic_shapes(12, 32, 3, 0).unwrap();
        let mut spec = ModelSpec::enhanced(3, 8, 8);
        spec.shared_mlp_widths = vec![8, 16];
        spec.classifier_widths = vec![16];
        spec.use_transform = false;
        (Network::build(&spec, 1, InitScheme::Random, None).unwrap(), ds)
    }

    #[test]
    fn epochs_are_deterministic() {
        let run = || {
            let (mut net, ds) = small();
            let mut adam = AdamState::new();
            let opts = TrainOptions { seed: 9, batch_size: 5, ..TrainOptions::default() };
            let s = (0..2)
                .map(|e| train_epoch(&mut net, &mut adam, &ds, e, LrSchedule::with_base(1e-3).lr_at(e), &opts).unwrap())
                .collect::<Vec<_>>();
            (s, net)
        };
        let (a, na) = run();
        let (b, nb) = run();
        assert_eq!(a, b);
        assert_eq!(na, nb);
    }

    #[test]
    fn fix_both_leaves_kernels_untouched() {
        let (mut net, ds) = small();
        net.set_rbf_trainable(false, false);
        let before = net.rbf.clone();
        let mut adam = AdamState::new();
        train_epoch(&mut net, &mut adam, &ds, 0, 1e-2, &TrainOptions::default()).unwrap();
        assert_eq!(net.rbf.channels[0].centers.value, before.channels[0].centers.value);
        assert_eq!(net.rbf.channels[0].sigmas.value, before.channels[0].sigmas.value);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let (mut net, _) = small();
        let r = train_epoch(&mut net, &mut AdamState::new(), &Dataset::default(), 0, 1e-3, &TrainOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn batched_evaluation_matches_single() {
        let (net, ds) = small();
        let a = evaluate(&net, &ds.clouds, 8, false, 32).unwrap();
        let b = evaluate(&net, &ds.clouds, 8, false, 1).unwrap();
        assert_eq!(a, b);
    }
}
