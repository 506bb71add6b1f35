//! A one-sample dataset must be memorized. The head is a single linear layer:
//! batch norm there would need two samples per batch, while the shared MLP
//! normalizes over points and is fine with one.

use rbfpoint::data::{synthetic_shapes, AugmentConfig};
use rbfpoint::model::{ModelSpec, Network};
use rbfpoint::optim::{train_epoch, AdamState, LrSchedule, TrainOptions};
use rbfpoint::rbf::InitScheme;

#[test]
fn one_sample_drives_loss_below_threshold() {
    let ds = synthetic_shapes(1, 128, 0, 0).unwrap();
    let mut spec = ModelSpec::enhanced(3, 8, 32);
    spec.use_transform = false;
    spec.classifier_widths.clear();
    let mut net = Network::build(&spec, 0, InitScheme::Random, None).unwrap();
    let mut adam = AdamState::new();
    let opts = TrainOptions { augment: AugmentConfig::none(), ..TrainOptions::default() };
    let schedule = LrSchedule::default();
    let mut loss = f64::INFINITY;
    for e in 0..200 {
        loss = train_epoch(&mut net, &mut adam, &ds, e, schedule.lr_at(e), &opts).unwrap().loss;
    }
    assert!(loss < 1e-3, "loss after 200 epochs: {loss}");
}
