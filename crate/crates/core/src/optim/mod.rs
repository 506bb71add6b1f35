//! Adam with step-decay schedule and the seeded training loop.

mod adam;
mod freeze;
mod schedule;
mod train;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use freeze::FreezeRegime;
pub use schedule::{LrSchedule, BASE_LR, LR_DECAY, LR_FLOOR, LR_INTERVAL};
pub use train::{batch_ranges, evaluate, train_epoch, EpochStats, EvalReport, TrainOptions, BATCH_SIZE, DEFAULT_EPOCHS};
