//! Experiment orchestration: configs, datasets, training runs, evaluation
//! sweeps, benchmarks, kernel dumps and preset matrices.
//!
//! A run directory holds `config.txt` (the full config), `metrics.csv` (one
//! row per epoch, appended as training goes) and `model.ckpt` (the best
//! epoch so far by test instance accuracy).

mod config;
mod metrics;
mod presets;
mod run;

pub use config::{DatasetKind, ExperimentConfig, CONFIG_KEYS, DATA_ENV, DEFAULT_POINTS, SYNTHETIC_TEST, SYNTHETIC_TRAIN};
pub use metrics::{MetricsRow, MetricsWriter, RunMetrics, METRICS_HEADER};
pub use presets::{expand_preset, render_expansion, summary_table, KERNEL_COUNTS, KERNEL_MIXES, PRESETS, SUMMARY_HEADER};
pub use run::{
    build_network, cmd_benchmark, cmd_eval, cmd_kernels, cmd_train, config_from_meta, eval_network, evaluate_split,
    load_split, prepare_test_clouds, BenchmarkReport, EvalRow, EvalSummary, TrainOutcome, CHECKPOINT_FILE,
    CONFIG_FILE, META_EPOCH, META_TEST_ACC, META_TEST_ACC_CLASS, METRICS_FILE, REFERENCE_ENHANCED, REFERENCE_VANILLA,
};
