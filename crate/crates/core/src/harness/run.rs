use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::{
    augment, load_dataset, load_mnist, load_off_tree, save_dataset, synthetic_shapes, Corruption, Dataset,
    PointCloud,
};
use crate::error::{Error, Result};
use crate::harness::config::{DatasetKind, ExperimentConfig, SYNTHETIC_TEST, SYNTHETIC_TRAIN};
use crate::harness::metrics::{MetricsRow, MetricsWriter, RunMetrics};
use crate::kv::KvMap;
use crate::model::{count_flops, load_checkpoint, save_checkpoint, FlopReport, ModelSpec, Network, ParamCount};
use crate::optim::{evaluate, train_epoch, AdamState, EvalReport, LrSchedule, TrainOptions, BATCH_SIZE};
use crate::rbf::{dump_kernels, write_kernels, InitScheme};
use crate::seed::{stream, substream};
use crate::tensor::Tensor;

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
/// Checkpoint metadata keys besides the `config.`-prefixed run config.
pub const META_EPOCH: &str = "epoch";
pub const META_TEST_ACC: &str = "test_acc";
pub const META_TEST_ACC_CLASS: &str = "test_acc_class";
const META_CONFIG_PREFIX: &str = "config.";

fn limit_or(limit: usize, all: usize) -> usize {
    if limit == 0 {
        all
    } else {
        limit
    }
}

/// One split as the config describes it, through the cache when configured.
pub fn load_split(cfg: &ExperimentConfig, train: bool) -> Result<Dataset> {
    let split = if train { "train" } else { "test" };
    let limit = if train { cfg.train_limit } else { cfg.test_limit };
    let cache = cfg.cache_dir.as_ref().map(|dir| {
        dir.join(format!("{}-{split}-{}pts-{limit}-seed{}.rbfds", cfg.dataset, cfg.points, cfg.seed))
    });
    if let Some(path) = cache.as_ref().filter(|p| p.exists()) {
        return load_dataset(path);
    }
    let ds = match cfg.dataset {
        DatasetKind::Mnist => {
            let dir = cfg.resolve_data_dir()?;
            load_mnist(&dir, train, limit_or(limit, usize::MAX), cfg.points, cfg.seed)?
        }
        DatasetKind::Synthetic => {
            let n = limit_or(limit, if train { SYNTHETIC_TRAIN } else { SYNTHETIC_TEST });
            let first = if train { 0 } else { 1 << 32 };
            synthetic_shapes(n, cfg.points, cfg.seed, first)?
        }
        DatasetKind::Off => {
            let dir = cfg.resolve_data_dir()?;
            let (mut ds, _) = load_off_tree(&dir, split, cfg.points, cfg.seed)?;
            if limit > 0 && limit < ds.len() {
                // A seeded subset in original order, so every class can appear.
                let mut idx: Vec<usize> = (0..ds.len()).collect();
                idx.shuffle(&mut substream(cfg.seed, stream::SPLIT, train as u64));
                idx.truncate(limit);
                idx.sort_unstable();
                ds.clouds = idx.into_iter().map(|i| ds.clouds[i].clone()).collect();
            }
            ds
        }
    };
    if ds.is_empty() {
        return Err(Error::InvalidParameter(format!("{} {split} split is empty", cfg.dataset)));
    }
    if cfg.normals && !ds.has_normals() {
        return Err(Error::Config(format!("{} clouds carry no normals", cfg.dataset)));
    }
    if let Some(path) = cache {
        fs::create_dir_all(path.parent().expect("cache files live in a directory"))?;
        save_dataset(&ds, &path)?;
    }
    Ok(ds)
}

/// The initialized network, with the config's freeze regime applied.
pub fn build_network(cfg: &ExperimentConfig, train: &Dataset) -> Result<Network> {
    let spec = cfg.model_spec(train.num_classes)?;
    let pool = match cfg.init {
        InitScheme::Kmeans => Some(train.point_rows(cfg.normals)?),
        _ => None,
    };
    let mut net = Network::build(&spec, cfg.seed, cfg.init, pool.as_ref())?;
    cfg.freeze.apply(&mut net);
    Ok(net)
}

/// Test clouds after optional test-time augmentation and one corruption
/// level. Cloud `i` always draws from the same sub-streams, so evaluation is
/// repeatable.
pub fn prepare_test_clouds(
    cfg: &ExperimentConfig,
    test: &Dataset,
    corruption: Option<(&Corruption, usize)>,
) -> Result<Vec<PointCloud>> {
    test.clouds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let i = i as u64;
            let mut c = if cfg.test_augment && !cfg.augment.is_identity() {
                augment(c, &mut substream(cfg.seed, stream::TEST_AUGMENT, i), &cfg.augment)?
            } else {
                c.clone()
            };
            if let Some((corr, level)) = corruption {
                let mut rng = substream(cfg.seed, stream::CORRUPT, ((level as u64) << 32) + i);
                c = corr.apply(corr.levels()[level], &c, &mut rng)?;
            }
            Ok(c)
        })
        .collect()
}

pub fn evaluate_split(
    net: &Network,
    cfg: &ExperimentConfig,
    test: &Dataset,
    corruption: Option<(&Corruption, usize)>,
) -> Result<EvalReport> {
    let clouds = prepare_test_clouds(cfg, test, corruption)?;
    evaluate(net, &clouds, test.num_classes, cfg.normals, BATCH_SIZE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub metrics: RunMetrics,
    pub checkpoint: PathBuf,
    pub out_dir: PathBuf,
}

impl TrainOutcome {
    pub fn best(&self) -> Option<&MetricsRow> {
        self.metrics.best()
    }
}

fn meta_for(cfg: &ExperimentConfig, row: &MetricsRow) -> KvMap {
    let mut meta = KvMap::default();
    let kv = cfg.to_kv();
    for k in kv.keys() {
        meta.set(&format!("{META_CONFIG_PREFIX}{k}"), kv.raw(k).unwrap_or_default());
    }
    meta.set(META_EPOCH, row.epoch);
    meta.set(META_TEST_ACC, row.test_acc);
    meta.set(META_TEST_ACC_CLASS, row.test_acc_class);
    meta
}

/// The run config stored in checkpoint metadata.
pub fn config_from_meta(meta: &KvMap) -> Result<ExperimentConfig> {
    let mut kv = KvMap::default();
    for k in meta.keys() {
        if let Some(stripped) = k.strip_prefix(META_CONFIG_PREFIX) {
            kv.set(stripped, meta.raw(k).unwrap_or_default());
        }
    }
    if kv.keys().next().is_none() {
        return Err(Error::Format("checkpoint carries no run config".into()));
    }
    ExperimentConfig::from_kv(&kv)
}

/// Trains for `cfg.epochs`, evaluating after every epoch. Writes
/// `config.txt`, appends `metrics.csv` row by row and saves `model.ckpt`
/// whenever test instance accuracy improves.
pub fn cmd_train(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&MetricsRow)) -> Result<TrainOutcome> {
    let train = load_split(cfg, true)?;
    let test = load_split(cfg, false)?;
    if test.num_classes != train.num_classes {
        return Err(Error::Format(format!(
            "train split has {} classes, test split {}",
            train.num_classes, test.num_classes
        )));
    }
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    let mut net = build_network(cfg, &train)?;
    let mut adam = AdamState::new();
    let schedule = LrSchedule::with_base(cfg.lr);
    let opts = TrainOptions {
        batch_size: cfg.batch_size,
        augment: cfg.augment.clone(),
        use_normals: cfg.normals,
        seed: cfg.seed,
    };
    let mut writer = MetricsWriter::create(&out.join(METRICS_FILE))?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let mut metrics = RunMetrics::default();
    let mut best = f64::NEG_INFINITY;
    for epoch in 0..cfg.epochs {
        let t = Instant::now();
        let lr = schedule.lr_at(epoch);
        let stats = train_epoch(&mut net, &mut adam, &train, epoch, lr, &opts)?;
        let report = evaluate_split(&net, cfg, &test, None)?;
        let row = MetricsRow {
            epoch,
            lr,
            train_loss: stats.loss,
            train_acc: stats.accuracy,
            test_acc: report.instance_accuracy(),
            test_acc_class: report.class_accuracy(),
            seconds: t.elapsed().as_secs_f64(),
        };
        if row.test_acc > best {
            best = row.test_acc;
            save_checkpoint(&net, &meta_for(cfg, &row), &ckpt)?;
        }
        writer.write(&row)?;
        progress(&row);
        metrics.rows.push(row);
    }
    Ok(TrainOutcome {
        metrics,
        checkpoint: ckpt,
        out_dir: out,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    /// `clean`, or the corruption kind.
    pub condition: String,
    pub level: Option<f64>,
    pub instance: f64,
    pub class: f64,
}

/// One clean row followed by one row per corruption level.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    /// Test accuracy recorded when the checkpoint was saved, if present.
    pub recorded: Option<f64>,
}

impl EvalSummary {
    pub fn clean(&self) -> &EvalRow {
        &self.rows[0]
    }
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8} {:>10} {:>10}", "condition", "level", "instance", "class")?;
        for r in &self.rows {
            let level = r.level.map_or("-".to_string(), |l| l.to_string());
            writeln!(
                f,
                "{:<10} {:>8} {:>9.2}% {:>9.2}%",
                r.condition,
                level,
                100.0 * r.instance,
                100.0 * r.class
            )?;
        }
        if let Some(acc) = self.recorded {
            write!(f, "recorded at save time: {:.2}%", 100.0 * acc)?;
        }
        Ok(())
    }
}

/// Evaluates `net` on the config's test split, clean and under each level of
/// `corruption`.
pub fn eval_network(net: &Network, cfg: &ExperimentConfig, corruption: Option<&Corruption>) -> Result<EvalSummary> {
    let test = load_split(cfg, false)?;
    let clean = evaluate_split(net, cfg, &test, None)?;
    let mut rows = vec![EvalRow {
        condition: "clean".into(),
        level: None,
        instance: clean.instance_accuracy(),
        class: clean.class_accuracy(),
    }];
    if let Some(c) = corruption {
        for (i, &level) in c.levels().iter().enumerate() {
            let r = evaluate_split(net, cfg, &test, Some((c, i)))?;
            rows.push(EvalRow {
                condition: c.kind().into(),
                level: Some(level),
                instance: r.instance_accuracy(),
                class: r.class_accuracy(),
            });
        }
    }
    Ok(EvalSummary { rows, recorded: None })
}

/// Loads a checkpoint and evaluates it. The dataset comes from `cfg` when
/// given, otherwise from the config stored in the checkpoint.
pub fn cmd_eval(checkpoint: &Path, cfg: Option<&ExperimentConfig>, corruption: Option<&Corruption>) -> Result<EvalSummary> {
    let (net, meta) = load_checkpoint(checkpoint)?;
    let cfg = match cfg {
        Some(c) => c.clone(),
        None => config_from_meta(&meta)?,
    };
    let corruption = corruption.or(cfg.corrupt.as_ref());
    let mut summary = eval_network(&net, &cfg, corruption)?;
    summary.recorded = meta.get(META_TEST_ACC)?;
    Ok(summary)
}

/// Published totals for the two variants, for side-by-side printing.
pub const REFERENCE_VANILLA: (&str, &str) = ("2.2M", "24M");
pub const REFERENCE_ENHANCED: (&str, &str) = ("3.2M", "218M");

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub spec: ModelSpec,
    pub points: usize,
    pub params: ParamCount,
    pub flops: FlopReport,
    pub passes: usize,
    /// Median wall time of one single-sample inference.
    pub median_ms: f64,
}

impl fmt::Display for BenchmarkReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(f, "variant {} with {} points, {} kernels", self.spec.variant, self.points, self.spec.rbf_width())?;
        writeln!(f, "parameters")?;
        writeln!(f, "  tnet        {}", p.tnet)?;
        writeln!(f, "  rbf         {}", p.rbf)?;
        writeln!(f, "  shared_mlp  {}", p.shared_mlp)?;
        writeln!(f, "  classifier  {}", p.classifier)?;
        writeln!(f, "  batch_norm  {}", p.batch_norm)?;
        writeln!(f, "  total       {}", p.total)?;
        writeln!(f, "flops per sample")?;
        for line in self.flops.to_string().lines() {
            writeln!(f, "  {line}")?;
        }
        writeln!(f, "inference   {:.3} ms/sample (median of {} passes)", self.median_ms, self.passes)?;
        writeln!(
            f,
            "published reference: vanilla {} params / {} FLOPs, enhanced {} params / {} FLOPs",
            REFERENCE_VANILLA.0, REFERENCE_VANILLA.1, REFERENCE_ENHANCED.0, REFERENCE_ENHANCED.1
        )?;
        write!(
            f,
            "note: totals depend on the classifier head and transform network, which the reference does not \
             itemize; only the RBF subtotal is directly comparable"
        )
    }
}

/// Parameter and FLOP accounting plus the median of `passes` timed
/// single-sample inferences after `warmup` untimed ones.
pub fn cmd_benchmark(spec: &ModelSpec, points: usize, warmup: usize, passes: usize, seed: u64) -> Result<BenchmarkReport> {
    if passes == 0 {
        return Err(Error::InvalidParameter("benchmark needs at least one timed pass".into()));
    }
    let net = Network::build(spec, seed, InitScheme::Random, None)?;
    let mut rng = substream(seed, stream::SAMPLE, 0);
    let rows: Vec<f64> = (0..points)
        .flat_map(|_| crate::rbf::sample_in_ball(spec.input_dim, 1.0, &mut rng))
        .collect();
    let x = Tensor::new(vec![1, points, spec.input_dim], rows)?;
    for _ in 0..warmup {
        net.infer(&x)?;
    }
    let mut times: Vec<f64> = (0..passes)
        .map(|_| {
            let t = Instant::now();
            net.infer(&x).map(|_| t.elapsed().as_secs_f64() * 1e3)
        })
        .collect::<Result<_>>()?;
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median_ms = if times.len() % 2 == 1 { times[mid] } else { 0.5 * (times[mid - 1] + times[mid]) };
    Ok(BenchmarkReport {
        spec: spec.clone(),
        points,
        params: net.param_count(),
        flops: count_flops(spec, points),
        passes,
        median_ms,
    })
}

/// Writes the kernel CSV of a checkpoint to `out`, or to the writer.
pub fn cmd_kernels<W: Write>(checkpoint: &Path, out: Option<&Path>, w: W) -> Result<()> {
    let (net, _) = load_checkpoint(checkpoint)?;
    match out {
        Some(path) => dump_kernels(&net.rbf, path),
        None => write_kernels(&net.rbf, w),
    }
}
