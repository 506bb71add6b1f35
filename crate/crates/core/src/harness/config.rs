use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{AugmentConfig, Corruption, MNIST_POINTS};
use crate::error::{Error, Result};
use crate::kernels::KernelFn;
use crate::kv::KvMap;
use crate::model::{ChannelSpec, ModelSpec};
use crate::optim::{FreezeRegime, BASE_LR, BATCH_SIZE, DEFAULT_EPOCHS};
use crate::rbf::InitScheme;

/// Environment variable naming the directory that holds `mnist/` and
/// `modelnet40/` when a config gives no `data_dir`.
pub const DATA_ENV: &str = "RBFPOINT_DATA";
/// Split sizes of the procedural dataset when no limit is given.
pub const SYNTHETIC_TRAIN: usize = 512;
pub const SYNTHETIC_TEST: usize = 128;
pub const DEFAULT_POINTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    /// IDX digits rendered as 2-D point sets.
    Mnist,
    /// Procedural 3-D shapes with normals; needs no files.
    Synthetic,
    /// `root/<class>/{train,test}/*.off`, as ModelNet is distributed.
    Off,
}

impl DatasetKind {
    pub fn tag(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Synthetic => "synthetic",
            DatasetKind::Off => "off",
        }
    }

    pub fn coord_dim(self) -> usize {
        match self {
            DatasetKind::Mnist => 2,
            DatasetKind::Synthetic | DatasetKind::Off => 3,
        }
    }

    /// Subdirectory of the data root.
    fn root_name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Synthetic => "",
            DatasetKind::Off => "modelnet40",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [DatasetKind::Mnist, DatasetKind::Synthetic, DatasetKind::Off]
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown dataset `{s}`")))
    }
}

/// Every recognised key with its meaning; anything else is rejected.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("name", "run label used in summaries"),
    ("dataset", "mnist | synthetic | off"),
    ("data_dir", "dataset directory; default $RBFPOINT_DATA/mnist or $RBFPOINT_DATA/modelnet40"),
    ("cache_dir", "directory for sampled-dataset caches; empty disables caching"),
    ("train_limit", "first N training samples; 0 means all (512 for synthetic)"),
    ("test_limit", "first N test samples; 0 means all (128 for synthetic)"),
    ("points", "points per cloud; default 256 for mnist, 1024 otherwise"),
    ("normals", "feed surface normals as extra input columns"),
    ("init", "kernel init: uniform | random | kmeans | overlap | local"),
    ("freeze", "fix-center | fix-size | fix-both | optim-both"),
    ("rotate", "random rotation about the gravity axis during training"),
    ("gravity_axis", "rotation axis for 3-D data (0, 1 or 2)"),
    ("jitter_std", "Gaussian jitter std added to training coordinates"),
    ("jitter_clip", "jitter clip magnitude"),
    ("test_augment", "apply the training augmentation to test clouds too"),
    ("corrupt", "test-time sweep, dropout:F[,F..] or noise:STD[,STD..]"),
    ("seed", "master seed for every random stream"),
    ("epochs", "training epochs"),
    ("lr", "base learning rate of the step schedule"),
    ("batch_size", "samples per optimizer step"),
    ("out_dir", "where config.txt, metrics.csv and model.ckpt go"),
    ("variant", "model: vanilla | enhanced | raw"),
    ("kernels", "model: kernel mix over the coordinates, e.g. gaussian:300 or gaussian+imq:300"),
    ("channels", "model: explicit channels, e.g. gaussian:300@0..3,gaussian:300@3..6"),
    ("shared_mlp", "model: shared per-point widths (enhanced)"),
    ("classifier", "model: classifier hidden widths"),
    ("keep_prob", "model: dropout keep probability in the classifier"),
    ("transform", "model: use the spatial transform network"),
    ("transform_normals", "model: rotate normals with the predicted transform"),
    ("tnet_point", "model: transform network per-point widths"),
    ("tnet_fc", "model: transform network fully connected widths"),
    ("coord_dim", "model: coordinate columns (normally implied by the dataset)"),
    ("input_dim", "model: input columns (normally implied by the dataset)"),
    ("classes", "model: class count (normally implied by the dataset)"),
];

/// One experiment: what to load, what to build, how to train.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub train_limit: usize,
    pub test_limit: usize,
    pub points: usize,
    pub normals: bool,
    /// Model keys exactly as written; resolved once the dataset is known.
    pub model: KvMap,
    pub init: InitScheme,
    pub freeze: FreezeRegime,
    pub augment: AugmentConfig,
    pub test_augment: bool,
    pub corrupt: Option<Corruption>,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            dataset: DatasetKind::Synthetic,
            data_dir: None,
            cache_dir: None,
            train_limit: 0,
            test_limit: 0,
            points: DEFAULT_POINTS,
            normals: false,
            model: KvMap::default(),
            init: InitScheme::Random,
            freeze: FreezeRegime::OptimBoth,
            augment: AugmentConfig::default(),
            test_augment: true,
            corrupt: None,
            seed: 0,
            epochs: DEFAULT_EPOCHS,
            lr: BASE_LR,
            batch_size: BATCH_SIZE,
            out_dir: PathBuf::from("runs/run"),
        }
    }
}

fn path_or_none(kv: &KvMap, key: &str) -> Option<PathBuf> {
    kv.raw(key).filter(|v| !v.is_empty()).map(PathBuf::from)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvMap::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let known: Vec<&str> = CONFIG_KEYS.iter().map(|(k, _)| *k).collect();
        kv.reject_unknown(&known)?;
        let d = ExperimentConfig::default();
        let dataset: DatasetKind = kv.get_or("dataset", d.dataset)?;
        let default_points = match dataset {
            DatasetKind::Mnist => MNIST_POINTS,
            _ => DEFAULT_POINTS,
        };
        let mut model = KvMap::default();
        for k in ModelSpec::KEYS {
            if let Some(v) = kv.raw(k) {
                model.set(k, v);
            }
        }
        let augment = AugmentConfig {
            rotate: kv.get_or("rotate", d.augment.rotate)?,
            gravity_axis: kv.get_or("gravity_axis", d.augment.gravity_axis)?,
            fixed_angle: None,
            jitter_std: kv.get_or("jitter_std", d.augment.jitter_std)?,
            jitter_clip: kv.get_or("jitter_clip", d.augment.jitter_clip)?,
        };
        let corrupt = match kv.raw("corrupt") {
            None | Some("") | Some("none") => None,
            Some(v) => Some(v.parse()?),
        };
        let cfg = Self {
            name: kv.get_or("name", d.name)?,
            dataset,
            data_dir: path_or_none(kv, "data_dir"),
            cache_dir: path_or_none(kv, "cache_dir"),
            train_limit: kv.get_or("train_limit", 0)?,
            test_limit: kv.get_or("test_limit", 0)?,
            points: kv.get_or("points", default_points)?,
            normals: kv.get_or("normals", false)?,
            model,
            init: kv.get_or("init", d.init)?,
            freeze: kv.get_or("freeze", d.freeze)?,
            augment,
            test_augment: kv.get_or("test_augment", d.test_augment)?,
            corrupt,
            seed: kv.get_or("seed", d.seed)?,
            epochs: kv.get_or("epochs", d.epochs)?,
            lr: kv.get_or("lr", d.lr)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            out_dir: kv.get_or("out_dir", d.out_dir)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Config("points must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2 (batch norm)".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if self.normals && self.dataset == DatasetKind::Mnist {
            return Err(Error::Config("mnist clouds carry no normals".into()));
        }
        if !(self.augment.jitter_std >= 0.0 && self.augment.jitter_clip >= 0.0) {
            return Err(Error::Config("jitter std and clip must be non-negative".into()));
        }
        // Surface model-key errors now rather than after loading data.
        ModelSpec::from_kv(&self.model, self.dataset.coord_dim(), self.input_dim(), 2)?;
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = self.model.clone();
        kv.set("name", &self.name);
        kv.set("dataset", self.dataset);
        kv.set("data_dir", self.data_dir.as_deref().map_or(String::new(), |p| p.display().to_string()));
        kv.set("cache_dir", self.cache_dir.as_deref().map_or(String::new(), |p| p.display().to_string()));
        kv.set("train_limit", self.train_limit);
        kv.set("test_limit", self.test_limit);
        kv.set("points", self.points);
        kv.set("normals", self.normals);
        kv.set("init", self.init);
        kv.set("freeze", self.freeze);
        kv.set("rotate", self.augment.rotate);
        kv.set("gravity_axis", self.augment.gravity_axis);
        kv.set("jitter_std", self.augment.jitter_std);
        kv.set("jitter_clip", self.augment.jitter_clip);
        kv.set("test_augment", self.test_augment);
        kv.set("corrupt", self.corrupt.as_ref().map_or("none".to_string(), |c| c.to_string()));
        kv.set("seed", self.seed);
        kv.set("epochs", self.epochs);
        kv.set("lr", self.lr);
        kv.set("batch_size", self.batch_size);
        kv.set("out_dir", self.out_dir.display());
        kv
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    /// Re-parses with one key replaced, so overrides get full validation.
    pub fn with(&self, key: &str, value: impl fmt::Display) -> Result<Self> {
        let mut kv = self.to_kv();
        kv.set(key, value);
        Self::from_kv(&kv)
    }

    /// `key=value` overrides in order.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut kv = self.to_kv();
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{}` is not key=value", o.as_ref())))?;
            kv.set(k.trim(), v.trim());
        }
        Self::from_kv(&kv)
    }

    pub fn input_dim(&self) -> usize {
        self.dataset.coord_dim() * if self.normals { 2 } else { 1 }
    }

    /// The network for a dataset with `classes` labels. With normals and no
    /// explicit channels, a Gaussian channel over the normals mirrors the
    /// coordinate channel.
    pub fn model_spec(&self, classes: usize) -> Result<ModelSpec> {
        let d = self.dataset.coord_dim();
        let mut spec = ModelSpec::from_kv(&self.model, d, self.input_dim(), classes)?;
        let explicit = self.model.contains("channels");
        if self.normals && !explicit && !spec.channels.is_empty() {
            let m = spec.channels[0].kernels;
            spec.channels.push(ChannelSpec::new(KernelFn::Gaussian, m, d..2 * d));
            spec.validate()?;
        }
        if spec.num_classes != classes {
            return Err(Error::Config(format!(
                "config says {} classes, dataset has {classes}",
                spec.num_classes
            )));
        }
        Ok(spec)
    }

    /// The dataset directory, from `data_dir` or the environment fallback.
    pub fn resolve_data_dir(&self) -> Result<PathBuf> {
        if let Some(p) = &self.data_dir {
            return Ok(p.clone());
        }
        match std::env::var_os(DATA_ENV) {
            Some(root) => Ok(PathBuf::from(root).join(self.dataset.root_name())),
            // Reported as a missing dataset so callers treat both alike.
            None => Err(Error::MissingDataset(PathBuf::from(format!("${DATA_ENV}/{}", self.dataset.root_name())))),
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_lossless() {
        let cfg = ExperimentConfig::parse(
            "dataset = mnist\nvariant = enhanced\nkernels = gaussian+imq:300\ntransform = false\n\
             corrupt = dropout:0.25,0.5\nlr = 0.001\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.points, MNIST_POINTS);
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), cfg.to_text());
    }

    #[test]
    fn unknown_and_bad_keys_are_rejected() {
        assert!(ExperimentConfig::parse("epoch = 3\n").unwrap_err().to_string().contains("unknown key"));
        assert!(ExperimentConfig::parse("variant = huge\n").is_err());
        assert!(ExperimentConfig::parse("dataset = mnist\nnormals = true\n").is_err());
        assert!(ExperimentConfig::parse("batch_size = 1\n").is_err());
    }

    #[test]
    fn overrides_revalidate() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.with_overrides(&["epochs=3", "seed = 9"]).unwrap().epochs, 3);
        assert!(cfg.with("freeze", "sometimes").is_err());
    }

    #[test]
    fn normals_get_a_mirrored_channel() {
        let cfg = ExperimentConfig::parse("normals = true\nkernels = imq:20\n").unwrap();
        let spec = cfg.model_spec(8).unwrap();
        assert_eq!(spec.input_dim, 6);
        assert_eq!(spec.channels.len(), 2);
        assert_eq!((spec.channels[1].slice.clone(), spec.channels[1].kernels), (3..6, 20));
        assert!(cfg.model_spec(8).is_ok());
        assert!(ExperimentConfig::parse("classes = 5\n").unwrap().model_spec(8).is_err());
    }
}
