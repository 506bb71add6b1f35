//! Dataset ingestion, augmentation and test-time corruption.

mod augment;
mod cloud;
mod mesh;
mod mnist;
mod synthetic;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub use augment::{augment, corrupt_dropout, corrupt_noise, AugmentConfig, Corruption, JITTER_CLIP, JITTER_STD};
pub use cloud::{batch_tensor, PointCloud};
pub use mesh::{parse_off, sample_surface, sample_surface_raw, TriangleMesh, MIN_FACE_AREA};
pub use mnist::{
    bright_pixels, mnist_to_points, parse_idx_images, parse_idx_labels, read_mnist_split, IdxImages,
    BRIGHTNESS_THRESHOLD, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, MNIST_POINTS, MNIST_SIDE, TEST_IMAGES,
    TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS,
};
pub use synthetic::{shape_mesh, synthetic_shapes, SHAPE_CLASSES};

use crate::error::{Error, Result};
use crate::seed::{stream, substream};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 8] = b"RBFPDSET";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub clouds: Vec<PointCloud>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.clouds.iter().map(|c| c.label).collect()
    }

    pub fn coord_dim(&self) -> Option<usize> {
        self.clouds.first().map(|c| c.dim())
    }

    pub fn has_normals(&self) -> bool {
        !self.clouds.is_empty() && self.clouds.iter().all(|c| c.normals.is_some())
    }

    /// The first `n` clouds.
    pub fn truncated(mut self, n: usize) -> Self {
        self.clouds.truncate(n);
        self
    }

    /// All points of all clouds as `[P, features]` rows, for k-means.
    pub fn point_rows(&self, with_normals: bool) -> Result<Tensor> {
        let first = self.clouds.first().ok_or(Error::EmptyCloud)?;
        let w = first.features(with_normals);
        let mut data = Vec::new();
        for c in &self.clouds {
            if c.features(with_normals) != w {
                return Err(Error::shape("point_rows", &[c.features(with_normals)], &[w]));
            }
            let start = data.len();
            data.resize(start + c.len() * w, 0.0);
            c.write_features(with_normals, &mut data[start..]);
        }
        Tensor::new(vec![data.len() / w, w], data)
    }
}

/// The first `limit` digits of an MNIST split as `points`-point clouds.
/// Digit `i` draws from its own sub-stream, so prefixes agree across limits.
pub fn load_mnist(dir: &Path, train: bool, limit: usize, points: usize, seed: u64) -> Result<Dataset> {
    let (images, labels) = read_mnist_split(dir, train)?;
    let split = if train { 0 } else { 1 << 32 };
    let clouds = (0..limit.min(images.len()))
        .map(|i| {
            let mut rng = substream(seed, stream::SAMPLE, split + i as u64);
            mnist_to_points(images.image(i), images.cols, points, labels[i] as usize, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        clouds,
        num_classes: 10,
    })
}

/// Loads every `*.off` file under `root/<class>/<split>/`, sampling `points`
/// points with normals from each. Classes are the sorted subdirectory names;
/// splits other than `train` draw from a disjoint range of sub-streams.
pub fn load_off_tree(root: &Path, split: &str, points: usize, seed: u64) -> Result<(Dataset, Vec<String>)> {
    if !root.is_dir() {
        return Err(Error::MissingDataset(root.to_path_buf()));
    }
    let mut classes: Vec<String> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    classes.sort();
    let offset: u64 = if split == "train" { 0 } else { 1 << 32 };
    let mut clouds = Vec::new();
    for (label, name) in classes.iter().enumerate() {
        let dir = root.join(name).join(split);
        if !dir.is_dir() {
            continue;
        }
        let mut files: Vec<_> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "off"))
            .collect();
        files.sort();
        for f in files {
            let text = std::fs::read_to_string(&f)?;
            let mesh = parse_off(&text).map_err(|e| Error::Format(format!("{}: {e}", f.display())))?;
            let mut rng = substream(seed, stream::SAMPLE, offset + clouds.len() as u64);
            clouds.push(sample_surface(&mesh, points, label, &mut rng)?);
        }
    }
    Ok((
        Dataset {
            clouds,
            num_classes: classes.len(),
        },
        classes,
    ))
}

/// Binary container:
/// `magic, u32 version, u64 count, u32 classes`, then per cloud
/// `u32 label, u32 N, u32 d, u8 has_normals, N·d f64 coords, [N·d f64 normals]`.
pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(ds.clouds.len() as u64).to_le_bytes())?;
    w.write_all(&(ds.num_classes as u32).to_le_bytes())?;
    for c in &ds.clouds {
        for v in [c.label, c.len(), c.dim()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&[c.normals.is_some() as u8])?;
        for t in std::iter::once(&c.coords).chain(c.normals.as_ref()) {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn take<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated dataset file: {e}")))?;
    Ok(b)
}

fn take_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| take::<8, _>(r).map(f64::from_le_bytes)).collect()
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    if &take::<8, _>(&mut r)? != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let count = u64::from_le_bytes(take(&mut r)?) as usize;
    let num_classes = u32::from_le_bytes(take(&mut r)?) as usize;
    let mut clouds = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let label = u32::from_le_bytes(take(&mut r)?) as usize;
        let n = u32::from_le_bytes(take(&mut r)?) as usize;
        let d = u32::from_le_bytes(take(&mut r)?) as usize;
        if n * d > 1 << 26 {
            return Err(Error::Format(format!("implausible cloud size {n}×{d}")));
        }
        let has_normals = take::<1, _>(&mut r)?[0] != 0;
        let coords = Tensor::new(vec![n, d], take_f64s(&mut r, n * d)?)?;
        let normals = if has_normals {
            Some(Tensor::new(vec![n, d], take_f64s(&mut r, n * d)?)?)
        } else {
            None
        };
        if label >= num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        clouds.push(PointCloud::new(coords, normals, label)?);
    }
    Ok(Dataset { clouds, num_classes })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_dataset(ds, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}
