//! MNIST IDX files and digit-to-point-set conversion.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
/// Pixels at or above this intensity become points.
pub const BRIGHTNESS_THRESHOLD: u8 = 128;
pub const MNIST_SIDE: usize = 28;
pub const MNIST_POINTS: usize = 256;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `count × rows × cols`.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn len(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let s = self.rows * self.cols;
        &self.pixels[i * s..(i + 1) * s]
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("IDX header truncated".into()))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("IDX image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let (n, rows, cols) = (be_u32(bytes, 4)? as usize, be_u32(bytes, 8)? as usize, be_u32(bytes, 12)? as usize);
    let body = &bytes[16..];
    if rows == 0 || cols == 0 || body.len() != n * rows * cols {
        return Err(Error::Format(format!(
            "IDX image body has {} bytes, header promises {n}×{rows}×{cols}",
            body.len()
        )));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("IDX label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!("IDX label body has {} bytes, header promises {n}", body.len())));
    }
    Ok(body.to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingDataset(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

/// Images and labels of one split from a directory holding the four IDX files.
pub fn read_mnist_split(dir: &Path, train: bool) -> Result<(IdxImages, Vec<u8>)> {
    let (i, l) = if train { (TRAIN_IMAGES, TRAIN_LABELS) } else { (TEST_IMAGES, TEST_LABELS) };
    let images = parse_idx_images(&read(&dir.join(i))?)?;
    let labels = parse_idx_labels(&read(&dir.join(l))?)?;
    if images.len() != labels.len() {
        return Err(Error::Format(format!("{} images but {} labels", images.len(), labels.len())));
    }
    Ok((images, labels))
}

/// Bright pixel positions as `(row, col)`, in raster order.
pub fn bright_pixels(image: &[u8], cols: usize) -> Vec<(usize, usize)> {
    image
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= BRIGHTNESS_THRESHOLD)
        .map(|(i, _)| (i / cols, i % cols))
        .collect()
}

/// Pixel centers mapped onto `[−1, 1]²` as `(x, y) = (col, row)`. More bright
/// pixels than `n` are subsampled without replacement (raster order kept);
/// fewer are topped up by resampling with replacement, and only the copies get
/// uniform jitter of up to a quarter pixel width (1/56 at 28 pixels).
pub fn mnist_to_points<R: Rng + ?Sized>(image: &[u8], side: usize, n: usize, label: usize, rng: &mut R) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    let px = bright_pixels(image, side);
    if px.is_empty() {
        return Err(Error::InvalidParameter("image has no pixel at or above the threshold".into()));
    }
    let scale = 2.0 / side as f64;
    let to_xy = |(r, c): (usize, usize)| [(c as f64 + 0.5) * scale - 1.0, (r as f64 + 0.5) * scale - 1.0];
    let mut coords = Vec::with_capacity(2 * n);
    if px.len() >= n {
        let mut keep = index::sample(rng, px.len(), n).into_vec();
        keep.sort_unstable();
        for i in keep {
            coords.extend(to_xy(px[i]));
        }
    } else {
        for &p in &px {
            coords.extend(to_xy(p));
        }
        let half = scale / 4.0;
        for _ in px.len()..n {
            let [x, y] = to_xy(px[rng.random_range(0..px.len())]);
            coords.push(x + rng.random_range(-half..half));
            coords.push(y + rng.random_range(-half..half));
        }
    }
    PointCloud::new(Tensor::new(vec![n, 2], coords)?, None, label)
}
