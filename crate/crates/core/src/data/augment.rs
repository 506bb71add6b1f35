//! Training augmentation and test-time corruption.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::PointCloud;
use crate::error::{Error, Result};

pub const JITTER_STD: f64 = 0.01;
pub const JITTER_CLIP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Random rotation about `gravity_axis` (3-D) or in the plane (2-D).
    pub rotate: bool,
    pub gravity_axis: usize,
    /// Overrides the random angle; used to pin the transform.
    pub fixed_angle: Option<f64>,
    pub jitter_std: f64,
    pub jitter_clip: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotate: true,
            gravity_axis: 2,
            fixed_angle: None,
            jitter_std: JITTER_STD,
            jitter_clip: JITTER_CLIP,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            rotate: false,
            jitter_std: 0.0,
            ..Self::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.rotate && self.jitter_std == 0.0
    }
}

fn rotate_rows(t: &mut crate::tensor::Tensor, axes: (usize, usize), cos: f64, sin: f64) {
    let (a, b) = axes;
    for r in 0..t.rows() {
        let row = t.row_mut(r);
        let (x, y) = (row[a], row[b]);
        row[a] = cos * x - sin * y;
        row[b] = sin * x + cos * y;
    }
}

/// Exact at multiples of a quarter turn, where `sin_cos` leaves 1e-16 residue.
fn rotation_sin_cos(angle: f64) -> (f64, f64) {
    let q = angle / std::f64::consts::FRAC_PI_2;
    if q == q.round() && q.abs() < 1e15 {
        return match (q as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        };
    }
    angle.sin_cos()
}

/// Rotation (coords and normals), then clipped Gaussian jitter (coords only).
pub fn augment<R: Rng + ?Sized>(cloud: &PointCloud, rng: &mut R, cfg: &AugmentConfig) -> Result<PointCloud> {
    let mut out = cloud.clone();
    if cfg.rotate {
        let d = cloud.dim();
        let axes = match d {
            2 => (0, 1),
            3 if cfg.gravity_axis < 3 => match cfg.gravity_axis {
                0 => (1, 2),
                1 => (2, 0),
                _ => (0, 1),
            },
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "cannot rotate {d}-d points about axis {}",
                    cfg.gravity_axis
                )))
            }
        };
        let angle = cfg.fixed_angle.unwrap_or_else(|| rng.random::<f64>() * TAU);
        let (sin, cos) = rotation_sin_cos(angle);
        rotate_rows(&mut out.coords, axes, cos, sin);
        if let Some(n) = out.normals.as_mut() {
            rotate_rows(n, axes, cos, sin);
        }
    }
    if cfg.jitter_std > 0.0 {
        let normal = Normal::new(0.0, cfg.jitter_std)
            .map_err(|e| Error::InvalidParameter(format!("jitter std: {e}")))?;
        for v in out.coords.data_mut() {
            *v += normal.sample(rng).clamp(-cfg.jitter_clip, cfg.jitter_clip);
        }
    }
    Ok(out)
}

/// Keeps a uniform random subset of `⌈N·(1 − fraction)⌉` points, in their
/// original order.
pub fn corrupt_dropout<R: Rng + ?Sized>(cloud: &PointCloud, fraction: f64, rng: &mut R) -> Result<PointCloud> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("dropout fraction {fraction} not in [0, 1)")));
    }
    let n = cloud.len();
    // The tolerance absorbs representation error in 1 − fraction.
    let keep = ((n as f64 * (1.0 - fraction)) - 1e-9).ceil().max(1.0) as usize;
    if keep >= n {
        return Ok(cloud.clone());
    }
    let mut rows = index::sample(rng, n, keep).into_vec();
    rows.sort_unstable();
    Ok(cloud.select(&rows))
}

/// Adds i.i.d. `N(0, std²)` to every coordinate. Normals are untouched and the
/// cloud is not re-normalized.
pub fn corrupt_noise<R: Rng + ?Sized>(cloud: &PointCloud, std: f64, rng: &mut R) -> Result<PointCloud> {
    let mut out = cloud.clone();
    if std == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidParameter(format!("noise std: {e}")))?;
    for v in out.coords.data_mut() {
        *v += normal.sample(rng);
    }
    Ok(out)
}

/// A test-time attack: `dropout:F[,F...]` or `noise:STD[,STD...]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Corruption {
    Dropout(Vec<f64>),
    Noise(Vec<f64>),
}

impl Corruption {
    pub fn levels(&self) -> &[f64] {
        match self {
            Corruption::Dropout(v) | Corruption::Noise(v) => v,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Corruption::Dropout(_) => "dropout",
            Corruption::Noise(_) => "noise",
        }
    }

    pub fn apply<R: Rng + ?Sized>(&self, level: f64, cloud: &PointCloud, rng: &mut R) -> Result<PointCloud> {
        match self {
            Corruption::Dropout(_) => corrupt_dropout(cloud, level, rng),
            Corruption::Noise(_) => corrupt_noise(cloud, level, rng),
        }
    }
}

impl FromStr for Corruption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, levels) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("corruption `{s}` must be dropout:F or noise:STD")))?;
        let levels: Vec<f64> = levels
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad corruption level `{v}`"))))
            .collect::<Result<_>>()?;
        match kind.trim() {
            "dropout" if levels.iter().all(|f| (0.0..1.0).contains(f)) => Ok(Corruption::Dropout(levels)),
            "noise" if levels.iter().all(|s| *s >= 0.0 && s.is_finite()) => Ok(Corruption::Noise(levels)),
            "dropout" | "noise" => Err(Error::Config(format!("corruption level out of range in `{s}`"))),
            other => Err(Error::Config(format!("unknown corruption `{other}`"))),
        }
    }
}

impl fmt::Display for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), crate::kv::join(self.levels()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize) -> PointCloud {
        let coords = Tensor::from_fn(&[n, 3], |i| ((i * 7919) % 13) as f64 / 13.0 - 0.5);
        let normals = Tensor::from_fn(&[n, 3], |i| if i % 3 == 0 { 1.0 } else { 0.0 });
        PointCloud::new(coords, Some(normals), 1).unwrap()
    }

    #[test]
    fn identity_when_disabled() {
        let c = cloud(10);
        let cfg = AugmentConfig {
            fixed_angle: Some(0.0),
            jitter_std: 0.0,
            ..AugmentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&c, &mut rng, &cfg).unwrap(), c);
        assert_eq!(augment(&c, &mut rng, &AugmentConfig::none()).unwrap(), c);
    }

    #[test]
    fn half_turn_about_z() {
        let c = cloud(10);
        let cfg = AugmentConfig {
            fixed_angle: Some(std::f64::consts::PI),
            jitter_std: 0.0,
            ..AugmentConfig::default()
        };
        let out = augment(&c, &mut ChaCha8Rng::seed_from_u64(0), &cfg).unwrap();
        for r in 0..10 {
            let (a, b) = (c.coords.row(r), out.coords.row(r));
            assert_eq!(b, &[-a[0], -a[1], a[2]]);
        }
    }

    #[test]
    fn dropout_keeps_ceiling_of_remaining_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(corrupt_dropout(&cloud(1024), 0.75, &mut rng).unwrap().len(), 256);
        assert_eq!(corrupt_dropout(&cloud(10), 0.1, &mut rng).unwrap().len(), 9);
        assert_eq!(corrupt_dropout(&cloud(10), 0.25, &mut rng).unwrap().len(), 8);
        let c = cloud(7);
        assert_eq!(corrupt_dropout(&c, 0.0, &mut rng).unwrap(), c);
        assert!(corrupt_dropout(&c, 1.0, &mut rng).is_err());
    }

    #[test]
    fn corruption_text() {
        let c: Corruption = "dropout:0.25,0.5,0.75".parse().unwrap();
        assert_eq!(c, Corruption::Dropout(vec![0.25, 0.5, 0.75]));
        assert_eq!(c.to_string(), "dropout:0.25,0.5,0.75");
        assert_eq!("noise:0.05".parse::<Corruption>().unwrap(), Corruption::Noise(vec![0.05]));
        assert!("dropout:1.5".parse::<Corruption>().is_err());
        assert!("blur:1".parse::<Corruption>().is_err());
    }
}
