//! Kernel center and size initialization schemes.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SIGMA_INIT_RANGE: (f64, f64) = (0.01, 1.0);
pub const LOCAL_INIT_RADIUS: f64 = 0.2;
pub const KMEANS_MAX_ITERS: usize = 50;
pub const KMEANS_SAMPLE_CAP: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitScheme {
    /// Regular lattice in `[−1, 1]^d`, first `M` points in lexicographic order.
    Uniform,
    /// Uniform inside the unit ball.
    Random,
    /// Lloyd's algorithm on pooled training points.
    Kmeans,
    /// Every center at the origin.
    Overlap,
    /// Uniform inside a small ball centered on a random unit-sphere point.
    Local,
}

impl InitScheme {
    pub const ALL: [InitScheme; 5] = [
        InitScheme::Uniform,
        InitScheme::Random,
        InitScheme::Kmeans,
        InitScheme::Overlap,
        InitScheme::Local,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            InitScheme::Uniform => "uniform",
            InitScheme::Random => "random",
            InitScheme::Kmeans => "kmeans",
            InitScheme::Overlap => "overlap",
            InitScheme::Local => "local",
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitScheme::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown init scheme `{s}`")))
    }
}

/// Uniform sample inside the `d`-dimensional ball of the given radius.
pub fn sample_in_ball<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let mut v = sample_on_sphere(d, rng);
    let u: f64 = rng.random();
    let scale = radius * u.powf(1.0 / d as f64);
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

/// Uniform sample on the unit sphere surface in `d` dimensions.
pub fn sample_on_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn lattice(m: usize, d: usize) -> Vec<f64> {
    let mut k = 1usize;
    while k.checked_pow(d as u32).is_some_and(|p| p < m) {
        k += 1;
    }
    let coord = |i: usize| if k == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (k - 1) as f64 };
    let mut out = Vec::with_capacity(m * d);
    for idx in 0..m {
        // Digit 0 is the most significant axis.
        let mut rest = idx;
        let mut digits = vec![0; d];
        for axis in (0..d).rev() {
            digits[axis] = rest % k;
            rest /= k;
        }
        out.extend(digits.into_iter().map(coord));
    }
    out
}

/// Centers `[M, d]` and sizes `[M]` for one channel. `training_points` is a
/// flat `[P, d]` buffer, required for k-means.
pub fn init_kernels<R: Rng + ?Sized>(
    scheme: InitScheme,
    m: usize,
    d: usize,
    rng: &mut R,
    training_points: Option<&[f64]>,
) -> Result<(Tensor, Tensor)> {
    if m < 1 || d < 1 {
        return Err(Error::InvalidParameter(format!(
            "need at least one kernel and one dimension, got M={m}, d={d}"
        )));
    }
    let centers = match scheme {
        InitScheme::Random => (0..m).flat_map(|_| sample_in_ball(d, 1.0, rng)).collect(),
        InitScheme::Uniform => lattice(m, d),
        InitScheme::Overlap => vec![0.0; m * d],
        InitScheme::Local => {
            let anchor = sample_on_sphere(d, rng);
            (0..m)
                .flat_map(|_| {
                    sample_in_ball(d, LOCAL_INIT_RADIUS, rng)
                        .into_iter()
                        .zip(&anchor)
                        .map(|(o, a)| a + o)
                        .collect::<Vec<_>>()
                })
                .collect()
        }
        InitScheme::Kmeans => {
            let pts = training_points.ok_or_else(|| {
                Error::InvalidParameter("k-means initialization needs training points".into())
            })?;
            kmeans(pts, d, m, KMEANS_MAX_ITERS, KMEANS_SAMPLE_CAP, rng)?
        }
    };
    let sigmas = sample_sigmas(m, rng);
    Ok((Tensor::new(vec![m, d], centers)?, sigmas))
}

pub(crate) fn sample_sigmas<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Tensor {
    let dist = Uniform::new_inclusive(SIGMA_INIT_RANGE.0, SIGMA_INIT_RANGE.1).expect("valid range");
    Tensor::from_fn(&[m], |_| dist.sample(rng))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks_exact(d).enumerate() {
        let dist = sq_dist(p, c);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding on at most `cap` of the points.
/// Returns a flat `[k, d]` center buffer.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[f64],
    d: usize,
    k: usize,
    max_iters: usize,
    cap: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if d == 0 || points.len() % d != 0 {
        return Err(Error::InvalidParameter(format!(
            "point buffer of length {} is not a multiple of d={d}",
            points.len()
        )));
    }
    let total = points.len() / d;
    if total < k {
        return Err(Error::InvalidParameter(format!(
            "k-means needs at least {k} points, got {total}"
        )));
    }
    let pool: Vec<&[f64]> = if total > cap {
        let mut idx = sample(rng, total, cap).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &points[i * d..(i + 1) * d]).collect()
    } else {
        points.chunks_exact(d).collect()
    };

    let mut centers = Vec::with_capacity(k * d);
    centers.extend_from_slice(pool[rng.random_range(0..pool.len())]);
    let mut d2: Vec<f64> = pool.iter().map(|p| sq_dist(p, &centers[..d])).collect();
    while centers.len() < k * d {
        let total_w: f64 = d2.iter().sum();
        let pick = if total_w > 0.0 {
            let mut t = rng.random::<f64>() * total_w;
            let mut chosen = pool.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if t < *w {
                    chosen = i;
                    break;
                }
                t -= w;
            }
            chosen
        } else {
            rng.random_range(0..pool.len())
        };
        let start = centers.len();
        centers.extend_from_slice(pool[pick]);
        for (w, p) in d2.iter_mut().zip(&pool) {
            *w = w.min(sq_dist(p, &centers[start..]));
        }
    }

    let mut assign = vec![usize::MAX; pool.len()];
    for _ in 0..max_iters {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(&pool) {
            let (j, _) = nearest(p, &centers, d);
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(&pool) {
            counts[a] += 1;
            for (s, v) in sums[a * d..(a + 1) * d].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for j in 0..k {
            // Empty clusters keep their previous center.
            if counts[j] > 0 {
                for i in 0..d {
                    centers[j * d + i] = sums[j * d + i] / counts[j] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(centers)
}
