//! Procedural 3-D shape classes, sampled like mesh datasets.

use std::f64::consts::TAU;

use rand::Rng;

use crate::data::{sample_surface, Dataset, TriangleMesh};
use crate::error::Result;
use crate::seed::{stream, substream};

pub const SHAPE_CLASSES: [&str; 8] = [
    "box", "tetrahedron", "octahedron", "pyramid", "prism", "cylinder", "cone", "sphere",
];

fn mesh(v: Vec<[f64; 3]>, f: Vec<[usize; 3]>) -> TriangleMesh {
    TriangleMesh::new(v, f).expect("generated faces index generated vertices")
}

fn cuboid() -> TriangleMesh {
    let v = (0..8)
        .map(|i| [((i & 1) * 2) as f64 - 1.0, ((i >> 1 & 1) * 2) as f64 - 1.0, ((i >> 2 & 1) * 2) as f64 - 1.0])
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let f = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    mesh(v, f)
}

/// A ring of `k` vertices at height `z` and radius `r`.
fn ring(k: usize, r: f64, z: f64) -> Vec<[f64; 3]> {
    (0..k)
        .map(|i| {
            let a = TAU * i as f64 / k as f64;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}

/// `k`-gon prism; `top_radius` 0 gives a pyramid/cone.
fn frustum(k: usize, top_radius: f64) -> TriangleMesh {
    let mut v = ring(k, 1.0, -1.0);
    let apex = top_radius == 0.0;
    if apex {
        v.push([0.0, 0.0, 1.0]);
    } else {
        v.extend(ring(k, top_radius, 1.0));
    }
    let bottom_center = v.len();
    v.push([0.0, 0.0, -1.0]);
    let top_center = v.len();
    v.push([0.0, 0.0, 1.0]);
    let mut f = Vec::new();
    for i in 0..k {
        let j = (i + 1) % k;
        f.push([bottom_center, j, i]);
        if apex {
            f.push([i, j, k]);
        } else {
            f.push([i, j, k + j]);
            f.push([i, k + j, k + i]);
            f.push([top_center, k + i, k + j]);
        }
    }
    mesh(v, f)
}

fn tetrahedron() -> TriangleMesh {
    let v = vec![[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
    mesh(v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
}

fn octahedron() -> TriangleMesh {
    let v = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let f = vec![
        [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
        [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
    ];
    mesh(v, f)
}

/// Latitude/longitude sphere.
fn sphere(stacks: usize, slices: usize) -> TriangleMesh {
    let mut v = vec![[0.0, 0.0, 1.0]];
    for s in 1..stacks {
        let phi = std::f64::consts::PI * s as f64 / stacks as f64;
        v.extend(ring(slices, phi.sin(), phi.cos()));
    }
    v.push([0.0, 0.0, -1.0]);
    let south = v.len() - 1;
    let at = |s: usize, i: usize| 1 + (s - 1) * slices + i % slices;
    let mut f = Vec::new();
    for i in 0..slices {
        f.push([0, at(1, i), at(1, i + 1)]);
        for s in 1..stacks - 1 {
            f.push([at(s, i), at(s + 1, i), at(s + 1, i + 1)]);
            f.push([at(s, i), at(s + 1, i + 1), at(s, i + 1)]);
        }
        f.push([south, at(stacks - 1, i + 1), at(stacks - 1, i)]);
    }
    mesh(v, f)
}

pub fn shape_mesh(class: usize) -> TriangleMesh {
    match class % SHAPE_CLASSES.len() {
        0 => cuboid(),
        1 => tetrahedron(),
        2 => octahedron(),
        3 => frustum(4, 0.0),
        4 => frustum(3, 1.0),
        5 => frustum(16, 1.0),
        6 => frustum(16, 0.0),
        _ => sphere(8, 16),
    }
}

/// Random per-axis stretch in `[0.6, 1.4]` and a random turn about `z`.
fn perturb<R: Rng + ?Sized>(m: &TriangleMesh, rng: &mut R) -> TriangleMesh {
    let s: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.6..1.4));
    let (sin, cos) = (rng.random::<f64>() * TAU).sin_cos();
    let v = m
        .vertices
        .iter()
        .map(|p| {
            let (x, y) = (p[0] * s[0], p[1] * s[1]);
            [cos * x - sin * y, sin * x + cos * y, p[2] * s[2]]
        })
        .collect();
    mesh(v, m.faces.clone())
}

/// `count` clouds cycling through the classes. Sample `i` is drawn from its
/// own sub-stream keyed by `first_index + i`, so disjoint index ranges give
/// independent splits.
pub fn synthetic_shapes(count: usize, points: usize, seed: u64, first_index: u64) -> Result<Dataset> {
    let k = SHAPE_CLASSES.len();
    let clouds = (0..count)
        .map(|i| {
            let mut rng = substream(seed, stream::SAMPLE, first_index + i as u64);
            let class = i % k;
            let m = perturb(&shape_mesh(class), &mut rng);
            sample_surface(&m, points, class, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        clouds,
        num_classes: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meshes_are_closed_and_outward() {
        for c in 0..SHAPE_CLASSES.len() {
            let m = shape_mesh(c);
            // Divergence theorem: signed volume is positive for outward winding.
            let vol: f64 = m
                .faces
                .iter()
                .map(|f| {
                    let [a, b, c] = [m.vertices[f[0]], m.vertices[f[1]], m.vertices[f[2]]];
                    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                        + a[2] * (b[0] * c[1] - b[1] * c[0])
                })
                .sum::<f64>()
                / 6.0;
            assert!(vol > 0.1, "{} volume {vol}", SHAPE_CLASSES[c]);
        }
    }

    #[test]
    fn dataset_is_balanced_and_reproducible() {
        let a = synthetic_shapes(16, 64, 5, 0).unwrap();
        assert_eq!(a.clouds.iter().filter(|c| c.label == 3).count(), 2);
        assert_eq!(a, synthetic_shapes(16, 64, 5, 0).unwrap());
        assert_ne!(a.clouds[0], synthetic_shapes(16, 64, 5, 100).unwrap().clouds[0]);
    }
}
