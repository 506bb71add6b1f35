//! OFF meshes and area-weighted surface sampling.

use rand::Rng;

use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Faces with smaller area are never sampled.
pub const MIN_FACE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::InvalidParameter(format!(
                "face {f:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        Ok(Self { vertices, faces })
    }

    fn corners(&self, f: usize) -> [[f64; 3]; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal; its length is twice the face area.
    fn raw_normal(&self, f: usize) -> [f64; 3] {
        let [a, b, c] = self.corners(f);
        cross(sub(b, a), sub(c, a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * norm(self.raw_normal(f))
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }
}

fn numbers<'a, T: std::str::FromStr>(
    tokens: impl Iterator<Item = &'a str>,
    count: usize,
    line: usize,
    what: &str,
) -> Result<Vec<T>> {
    let v: Vec<T> = tokens
        .take(count)
        .map(|t| t.parse::<T>().map_err(|_| Error::parse(line, format!("bad {what} `{t}`"))))
        .collect::<Result<_>>()?;
    if v.len() < count {
        return Err(Error::parse(line, format!("expected {count} {what} values")));
    }
    Ok(v)
}

/// Parses OFF text. Polygons are fan-triangulated from their first vertex,
/// keeping the winding. Accepts the `OFF<V> <F> <E>` header written without a
/// line break, as found in parts of ModelNet.
pub fn parse_off(text: &str) -> Result<TriangleMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty OFF input"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(hline, format!("expected `OFF` header, got `{header}`")))?
        .trim();
    let (cline, counts) = if rest.is_empty() {
        lines.next().ok_or_else(|| Error::parse(hline + 1, "missing vertex/face counts"))?
    } else {
        (hline, rest)
    };
    let counts: Vec<usize> = numbers(counts.split_whitespace(), 2, cline, "count")?;
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines
            .next()
            .ok_or_else(|| Error::parse(cline, format!("file ends before {nv} vertices")))?;
        let v: Vec<f64> = numbers(l.split_whitespace(), 3, line, "coordinate")?;
        vertices.push([v[0], v[1], v[2]]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines
            .next()
            .ok_or_else(|| Error::parse(cline, format!("file ends before {nf} faces")))?;
        let mut tokens = l.split_whitespace();
        let k: usize = numbers(&mut tokens, 1, line, "face size")?[0];
        if k < 3 {
            return Err(Error::parse(line, format!("face with {k} vertices")));
        }
        let idx: Vec<usize> = numbers(tokens, k, line, "vertex index")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= nv) {
            return Err(Error::parse(line, format!("vertex index {bad} out of range (V={nv})")));
        }
        for j in 1..k - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    TriangleMesh::new(vertices, faces)
}

/// [`sample_surface_raw`] normalized to the unit ball.
pub fn sample_surface<R: Rng + ?Sized>(mesh: &TriangleMesh, n: usize, label: usize, rng: &mut R) -> Result<PointCloud> {
    let mut cloud = sample_surface_raw(mesh, n, label, rng)?;
    cloud.normalize();
    Ok(cloud)
}

/// `n` points drawn uniformly over the surface in mesh coordinates, each
/// with its unit face normal.
pub fn sample_surface_raw<R: Rng + ?Sized>(mesh: &TriangleMesh, n: usize, label: usize, rng: &mut R) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut usable = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        let a = mesh.face_area(f);
        if a > MIN_FACE_AREA {
            total += a;
            cumulative.push(total);
            usable.push(f);
        }
    }
    if usable.is_empty() {
        return Err(Error::InvalidParameter("mesh has no face with positive area".into()));
    }
    let mut coords = Vec::with_capacity(n * 3);
    let mut normals = Vec::with_capacity(n * 3);
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= u).min(usable.len() - 1);
        let f = usable[k];
        let [a, b, c] = mesh.corners(f);
        let (r1, r2) = (rng.random::<f64>().sqrt(), rng.random::<f64>());
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        for i in 0..3 {
            coords.push(wa * a[i] + wb * b[i] + wc * c[i]);
        }
        let nr = mesh.raw_normal(f);
        let len = norm(nr);
        normals.extend(nr.iter().map(|v| v / len));
    }
    PointCloud::new(
        Tensor::new(vec![n, 3], coords)?,
        Some(Tensor::new(vec![n, 3], normals)?),
        label,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TRIANGLE: &str = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";

    #[test]
    fn minimal_triangle() {
        let m = parse_off(TRIANGLE).unwrap();
        assert_eq!((m.vertices.len(), m.faces.len()), (3, 1));
        assert_eq!(m.vertices[1], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn quad_is_fan_split() {
        let m = parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn header_quirk_and_comments() {
        let m = parse_off("OFF3 1 0\n# comment\n0 0 0\n1 0 0\n\n0 1 0\n3 0 1 2 255 0 0\n").unwrap();
        assert_eq!(m.faces.len(), 1);
    }

    #[test]
    fn malformed_input_reports_line() {
        for (text, line) in [
            ("PLY\n", 1),
            ("OFF\n3 x 0\n", 2),
            ("OFF\n3 1 0\n0 0 0\n1 0\n0 1 0\n3 0 1 2\n", 4),
            ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n", 6),
        ] {
            match parse_off(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn samples_lie_on_surface_with_unit_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = sample_surface(&parse_off(TRIANGLE).unwrap(), 500, 3, &mut rng).unwrap();
        assert_eq!(c.label, 3);
        let n = c.normals.as_ref().unwrap();
        for r in 0..500 {
            assert!((c.coords.row(r)[2]).abs() < 1e-12);
            assert_eq!(n.row(r), &[0.0, 0.0, 1.0]);
        }
        assert!((c.max_norm() - 1.0).abs() < 1e-12);
    }
}
