use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Triangles with zero area below this tolerance are dropped on construction.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh.
#[derive(Clone, Debug, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Optional per-vertex curvature scalar.
    pub curvature: Option<Vec<f64>>,
    watertight: bool,
}

impl TriangleMesh {
    /// Validates indices, drops degenerate triangles and records whether every
    /// edge is shared by exactly two triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices
            .iter()
            .any(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()))
        {
            return Err(Error::NonFinite("mesh vertices"));
        }
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidMesh(format!(
                "triangle {t:?} references a vertex outside 0..{n}"
            )));
        }
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| triangle_area(&vertices, t) > DEGENERATE_AREA)
            .collect();
        let watertight = !triangles.is_empty() && boundary_edge_count(&triangles) == 0;
        Ok(Self {
            vertices,
            triangles,
            curvature: None,
            watertight,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.triangles.is_empty()
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn boundary_edges(&self) -> usize {
        boundary_edge_count(&self.triangles)
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, t: usize) -> f64 {
        triangle_area(&self.vertices, &self.triangles[t])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.face_area(t)).sum()
    }

    /// Enclosed volume by the divergence theorem (positive for outward winding).
    pub fn volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))),
        )
    }

    pub fn diagonal(&self) -> f64 {
        self.bounding_box()
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or(0.0)
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = self.corners(t);
            let n = (b - a).cross(&(c - a));
            for &i in tri {
                acc[i as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    n
                }
            })
            .collect()
    }

    /// Vertex adjacency lists (sorted, deduplicated).
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Area-uniform surface samples: `(position, face normal, face index)`.
    pub fn sample_surface<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<(Vec3, Vec3, usize)> {
        if self.is_empty() || n == 0 {
            return Vec::new();
        }
        let mut cdf = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            total += self.face_area(t);
            cdf.push(total);
        }
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen::<f64>() * total;
                let t = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                let [a, b, c] = self.corners(t);
                let (mut r1, mut r2): (f64, f64) = (rng.gen(), rng.gen());
                if r1 + r2 > 1.0 {
                    r1 = 1.0 - r1;
                    r2 = 1.0 - r2;
                }
                let p = a + (b - a) * r1 + (c - a) * r2;
                (p, self.face_normal(t), t)
            })
            .collect()
    }

    /// Applies `p -> p * scale + translation` to every vertex.
    pub fn transformed(&self, scale: f64, translation: Vec3) -> Self {
        let mut out = self.clone();
        for v in out.vertices.iter_mut() {
            *v = *v * scale + translation;
        }
        out
    }

    /// Concatenates two meshes without merging vertices.
    pub fn merged(&self, other: &TriangleMesh) -> Self {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]),
        );
        let watertight = !triangles.is_empty() && boundary_edge_count(&triangles) == 0;
        Self {
            vertices,
            triangles,
            curvature: None,
            watertight,
        }
    }
}

fn triangle_area(vertices: &[Vec3], t: &[u32; 3]) -> f64 {
    let (a, b, c) = (
        vertices[t[0] as usize],
        vertices[t[1] as usize],
        vertices[t[2] as usize],
    );
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn boundary_edge_count(triangles: &[[u32; 3]]) -> usize {
    let mut edges: HashMap<(u32, u32), u32> = HashMap::with_capacity(triangles.len() * 3 / 2);
    for t in triangles {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    edges.values().filter(|&&c| c != 2).count()
}

/// Similarity mapping normalized coordinates back to the source frame:
/// `source = normalized / scale + center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizeTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl NormalizeTransform {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn to_normalized(&self, p: &Vec3) -> Vec3 {
        (p - Vec3::from(self.center)) * self.scale
    }

    pub fn to_source(&self, q: &Vec3) -> Vec3 {
        q / self.scale + Vec3::from(self.center)
    }
}

/// Centers the bounding box at the origin and scales its longest side to 1.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<(TriangleMesh, NormalizeTransform)> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (lo, hi) = mesh.bounding_box().ok_or(Error::EmptyMesh)?;
    let extent = (hi - lo).max();
    if extent <= 0.0 {
        return Err(Error::InvalidMesh(
            "mesh bounding box has zero extent".into(),
        ));
    }
    let center = (lo + hi) * 0.5;
    let tf = NormalizeTransform {
        center: center.into(),
        scale: 1.0 / extent,
    };
    let mut out = mesh.clone();
    for v in out.vertices.iter_mut() {
        *v = tf.to_normalized(v);
    }
    Ok((out, tf))
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Signed solid angle of triangle `abc` seen from `p`, divided by 4π
/// (Van Oosterom & Strackee).
pub fn winding_contribution(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (x, y, z) = (a - p, b - p, c - p);
    let (lx, ly, lz) = (x.norm(), y.norm(), z.norm());
    let det = x.dot(&y.cross(&z));
    let denom = lx * ly * lz + x.dot(&y) * lz + y.dot(&z) * lx + z.dot(&x) * ly;
    2.0 * det.atan2(denom) / (4.0 * std::f64::consts::PI)
}

/// Simple closed meshes for tests and demos.
pub mod shapes {
    use super::*;

    /// Axis-aligned box split into `n×n` quads per face, outward winding.
    pub fn subdivided_box(lo: Vec3, hi: Vec3, n: usize) -> TriangleMesh {
        let mut vertices = Vec::new();
        let mut index: HashMap<[i64; 3], u32> = HashMap::new();
        let mut triangles = Vec::new();
        let mut vid = |g: [i64; 3], vertices: &mut Vec<Vec3>| -> u32 {
            *index.entry(g).or_insert_with(|| {
                let f = |a: usize| lo[a] + (hi[a] - lo[a]) * g[a] as f64 / n as f64;
                vertices.push(Vec3::new(f(0), f(1), f(2)));
                (vertices.len() - 1) as u32
            })
        };
        let ni = n as i64;
        for axis in 0..3 {
            for side in [0i64, ni] {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                for a in 0..ni {
                    for b in 0..ni {
                        let mut q = [[0i64; 3]; 4];
                        for (c, (da, db)) in [(0, 0), (1, 0), (1, 1), (0, 1)].iter().enumerate() {
                            q[c][axis] = side;
                            q[c][u] = a + da;
                            q[c][v] = b + db;
                        }
                        let ids: Vec<u32> = q.iter().map(|g| vid(*g, &mut vertices)).collect();
                        if side == ni {
                            triangles.push([ids[0], ids[1], ids[2]]);
                            triangles.push([ids[0], ids[2], ids[3]]);
                        } else {
                            triangles.push([ids[0], ids[2], ids[1]]);
                            triangles.push([ids[0], ids[3], ids[2]]);
                        }
                    }
                }
            }
        }
        TriangleMesh::new(vertices, triangles).unwrap()
    }

    /// Icosphere by repeated midpoint subdivision.
    pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vec3> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|v| Vec3::new(v[0], v[1], v[2]).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            for f in &faces {
                let mut m = [0u32; 3];
                for e in 0..3 {
                    let (a, b) = (f[e], f[(e + 1) % 3]);
                    let key = (a.min(b), a.max(b));
                    m[e] = *mid.entry(key).or_insert_with(|| {
                        vertices.push(
                            ((vertices[a as usize] + vertices[b as usize]) * 0.5).normalize(),
                        );
                        (vertices.len() - 1) as u32
                    });
                }
                next.push([f[0], m[0], m[2]]);
                next.push([f[1], m[1], m[0]]);
                next.push([f[2], m[2], m[1]]);
                next.push([m[0], m[1], m[2]]);
            }
            faces = next;
        }
        for v in vertices.iter_mut() {
            *v *= radius;
        }
        TriangleMesh::new(vertices, faces).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::shapes::*;
    use super::*;

    #[test]
    fn normalize_offset_unit_cube() {
        let m = subdivided_box(Vec3::new(3.0, 4.0, 5.0), Vec3::new(4.0, 5.0, 6.0), 1);
        let (n, tf) = normalize_mesh(&m).unwrap();
        let (lo, hi) = n.bounding_box().unwrap();
        assert!((lo + Vec3::repeat(0.5)).norm() < 1e-12);
        assert!((hi - Vec3::repeat(0.5)).norm() < 1e-12);
        let back = tf.to_source(&n.vertices[0]);
        assert!((back - m.vertices[0]).norm() < 1e-12);
    }

    #[test]
    fn normalize_is_identity_on_normalized_mesh() {
        let m = subdivided_box(Vec3::repeat(-0.5), Vec3::repeat(0.5), 2);
        let (_, tf) = normalize_mesh(&m).unwrap();
        assert_eq!(tf, NormalizeTransform::identity());
    }

    #[test]
    fn normalize_scale_from_bbox() {
        let m = subdivided_box(Vec3::zeros(), Vec3::new(2.0, 1.0, 1.0), 1);
        let (_, tf) = normalize_mesh(&m).unwrap();
        assert_eq!(tf.scale, 0.5);
        let shifted = tf.to_normalized(&Vec3::zeros());
        assert!((shifted - Vec3::new(-1.0, -0.5, -0.5) * 0.5).norm() < 1e-12);
    }

    #[test]
    fn empty_mesh_rejected() {
        assert!(matches!(
            normalize_mesh(&TriangleMesh::empty()),
            Err(Error::EmptyMesh)
        ));
    }

    #[test]
    fn out_of_range_index_rejected() {
        let r = TriangleMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 3]]);
        assert!(matches!(r, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn watertight_flag() {
        let cube = subdivided_box(Vec3::zeros(), Vec3::repeat(1.0), 2);
        assert!(cube.is_watertight());
        assert!((cube.volume() - 1.0).abs() < 1e-12);
        let open = TriangleMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::x(),
                Vec3::y(),
                Vec3::new(1.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        assert!(!open.is_watertight());
    }

    #[test]
    fn degenerate_triangles_dropped() {
        let m = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(m.triangles.is_empty());
    }

    #[test]
    fn closed_mesh_winding_is_one_inside() {
        let s = icosphere(0.4, 2);
        let w_in: f64 = (0..s.triangles.len())
            .map(|t| {
                let [a, b, c] = s.corners(t);
                winding_contribution(&Vec3::new(0.1, 0.05, 0.0), &a, &b, &c)
            })
            .sum();
        let w_out: f64 = (0..s.triangles.len())
            .map(|t| {
                let [a, b, c] = s.corners(t);
                winding_contribution(&Vec3::new(0.9, 0.0, 0.0), &a, &b, &c)
            })
            .sum();
        assert!((w_in - 1.0).abs() < 1e-9);
        assert!(w_out.abs() < 1e-9);
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        assert!(
            (closest_point_on_triangle(&Vec3::new(0.2, 0.2, 1.0), &a, &b, &c)
                - Vec3::new(0.2, 0.2, 0.0))
            .norm()
                < 1e-12
        );
        assert_eq!(
            closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c),
            a
        );
        let e = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((e - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
    }
}
