//! Per-vertex principal curvature from quadric fits over the 2-ring.

use nalgebra::{DMatrix, DVector, Matrix2};
use rayon::prelude::*;

use super::mesh::TriangleMesh;
use crate::Vec3;

/// Maximum absolute principal curvature at every vertex, multiplied by the
/// mesh bounding-box diagonal so values are scale free. Vertices without
/// enough neighbors get 0.
pub fn estimate_curvature(mesh: &TriangleMesh) -> Vec<f64> {
    let normals = mesh.vertex_normals();
    let ring1 = mesh.vertex_neighbors();
    let diag = mesh.diagonal();
    (0..mesh.vertices.len())
        .into_par_iter()
        .map(|v| {
            let mut ring: Vec<u32> = ring1[v].clone();
            for &n in &ring1[v] {
                ring.extend_from_slice(&ring1[n as usize]);
            }
            ring.sort_unstable();
            ring.dedup();
            ring.retain(|&n| n as usize != v);
            let pts: Vec<Vec3> = ring.iter().map(|&n| mesh.vertices[n as usize]).collect();
            max_abs_curvature(&mesh.vertices[v], &normals[v], &pts) * diag
        })
        .collect()
}

/// Fits `z = a x² + b xy + c y² + d x + e y` in a frame with `z` along the
/// normal and returns the largest principal curvature magnitude.
fn max_abs_curvature(p: &Vec3, normal: &Vec3, neighbors: &[Vec3]) -> f64 {
    if neighbors.len() < 5 || normal.norm() < 0.5 {
        return 0.0;
    }
    let n = normal.normalize();
    let helper = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let u = n.cross(&helper).normalize();
    let w = n.cross(&u);
    let rows = neighbors.len();
    let mut a = DMatrix::zeros(rows, 5);
    let mut z = DVector::zeros(rows);
    for (r, q) in neighbors.iter().enumerate() {
        let d = q - p;
        let (x, y) = (d.dot(&u), d.dot(&w));
        a.row_mut(r).copy_from_slice(&[x * x, x * y, y * y, x, y]);
        z[r] = d.dot(&n);
    }
    let Ok(sol) = a.svd(true, true).solve(&z, 1e-12) else {
        return 0.0;
    };
    let (ca, cb, cc, cd, ce) = (sol[0], sol[1], sol[2], sol[3], sol[4]);
    // Shape operator of the height field at the origin: II · I⁻¹.
    let first = Matrix2::new(1.0 + cd * cd, cd * ce, cd * ce, 1.0 + ce * ce);
    let scale = (1.0 + cd * cd + ce * ce).sqrt();
    let second = Matrix2::new(2.0 * ca, cb, cb, 2.0 * cc) / scale;
    let Some(inv) = first.try_inverse() else {
        return 0.0;
    };
    let shape = second * inv;
    // Eigenvalues of a 2x2 (not necessarily symmetric) matrix.
    let tr = shape.trace();
    let det = shape.determinant();
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (k1, k2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    k1.abs().max(k2.abs())
}
