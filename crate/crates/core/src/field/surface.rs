//! Dual contouring of an implicit field sampled on a lattice.

use nalgebra::{Matrix3, SVD};
use rayon::prelude::*;
use std::collections::HashMap;

use super::grid::{Lattice, SignedDistanceGrid};
use super::mesh::TriangleMesh;
use crate::Vec3;

/// Anything that can be evaluated at a world point.
pub trait ScalarField: Sync {
    fn value(&self, p: &Vec3) -> f64;
}

impl<F: Fn(&Vec3) -> f64 + Sync> ScalarField for F {
    fn value(&self, p: &Vec3) -> f64 {
        self(p)
    }
}

impl ScalarField for SignedDistanceGrid {
    fn value(&self, p: &Vec3) -> f64 {
        self.sample(p)
    }
}

/// Relative singular-value cutoff for the QEF pseudo-inverse.
const QEF_TRUNCATION: f64 = 0.1;

/// Extracts the `iso` level set of `field` sampled at the centers of `lattice`.
/// Cells with `value <= iso` are inside. Returns an empty mesh (with a
/// warning) when the level set does not cross the lattice.
pub fn extract_surface(field: &impl ScalarField, lattice: &Lattice, iso: f64) -> TriangleMesh {
    let values: Vec<f64> = (0..lattice.len())
        .into_par_iter()
        .map(|i| field.value(&lattice.position_of(i)) - iso)
        .collect();
    extract_from_samples(field, lattice, iso, &values)
}

/// Same as [`extract_surface`] for a grid on its own lattice.
pub fn extract_grid_surface(grid: &SignedDistanceGrid, iso: f64) -> TriangleMesh {
    let values: Vec<f64> = grid.values.iter().map(|v| v - iso).collect();
    extract_from_samples(grid, &grid.lattice, iso, &values)
}

fn extract_from_samples(
    field: &impl ScalarField,
    lattice: &Lattice,
    iso: f64,
    values: &[f64],
) -> TriangleMesh {
    let n = lattice.resolution;
    let inside = |i: usize, j: usize, k: usize| values[lattice.index(i, j, k)] <= 0.0;
    // Dual cells are indexed by their minimum corner; there are (n-1)^3.
    let active: Vec<usize> = (0..lattice.len())
        .into_par_iter()
        .filter(|&idx| {
            let [i, j, k] = lattice.coords(idx);
            if i + 1 >= n || j + 1 >= n || k + 1 >= n {
                return false;
            }
            let first = inside(i, j, k);
            (1..8).any(|c| inside(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) != first)
        })
        .collect();
    if active.is_empty() {
        log::warn!("extract_surface: level set {iso} does not cross the lattice");
        return TriangleMesh::empty();
    }
    let vertices: Vec<Vec3> = active
        .par_iter()
        .map(|&idx| cell_vertex(field, lattice, values, idx))
        .collect();
    let slot: HashMap<usize, u32> = active
        .iter()
        .enumerate()
        .map(|(s, &idx)| (idx, s as u32))
        .collect();

    let mut triangles = Vec::new();
    for &idx in &active {
        let [i, j, k] = lattice.coords(idx);
        let here = inside(i, j, k);
        // Each lattice edge from (i,j,k) in +axis direction with a sign change
        // is surrounded by four dual cells sharing it.
        for axis in 0..3 {
            let mut o = [i, j, k];
            o[axis] += 1;
            if inside(o[0], o[1], o[2]) == here {
                continue;
            }
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            if [i, j, k][u] == 0 || [i, j, k][v] == 0 {
                continue;
            }
            let cell = |du: usize, dv: usize| {
                let mut c = [i, j, k];
                c[u] -= du;
                c[v] -= dv;
                slot.get(&lattice.index(c[0], c[1], c[2])).copied()
            };
            let (Some(a), Some(b), Some(c), Some(d)) =
                (cell(0, 0), cell(1, 0), cell(1, 1), cell(0, 1))
            else {
                continue;
            };
            // Outward orientation: the normal points from inside to outside.
            let quad = if here { [a, b, c, d] } else { [a, d, c, b] };
            let [q0, q1, q2, q3] = quad;
            let d02 = (vertices[q0 as usize] - vertices[q2 as usize]).norm_squared();
            let d13 = (vertices[q1 as usize] - vertices[q3 as usize]).norm_squared();
            if d02 <= d13 {
                triangles.push([q0, q1, q2]);
                triangles.push([q0, q2, q3]);
            } else {
                triangles.push([q0, q1, q3]);
                triangles.push([q1, q2, q3]);
            }
        }
    }
    compact(vertices, triangles)
}

/// Minimizer of the quadratic error function of the cell's edge crossings.
fn cell_vertex(field: &impl ScalarField, lattice: &Lattice, values: &[f64], idx: usize) -> Vec3 {
    let [i, j, k] = lattice.coords(idx);
    let corner = |c: usize| [i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)];
    let h = lattice.spacing;
    let mut points = Vec::with_capacity(12);
    for a in 0..8usize {
        for axis in 0..3 {
            if a & (1 << axis) != 0 {
                continue;
            }
            let b = a | (1 << axis);
            let (ca, cb) = (corner(a), corner(b));
            let (va, vb) = (
                values[lattice.index(ca[0], ca[1], ca[2])],
                values[lattice.index(cb[0], cb[1], cb[2])],
            );
            if (va <= 0.0) == (vb <= 0.0) {
                continue;
            }
            let s = (va / (va - vb)).clamp(0.0, 1.0);
            let pa = lattice.position(ca[0], ca[1], ca[2]);
            let pb = lattice.position(cb[0], cb[1], cb[2]);
            points.push(pa + (pb - pa) * s);
        }
    }
    let mass = points.iter().sum::<Vec3>() / points.len() as f64;
    let eps = 0.25 * h;
    let mut ata = Matrix3::zeros();
    let mut atb = Vec3::zeros();
    for p in &points {
        let mut g = Vec3::zeros();
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = eps;
            g[a] = (field.value(&(p + e)) - field.value(&(p - e))) / (2.0 * eps);
        }
        let norm = g.norm();
        if !(norm > 1e-12) || !norm.is_finite() {
            continue;
        }
        let nrm = g / norm;
        ata += nrm * nrm.transpose();
        atb += nrm * nrm.dot(&(p - mass));
    }
    let svd = SVD::new(ata, true, true);
    let smax = svd.singular_values.max();
    let mut x = Vec3::zeros();
    if smax > 0.0 {
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        for s in 0..3 {
            let sv = svd.singular_values[s];
            if sv > QEF_TRUNCATION * smax {
                x += vt.row(s).transpose() * (u.column(s).dot(&atb) / sv);
            }
        }
    }
    let lo = lattice.position(i, j, k);
    let hi = lo + Vec3::repeat(h);
    (mass + x).sup(&lo).inf(&hi)
}

/// Builds the mesh; degenerate quads from clamped vertices are dropped there.
fn compact(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> TriangleMesh {
    match TriangleMesh::new(vertices, triangles) {
        Ok(m) => m,
        Err(e) => {
            log::warn!("extract_surface produced an invalid mesh: {e}");
            TriangleMesh::empty()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_sdf(p: &Vec3, half: f64) -> f64 {
        let q = p.abs() - Vec3::repeat(half);
        q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
    }

    #[test]
    fn sphere_area_and_volume() {
        let l = Lattice::normalized(64);
        let m = extract_surface(&|p: &Vec3| p.norm() - 0.4, &l, 0.0);
        let area = 4.0 * std::f64::consts::PI * 0.16;
        assert!((m.area() - area).abs() / area < 0.05, "area {}", m.area());
        let vol = 4.0 / 3.0 * std::f64::consts::PI * 0.064;
        assert!(
            (m.volume() - vol).abs() / vol < 0.02,
            "volume {}",
            m.volume()
        );
        assert!(m.is_watertight());
    }

    #[test]
    fn all_positive_field_gives_empty_mesh() {
        let l = Lattice::normalized(16);
        assert!(extract_surface(&|_: &Vec3| 1.0, &l, 0.0).is_empty());
    }

    #[test]
    fn cube_corners_are_sharp() {
        let l = Lattice::normalized(48);
        let half = 0.3;
        let m = extract_surface(&|p: &Vec3| box_sdf(p, half), &l, 0.0);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let c = Vec3::new(sx, sy, sz) * half;
                    let best = m
                        .vertices
                        .iter()
                        .map(|v| (v - c).norm())
                        .fold(f64::INFINITY, f64::min);
                    assert!(best <= l.spacing, "corner {c:?} off by {best}");
                }
            }
        }
    }

    #[test]
    fn iso_offset_shrinks_volume() {
        let l = Lattice::normalized(32);
        let f = |p: &Vec3| p.norm() - 0.35;
        let a = extract_surface(&f, &l, 0.0).volume();
        let b = extract_surface(&f, &l, -0.05).volume();
        assert!(b < a);
    }
}
