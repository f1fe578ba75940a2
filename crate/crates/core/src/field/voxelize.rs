//! Mesh to signed distance grid.
//!
//! Magnitudes are exact point-to-triangle distances. Signs come from the
//! generalized winding number in a narrow band around the surface; cells
//! farther out are grouped into 6-connected components that cannot cross the
//! surface, and each component takes the sign of one representative cell.

use rayon::prelude::*;

use super::bvh::TriangleBvh;
use super::components::connected_components;
use super::grid::{BinaryGrid, Connectivity, Lattice, SignedDistanceGrid};
use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::Vec3;

pub const MIN_VOXEL_RESOLUTION: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SignMethod {
    #[default]
    Winding,
    /// Crossing parity along +x rays. Only meaningful for closed meshes.
    RayParity,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VoxelizeOptions {
    /// Accept meshes with boundary edges; signs then rely on the winding number.
    pub force_winding: bool,
    pub sign: SignMethod,
}

/// Voxelizes a normalized mesh on [`Lattice::normalized`].
pub fn voxelize(mesh: &TriangleMesh, resolution: usize) -> Result<SignedDistanceGrid> {
    voxelize_with(mesh, resolution, VoxelizeOptions::default())
}

pub fn voxelize_with(
    mesh: &TriangleMesh,
    resolution: usize,
    opts: VoxelizeOptions,
) -> Result<SignedDistanceGrid> {
    if resolution < MIN_VOXEL_RESOLUTION {
        return Err(Error::InvalidParameter(format!(
            "voxel resolution must be at least {MIN_VOXEL_RESOLUTION}, got {resolution}"
        )));
    }
    voxelize_on(mesh, Lattice::normalized(resolution), opts)
}

/// Voxelizes onto an arbitrary lattice.
pub fn voxelize_on(
    mesh: &TriangleMesh,
    lattice: Lattice,
    opts: VoxelizeOptions,
) -> Result<SignedDistanceGrid> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut sign = opts.sign;
    if !mesh.is_watertight() {
        if !opts.force_winding {
            return Err(Error::NotWatertight {
                boundary_edges: mesh.boundary_edges(),
            });
        }
        sign = SignMethod::Winding;
    }
    let bvh = TriangleBvh::build(mesh);
    let dist: Vec<f64> = (0..lattice.len())
        .into_par_iter()
        .map(|idx| {
            bvh.closest(&lattice.position_of(idx))
                .map_or(f64::INFINITY, |(d2, _)| d2.sqrt())
        })
        .collect();
    let inside = match sign {
        SignMethod::Winding => winding_signs(&bvh, &lattice, &dist),
        SignMethod::RayParity => parity_signs(mesh, &lattice),
    };
    let values = dist
        .iter()
        .zip(&inside)
        .map(|(&d, &ins)| if ins { -d } else { d })
        .collect();
    SignedDistanceGrid::new(lattice, values)
}

fn winding_signs(bvh: &TriangleBvh, lattice: &Lattice, dist: &[f64]) -> Vec<bool> {
    // Any 6-neighbor pair straddling the surface has both distances below one
    // spacing, so a band of sqrt(3) spacings separates the far components.
    let band = 3f64.sqrt() * lattice.spacing;
    let near: Vec<bool> = dist.iter().map(|&d| d <= band).collect();
    let mut inside: Vec<bool> = near
        .par_iter()
        .enumerate()
        .map(|(idx, &n)| n && bvh.winding_number(&lattice.position_of(idx)) > 0.5)
        .collect();
    let far = BinaryGrid {
        lattice: *lattice,
        bits: near.iter().map(|n| !n).collect(),
    };
    let cc = connected_components(&far, Connectivity::Six);
    let mut rep = vec![usize::MAX; cc.count()];
    for (idx, &l) in cc.labels.iter().enumerate() {
        if l > 0 && rep[l as usize - 1] == usize::MAX {
            rep[l as usize - 1] = idx;
        }
    }
    let comp_inside: Vec<bool> = rep
        .par_iter()
        .map(|&idx| bvh.winding_number(&lattice.position_of(idx)) > 0.5)
        .collect();
    for (idx, &l) in cc.labels.iter().enumerate() {
        if l > 0 {
            inside[idx] = comp_inside[l as usize - 1];
        }
    }
    inside
}

fn parity_signs(mesh: &TriangleMesh, lattice: &Lattice) -> Vec<bool> {
    let n = lattice.resolution;
    let h = lattice.spacing;
    let o = lattice.origin();
    // Bin triangles by the (y, z) rows their projection overlaps.
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n * n];
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t);
        let lo = a.inf(&b).inf(&c);
        let hi = a.sup(&b).sup(&c);
        let j0 = (((lo.y - o.y) / h).ceil().max(0.0)) as usize;
        let j1 = (((hi.y - o.y) / h).floor()).min(n as f64 - 1.0);
        let k0 = (((lo.z - o.z) / h).ceil().max(0.0)) as usize;
        let k1 = (((hi.z - o.z) / h).floor()).min(n as f64 - 1.0);
        if j1 < 0.0 || k1 < 0.0 {
            continue;
        }
        for k in k0..=k1 as usize {
            for j in j0..=j1 as usize {
                rows[j + n * k].push(t);
            }
        }
    }
    let per_row: Vec<Vec<bool>> = (0..n * n)
        .into_par_iter()
        .map(|row| {
            let (j, k) = (row % n, row / n);
            let y = o.y + j as f64 * h;
            let z = o.z + k as f64 * h;
            let mut hits: Vec<f64> = rows[row]
                .iter()
                .filter_map(|&t| {
                    let [a, b, c] = mesh.corners(t);
                    ray_x_hit(y, z, &a, &b, &c)
                })
                .collect();
            hits.sort_by(f64::total_cmp);
            (0..n)
                .map(|i| {
                    let x = o.x + i as f64 * h;
                    hits.iter().filter(|&&hx| hx > x).count() % 2 == 1
                })
                .collect()
        })
        .collect();
    let mut inside = vec![false; lattice.len()];
    for (row, bits) in per_row.into_iter().enumerate() {
        let (j, k) = (row % n, row / n);
        for (i, b) in bits.into_iter().enumerate() {
            inside[lattice.index(i, j, k)] = b;
        }
    }
    inside
}

/// x coordinate where the line `(·, y, z)` crosses the triangle, using a
/// half-open edge rule so shared edges count once.
fn ray_x_hit(y: f64, z: f64, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let edge = |p: &Vec3, q: &Vec3| (q.y - p.y) * (z - p.z) - (q.z - p.z) * (y - p.y);
    let (e0, e1, e2) = (edge(a, b), edge(b, c), edge(c, a));
    let pos = e0 > 0.0 || (e0 == 0.0 && top_left(a, b));
    let pos = pos
        && (e1 > 0.0 || (e1 == 0.0 && top_left(b, c)))
        && (e2 > 0.0 || (e2 == 0.0 && top_left(c, a)));
    let neg = (e0 < 0.0 || (e0 == 0.0 && top_left(b, a)))
        && (e1 < 0.0 || (e1 == 0.0 && top_left(c, b)))
        && (e2 < 0.0 || (e2 == 0.0 && top_left(a, c)));
    if !(pos || neg) {
        return None;
    }
    let area = e0 + e1 + e2;
    if area == 0.0 {
        return None;
    }
    // Barycentric weights: e1 belongs to a, e2 to b, e0 to c.
    Some((e1 * a.x + e2 * b.x + e0 * c.x) / area)
}

fn top_left(p: &Vec3, q: &Vec3) -> bool {
    q.z > p.z || (q.z == p.z && q.y < p.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::mesh::shapes::{icosphere, subdivided_box};

    #[test]
    fn cube_center_is_minus_half() {
        let cube = subdivided_box(Vec3::repeat(-0.5), Vec3::repeat(0.5), 2);
        let g = voxelize(&cube, 64).unwrap();
        let h = g.lattice.spacing;
        let c = g.sample(&Vec3::zeros());
        assert!((c + 0.5).abs() <= h, "center value {c}");
    }

    #[test]
    fn sphere_matches_analytic_sdf() {
        let s = icosphere(0.4, 4);
        let g = voxelize(&s, 32).unwrap();
        let h = g.lattice.spacing;
        // Facet sagitta of a 4x subdivided icosphere at radius 0.4 is below 1e-3.
        for idx in 0..g.lattice.len() {
            let p = g.lattice.position_of(idx);
            let exact = p.norm() - 0.4;
            assert!((g.values[idx] - exact).abs() <= 1.5 * h + 2e-3, "at {p:?}");
        }
        // Point (0.4 + h, 0, 0) sits on a lattice row through the center only
        // approximately, so compare with the interpolated value.
        let v = g.sample(&Vec3::new(0.4 + h, 0.0, 0.0));
        assert!((v - h).abs() < 0.1 * h + 2e-3);
    }

    #[test]
    fn open_plane_is_rejected() {
        let plane = TriangleMesh::new(
            vec![
                Vec3::new(-0.5, -0.5, 0.0),
                Vec3::new(0.5, -0.5, 0.0),
                Vec3::new(0.5, 0.5, 0.0),
                Vec3::new(-0.5, 0.5, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        assert!(matches!(
            voxelize(&plane, 16),
            Err(Error::NotWatertight { .. })
        ));
        let forced = voxelize_with(
            &plane,
            16,
            VoxelizeOptions {
                force_winding: true,
                ..Default::default()
            },
        );
        assert!(forced.is_ok());
    }

    #[test]
    fn parity_agrees_with_winding_on_closed_mesh() {
        let s = icosphere(0.4, 3);
        let a = voxelize(&s, 24).unwrap();
        let b = voxelize_with(
            &s,
            24,
            VoxelizeOptions {
                sign: SignMethod::RayParity,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.inside(), b.inside());
    }

    #[test]
    fn low_resolution_is_rejected() {
        let s = icosphere(0.4, 1);
        assert!(voxelize(&s, 8).is_err());
    }
}
