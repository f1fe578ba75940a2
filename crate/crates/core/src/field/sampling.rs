//! Supervision points: uniform in the volume and jittered near the surface.

use rand::Rng;

use super::curvature::estimate_curvature;
use super::grid::SignedDistanceGrid;
use super::kdtree::PointIndex;
use super::mesh::TriangleMesh;
use crate::dual::Scalar;
use crate::Vec3;

/// Near-surface jitter half-width, in lattice spacings.
pub const SURFACE_BAND_SPACINGS: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplePoint {
    pub position: Vec3,
    /// 1 inside the target, 0 outside.
    pub target_occupancy: f64,
    /// `1 + sigmoid(curvature)`, in (1, 2).
    pub weight: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PointSet {
    pub points: Vec<SamplePoint>,
    pub n_volume: usize,
    pub n_surface: usize,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }
}

/// Curvature weight lookup by nearest mesh vertex.
#[derive(Debug)]
pub struct CurvatureWeights {
    index: PointIndex,
    curvature: Vec<f64>,
}

impl CurvatureWeights {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let curvature = mesh
            .curvature
            .clone()
            .unwrap_or_else(|| estimate_curvature(mesh));
        Self {
            index: PointIndex::new(&mesh.vertices),
            curvature,
        }
    }

    pub fn weight(&self, p: &Vec3) -> f64 {
        let k = self
            .index
            .nearest(p)
            .map_or(0.0, |(i, _)| self.curvature[i]);
        1.0 + k.sigmoid()
    }
}

/// Points on `mesh` displaced along the normal by a uniform offset in
/// `[-band, band]`.
pub fn near_surface_positions<R: Rng>(
    mesh: &TriangleMesh,
    n: usize,
    band: f64,
    rng: &mut R,
) -> Vec<Vec3> {
    if mesh.is_empty() {
        return Vec::new();
    }
    mesh.sample_surface(n, rng)
        .into_iter()
        .map(|(p, normal, _)| p + normal * rng.gen_range(-band..=band))
        .collect()
}

/// Draws `n_volume` points uniformly in the grid's box and `n_surface`
/// jittered surface points, labeled by the grid sign.
pub fn sample_points<R: Rng>(
    mesh: &TriangleMesh,
    grid: &SignedDistanceGrid,
    n_volume: usize,
    n_surface: usize,
    rng: &mut R,
) -> PointSet {
    let weights = CurvatureWeights::new(mesh);
    let (lo, hi) = grid.lattice.bounds();
    let band = SURFACE_BAND_SPACINGS * grid.lattice.spacing;
    let mut positions: Vec<Vec3> = (0..n_volume)
        .map(|_| {
            Vec3::new(
                rng.gen_range(lo.x..hi.x),
                rng.gen_range(lo.y..hi.y),
                rng.gen_range(lo.z..hi.z),
            )
        })
        .collect();
    let surface = near_surface_positions(mesh, n_surface, band, rng);
    let n_surface = surface.len();
    positions.extend(surface);
    let points = positions
        .into_iter()
        .map(|p| SamplePoint {
            position: p,
            target_occupancy: if grid.sample(&p) <= 0.0 { 1.0 } else { 0.0 },
            weight: weights.weight(&p),
        })
        .collect();
    PointSet {
        points,
        n_volume,
        n_surface,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::mesh::shapes::icosphere;
    use crate::field::voxelize::voxelize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn volume_fraction_and_weights() {
        let s = icosphere(0.4, 4);
        let g = voxelize(&s, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ps = sample_points(&s, &g, 10_000, 2_000, &mut rng);
        assert_eq!(ps.len(), 12_000);
        let (lo, hi) = g.lattice.bounds();
        let box_vol = (hi - lo).product();
        let p = s.volume() / box_vol;
        let frac = ps.points[..10_000]
            .iter()
            .map(|p| p.target_occupancy)
            .sum::<f64>()
            / 10_000.0;
        let sigma = (p * (1.0 - p) / 10_000.0).sqrt();
        assert!((frac - p).abs() <= 3.0 * sigma, "fraction {frac} vs {p}");
        assert!(ps.points.iter().all(|p| p.weight > 1.0 && p.weight < 2.0));
        let h = g.lattice.spacing;
        let near = ps.points[10_000..]
            .iter()
            .filter(|p| g.sample(&p.position).abs() <= 2.0 * h + 1e-9)
            .count();
        assert!(near as f64 >= 0.99 * 2000.0, "{near} of 2000 within band");
    }
}
