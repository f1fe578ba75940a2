//! Initial primitives for decomposed regions: PCA frame, cylindricity-based
//! axis choice, percentile extents.

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, UnitQuaternion};
use rand::Rng;

use crate::assembly::{PosedPrimitive, RigidPose};
use crate::error::{Error, Result};
use crate::field::BinaryGrid;
use crate::superfrustum::SuperFrustumParams;
use crate::Vec3;

pub const MIN_SEED_POINTS: usize = 16;
/// Lower and upper projection percentiles used for extents.
pub const EXTENT_PERCENTILES: (f64, f64) = (0.01, 0.99);
pub const SEED_ROUNDNESS: f64 = 0.5;
const MIN_EXTENT: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedEstimate {
    /// Selected canonical (+z) axis.
    pub axis: Vec3,
    /// The two remaining PCA axes, larger variance first; `[u, v, axis]` is right handed.
    pub cross_axes: [Vec3; 2],
    pub center: Vec3,
    pub half_length: f64,
    pub radial_extents: [f64; 2],
    /// Cylindricity of each PCA axis, largest eigenvalue first.
    pub cylindricity: [f64; 3],
    /// PCA axes matching `cylindricity`.
    pub pca_axes: [Vec3; 3],
}

/// `1 - |λu - λv| / (λu + λv)`: 1 for an isotropic cross-section.
pub fn cylindricity(lu: f64, lv: f64) -> f64 {
    let s = lu + lv;
    if s <= 0.0 {
        return 1.0;
    }
    1.0 - (lu - lv).abs() / s
}

fn percentile_half_extent(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len() - 1;
    let at = |q: f64| values[(q * n as f64).round() as usize];
    (0.5 * (at(EXTENT_PERCENTILES.1) - at(EXTENT_PERCENTILES.0))).max(MIN_EXTENT)
}

pub fn estimate_seed(points: &[Vec3]) -> Result<SeedEstimate> {
    Ok(seed_candidates(points)?.swap_remove(0))
}

/// One estimate per PCA axis as the canonical axis. The first is the
/// cylindricity choice, the rest follow in decreasing eigenvalue order.
pub fn seed_candidates(points: &[Vec3]) -> Result<Vec<SeedEstimate>> {
    if points.len() < MIN_SEED_POINTS {
        return Err(Error::InvalidParameter(format!(
            "seed estimation needs at least {MIN_SEED_POINTS} points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let center = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - center;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-12 * scale)
        .count();
    let (lambdas, axes): ([f64; 3], [Vec3; 3]) = if rank >= 2 {
        (
            order.map(|i| eig.eigenvalues[i].max(0.0)),
            order.map(|i| eig.eigenvectors.column(i).into_owned()),
        )
    } else {
        log::debug!("degenerate point covariance, using bounding-box axes");
        let var = cov.diagonal();
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| var[b].total_cmp(&var[a]));
        (idx.map(|i| var[i]), idx.map(|i| Vec3::ith(i, 1.0)))
    };
    let cyl = [
        cylindricity(lambdas[1], lambdas[2]),
        cylindricity(lambdas[0], lambdas[2]),
        cylindricity(lambdas[0], lambdas[1]),
    ];
    // Ties go to the larger eigenvalue, which comes first.
    let mut pick = 0;
    for a in 1..3 {
        if cyl[a] > cyl[pick] + 1e-12 {
            pick = a;
        }
    }
    let project = |dir: &Vec3| -> f64 {
        let mut proj: Vec<f64> = points.iter().map(|p| (p - center).dot(dir)).collect();
        percentile_half_extent(&mut proj)
    };
    let along = |a: usize| {
        let axis = axes[a].normalize();
        let others: Vec<usize> = (0..3).filter(|&b| b != a).collect();
        let u = axes[others[0]].normalize();
        let v = axis.cross(&u);
        SeedEstimate {
            axis,
            cross_axes: [u, v],
            center,
            half_length: project(&axis),
            radial_extents: [project(&u), project(&v)],
            cylindricity: cyl,
            pca_axes: axes,
        }
    };
    Ok(std::iter::once(pick)
        .chain((0..3).filter(|&a| a != pick))
        .map(along)
        .collect())
}

/// Primitive spanning the estimate: `+z` along the axis, sizes from extents,
/// half-round profile, no taper, bulge, dilation or shell.
pub fn seed_primitive(est: &SeedEstimate) -> PosedPrimitive {
    let frame = Matrix3::from_columns(&[est.cross_axes[0], est.cross_axes[1], est.axis]);
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(frame));
    let params = SuperFrustumParams {
        sx: est.radial_extents[0],
        sy: est.radial_extents[1],
        sz: est.half_length,
        r: SEED_ROUNDNESS,
        d: 0.0,
        t: 0.0,
        b: 0.0,
        o: 0.0,
    };
    PosedPrimitive::new(params, RigidPose::from_rotation(rot, est.center))
}

/// `n` points drawn uniformly from the cells of `mask`.
pub fn sample_region_points<R: Rng>(mask: &BinaryGrid, n: usize, rng: &mut R) -> Vec<Vec3> {
    let cells: Vec<usize> = mask.set_indices().collect();
    if cells.is_empty() {
        return Vec::new();
    }
    let h = mask.lattice.spacing;
    (0..n)
        .map(|_| {
            let c = mask
                .lattice
                .position_of(cells[rng.gen_range(0..cells.len())]);
            c + Vec3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ) * h
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Lattice;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform<R: Rng>(
        n: usize,
        rng: &mut R,
        inside: impl Fn(&Vec3) -> bool,
        half: Vec3,
    ) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let p = Vec3::new(
                rng.gen_range(-half.x..half.x),
                rng.gen_range(-half.y..half.y),
                rng.gen_range(-half.z..half.z),
            );
            if inside(&p) {
                out.push(p);
            }
        }
        out
    }

    fn angle_deg(a: &Vec3, b: &Vec3) -> f64 {
        a.dot(b).abs().min(1.0).acos().to_degrees()
    }

    #[test]
    fn cylinder_axis_is_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = uniform(
            5000,
            &mut rng,
            |p| p.x * p.x + p.y * p.y <= 0.01,
            Vec3::new(0.1, 0.1, 0.4),
        );
        let e = estimate_seed(&pts).unwrap();
        assert!(angle_deg(&e.axis, &Vec3::z()) < 5.0);
        let z_cyl = e.cylindricity[e
            .pca_axes
            .iter()
            .position(|a| angle_deg(a, &Vec3::z()) < 5.0)
            .unwrap()];
        let x_cyl = e.cylindricity[e
            .pca_axes
            .iter()
            .position(|a| angle_deg(a, &Vec3::z()) > 45.0)
            .unwrap()];
        assert!(z_cyl > x_cyl);
        assert!((e.half_length - 0.4).abs() < 0.03);
    }

    #[test]
    fn ball_is_nearly_isotropic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = uniform(20_000, &mut rng, |p| p.norm() <= 0.3, Vec3::repeat(0.3));
        let e = estimate_seed(&pts).unwrap();
        assert!(
            e.cylindricity.iter().all(|&c| c > 0.95),
            "{:?}",
            e.cylindricity
        );
        let s = seed_primitive(&e).params;
        let (lo, hi) = (s.sx.min(s.sy).min(s.sz), s.sx.max(s.sy).max(s.sz));
        assert!(hi / lo < 1.1);
    }

    #[test]
    fn slab_axis_is_the_thin_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = uniform(5000, &mut rng, |_| true, Vec3::new(0.2, 0.2, 0.025));
        let e = estimate_seed(&pts).unwrap();
        assert!(angle_deg(&e.axis, &Vec3::z()) < 5.0);
        assert!(e.cylindricity.iter().copied().fold(0.0, f64::max) > 0.95);
        let s = seed_primitive(&e).params;
        assert!((s.sz - 0.025).abs() < 0.003);
    }

    #[test]
    fn candidates_cover_every_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = uniform(4000, &mut rng, |_| true, Vec3::new(0.3, 0.2, 0.1));
        let c = seed_candidates(&pts).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[0], estimate_seed(&pts).unwrap());
        for i in 0..3 {
            for j in 0..i {
                assert!(c[i].axis.dot(&c[j].axis).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(estimate_seed(&[Vec3::zeros(); 8]).is_err());
    }

    #[test]
    fn collinear_points_fall_back() {
        let pts: Vec<Vec3> = (0..32)
            .map(|i| Vec3::new(0.0, i as f64 * 0.01, 0.0))
            .collect();
        let e = estimate_seed(&pts).unwrap();
        assert!(e.half_length > 0.0 && e.radial_extents.iter().all(|&r| r > 0.0));
        assert!((e.axis.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seeded_cylinder_matches_region() {
        let l = Lattice::normalized(64);
        let rot = UnitQuaternion::from_euler_angles(0.4, -0.7, 1.1);
        let axis = rot * Vec3::z();
        let c = Vec3::new(0.05, -0.02, 0.03);
        let region = BinaryGrid::from_fn(l, |p| {
            let d = p - c;
            let h = d.dot(&axis);
            h.abs() <= 0.3 && (d - axis * h).norm() <= 0.12
        });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = sample_region_points(&region, 4096, &mut rng);
        let e = estimate_seed(&pts).unwrap();
        let prim = seed_primitive(&e);
        let z = prim.pose.rotation() * Vec3::z();
        assert!((z - e.axis).norm() < 1e-9);
        let seeded = BinaryGrid::from_fn(l, |p| prim.sdf(p) <= 0.0);
        let iou = seeded.and(&region).unwrap().count() as f64
            / seeded.or(&region).unwrap().count() as f64;
        assert!(iou >= 0.6, "iou {iou}");
        let radius = prim.params.bounding_radius();
        let inside = pts
            .iter()
            .filter(|p| (*p - prim.pose.translation).norm() <= radius)
            .count();
        assert!(inside as f64 >= 0.95 * pts.len() as f64);
    }

    #[test]
    fn deterministic_given_seed() {
        let l = Lattice::normalized(32);
        let region = BinaryGrid::from_fn(l, |p| p.norm() < 0.3 && p.x > 0.0);
        let a = sample_region_points(&region, 256, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_region_points(&region, 256, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(estimate_seed(&a).unwrap(), estimate_seed(&b).unwrap());
    }
}
