//! Morphological shape decomposition: peel the thickest connected part,
//! dilate it back, subtract it, repeat.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::edt::squared_edt;
use crate::field::{
    connected_components, distance_transform, BinaryGrid, Connectivity, Lattice, SignedDistanceGrid,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MsdConfig {
    /// Required core volume as a fraction of the current residual volume.
    pub volume_fraction: f64,
    pub max_iterations: usize,
    pub min_region_voxels: usize,
    #[serde(with = "connectivity_serde")]
    pub connectivity: Connectivity,
}

impl Default for MsdConfig {
    fn default() -> Self {
        Self {
            volume_fraction: 0.05,
            max_iterations: 7,
            min_region_voxels: 32,
            connectivity: Connectivity::TwentySix,
        }
    }
}

impl MsdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.volume_fraction > 0.0 && self.volume_fraction < 1.0) {
            return Err(Error::Config(format!(
                "volume_fraction must lie in (0, 1), got {}",
                self.volume_fraction
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

mod connectivity_serde {
    use super::Connectivity;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &Connectivity, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u32(match c {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Connectivity, D::Error> {
        let n = u32::deserialize(d)?;
        Connectivity::from_count(n).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug)]
pub struct MsdRegion {
    /// Core dilated back by `|tau|`, restricted to the residual it came from.
    pub mask: BinaryGrid,
    /// Largest connected component surviving erosion to `tau`.
    pub core_mask: BinaryGrid,
    pub tau: f64,
    pub order_index: usize,
    /// World-space volume of `mask`.
    pub volume: f64,
}

/// Deepest erosion whose largest component keeps `volume_fraction` of the
/// inside volume. `tau` is searched only in `[floor, 0]`. Returns `None`
/// when the field has fewer than `min_voxels` inside cells.
pub fn find_thickest_in(
    f: &SignedDistanceGrid,
    volume_fraction: f64,
    connectivity: Connectivity,
    min_voxels: usize,
    floor: f64,
) -> Option<(BinaryGrid, f64)> {
    let inside = f.values.iter().filter(|&&v| v <= 0.0).count();
    if inside == 0 || inside < min_voxels {
        return None;
    }
    let need = volume_fraction * inside as f64;
    let mut taus: Vec<f64> = f
        .values
        .iter()
        .copied()
        .filter(|&v| v < 0.0 && v >= floor)
        .collect();
    taus.par_sort_unstable_by(f64::total_cmp);
    taus.dedup();
    taus.push(0.0);
    let largest = |tau: f64| {
        let comps = connected_components(&f.threshold(tau), connectivity);
        comps.largest().map(|(label, size)| (comps, label, size))
    };
    // The largest component only grows with tau, so the predicate is monotone.
    let (mut lo, mut hi) = (0usize, taus.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        match largest(taus[mid]) {
            Some((_, _, size)) if size as f64 >= need => hi = mid,
            _ => lo = mid + 1,
        }
    }
    let tau = taus[lo];
    let (comps, label, _) = largest(tau)?;
    Some((comps.mask(f.lattice, label), tau))
}

pub fn find_thickest(f: &SignedDistanceGrid, volume_fraction: f64) -> Option<(BinaryGrid, f64)> {
    find_thickest_in(
        f,
        volume_fraction,
        Connectivity::TwentySix,
        1,
        f64::NEG_INFINITY,
    )
}

/// Cells whose center lies within `radius` of a center in `core`.
pub fn dilate_core(core: &BinaryGrid, radius: f64) -> BinaryGrid {
    let lattice: Lattice = core.lattice;
    if radius <= 0.0 || core.count() == 0 {
        return core.clone();
    }
    let r = radius.abs() / lattice.spacing;
    let limit = r * r + 1e-9;
    let d2 = squared_edt(&core.bits, lattice.resolution);
    BinaryGrid {
        lattice,
        bits: d2.into_iter().map(|d| d <= limit).collect(),
    }
}

/// `(f <= 0) \ region`, re-signed by a distance transform.
pub fn subtract_region(f: &SignedDistanceGrid, region: &BinaryGrid) -> Result<SignedDistanceGrid> {
    let residual = f.inside().and_not(region)?;
    Ok(distance_transform(&residual).0)
}

/// Thickness-ordered regions of the inside of `f`.
pub fn decompose(f: &SignedDistanceGrid, cfg: &MsdConfig) -> Result<Vec<MsdRegion>> {
    cfg.validate()?;
    let mut regions = Vec::new();
    let mut residual = f.clone();
    let mut floor = f64::NEG_INFINITY;
    for order_index in 0..cfg.max_iterations {
        let Some((core, tau)) = find_thickest_in(
            &residual,
            cfg.volume_fraction,
            cfg.connectivity,
            cfg.min_region_voxels,
            floor,
        ) else {
            break;
        };
        let inside = residual.inside();
        let mask = dilate_core(&core, -tau).and(&inside)?;
        if mask.count() < cfg.min_region_voxels {
            break;
        }
        let next = subtract_region(&residual, &mask)?;
        let volume = mask.volume();
        log::debug!(
            "msd region {order_index}: tau {tau:.4}, {} voxels",
            mask.count()
        );
        regions.push(MsdRegion {
            mask,
            core_mask: core,
            tau,
            order_index,
            volume,
        });
        residual = next;
        floor = tau;
    }
    Ok(regions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;

    fn ball(c: Vec3, r: f64) -> impl Fn(&Vec3) -> f64 {
        move |p: &Vec3| (p - c).norm() - r
    }

    fn iou(a: &BinaryGrid, b: &BinaryGrid) -> f64 {
        a.and(b).unwrap().count() as f64 / a.or(b).unwrap().count() as f64
    }

    #[test]
    fn ball_erosion_depth() {
        let l = Lattice::normalized(64);
        let f = SignedDistanceGrid::from_fn(l, ball(Vec3::zeros(), 0.3));
        let (core, tau) = find_thickest(&f, 0.1).unwrap();
        let expect = 0.3 * (1.0 - 0.1f64.cbrt());
        assert!(
            (tau.abs() - expect).abs() <= 2.0 * l.spacing,
            "{tau} vs {expect}"
        );
        assert!(core.count() as f64 >= 0.1 * f.inside().count() as f64);
    }

    #[test]
    fn full_fraction_keeps_whole_component() {
        let l = Lattice::normalized(32);
        let f = SignedDistanceGrid::from_fn(l, ball(Vec3::zeros(), 0.3));
        let (core, tau) = find_thickest(&f, 0.999_999).unwrap();
        assert!(tau.abs() < l.spacing);
        assert_eq!(core, f.inside());
    }

    #[test]
    fn dumbbell_core_avoids_rod() {
        let l = Lattice::normalized(64);
        let (a, b) = (Vec3::new(-0.25, 0.0, 0.0), Vec3::new(0.25, 0.0, 0.0));
        let f = SignedDistanceGrid::from_fn(l, |p| {
            let rod = (p.y * p.y + p.z * p.z).sqrt().max(p.x.abs() - 0.25) - 0.05;
            ((p - a).norm() - 0.2).min((p - b).norm() - 0.2).min(rod)
        });
        let (core, _) = find_thickest(&f, 0.05).unwrap();
        let in_ball = core.set_indices().all(|i| {
            let p = l.position_of(i);
            (p - a).norm() < 0.2 || (p - b).norm() < 0.2
        });
        let one_side = core.set_indices().all(|i| l.position_of(i).x < 0.0)
            || core.set_indices().all(|i| l.position_of(i).x > 0.0);
        assert!(in_ball && one_side);
    }

    #[test]
    fn dilation_examples() {
        let l = Lattice::normalized(16);
        let mut single = BinaryGrid::empty(l);
        single.bits[l.index(8, 8, 8)] = true;
        assert_eq!(dilate_core(&single, 0.0), single);
        let grown = dilate_core(&single, 3.0 * l.spacing);
        let brute = (-3i32..=3)
            .flat_map(|a| {
                (-3i32..=3).flat_map(move |b| (-3i32..=3).map(move |c| a * a + b * b + c * c))
            })
            .filter(|&d| d <= 9)
            .count();
        assert_eq!(brute, 123);
        assert_eq!(grown.count(), 123);
    }

    #[test]
    fn opening_recovers_ball() {
        let l = Lattice::normalized(48);
        let f = SignedDistanceGrid::from_fn(l, ball(Vec3::zeros(), 0.3));
        let core = f.threshold(-0.1);
        let back = dilate_core(&core, 0.1);
        let orig = f.inside();
        let (shell_in, shell_out) = (f.threshold(-l.spacing), f.threshold(l.spacing));
        assert!(shell_in.is_subset_of(&back) && back.is_subset_of(&shell_out));
        assert!(iou(&back, &orig) > 0.9);
    }

    #[test]
    fn subtraction_examples() {
        let l = Lattice::normalized(32);
        let f = SignedDistanceGrid::from_fn(l, ball(Vec3::zeros(), 0.3));
        let all = subtract_region(&f, &f.inside()).unwrap();
        assert_eq!(all.inside().count(), 0);
        let none = subtract_region(&f, &BinaryGrid::empty(l)).unwrap();
        assert_eq!(none.inside(), f.inside());
        assert!(none
            .values
            .iter()
            .zip(&f.values)
            .all(|(a, b)| (a - b).abs() <= l.spacing + 1e-12));
        let top = BinaryGrid::from_fn(l, |p| p.z > 0.0);
        let half = subtract_region(&f, &top).unwrap();
        assert_eq!(half.inside(), f.inside().and_not(&top).unwrap());
    }

    #[test]
    fn two_balls_in_thickness_order() {
        let l = Lattice::normalized(64);
        let (a, b) = (Vec3::new(-0.2, 0.0, 0.0), Vec3::new(0.3, 0.0, 0.0));
        let f =
            SignedDistanceGrid::from_fn(l, |p| ((p - a).norm() - 0.25).min((p - b).norm() - 0.12));
        let regions = decompose(&f, &MsdConfig::default()).unwrap();
        assert!(regions.len() >= 2);
        let big = BinaryGrid::from_fn(l, |p| (p - a).norm() <= 0.25);
        let small = BinaryGrid::from_fn(l, |p| (p - b).norm() <= 0.12);
        assert!(iou(&regions[0].mask, &big) > 0.9);
        assert!(iou(&regions[1].mask, &small) > 0.8);
        assert!(regions[0].tau.abs() > regions[1].tau.abs());
    }

    #[test]
    fn single_ball_is_one_region() {
        let l = Lattice::normalized(128);
        let f = SignedDistanceGrid::from_fn(l, ball(Vec3::zeros(), 0.3));
        let regions = decompose(&f, &MsdConfig::default()).unwrap();
        let covered =
            regions[0].mask.and(&f.inside()).unwrap().count() as f64 / f.inside().count() as f64;
        assert!(covered >= 0.95, "{covered}");
        // Anything after the first region is boundary quantization debris.
        assert!(regions
            .iter()
            .skip(1)
            .all(|r| r.mask.count() * 20 < regions[0].mask.count()));
    }

    #[test]
    fn empty_field_gives_no_regions() {
        let l = Lattice::normalized(16);
        let f = SignedDistanceGrid::from_fn(l, |_| 1.0);
        assert!(decompose(&f, &MsdConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn invariants_hold_on_a_composite_shape() {
        let l = Lattice::normalized(48);
        let f = SignedDistanceGrid::from_fn(l, |p| {
            let boxd = (p.abs() - Vec3::new(0.35, 0.1, 0.1))
                .map(|v| v.max(0.0))
                .norm();
            boxd.min((p - Vec3::new(0.0, 0.2, 0.0)).norm() - 0.18)
        });
        let cfg = MsdConfig::default();
        let a = decompose(&f, &cfg).unwrap();
        let b = decompose(&f, &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        let mut union = BinaryGrid::empty(l);
        for (k, r) in a.iter().enumerate() {
            assert_eq!(r.mask, b[k].mask);
            assert!(r.core_mask.is_subset_of(&r.mask));
            assert!(r.mask.count() >= cfg.min_region_voxels);
            assert_eq!(r.mask.and(&union).unwrap().count(), 0);
            assert!((r.volume - r.mask.count() as f64 * l.cell_volume()).abs() < 1e-12);
            union = union.or(&r.mask).unwrap();
            if k > 0 {
                assert!(r.tau.abs() <= a[k - 1].tau.abs());
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn regions_partition_part_of_the_inside(
            balls in proptest::collection::vec((-0.25f64..0.25, -0.25f64..0.25, -0.25f64..0.25, 0.08f64..0.2), 1..4)
        ) {
            let l = Lattice::normalized(32);
            let f = SignedDistanceGrid::from_fn(l, |p| {
                balls.iter().map(|&(x, y, z, r)| (p - Vec3::new(x, y, z)).norm() - r).fold(f64::INFINITY, f64::min)
            });
            let inside = f.inside();
            let cfg = MsdConfig::default();
            let regions = decompose(&f, &cfg).unwrap();
            proptest::prop_assert!(regions.len() <= cfg.max_iterations);
            let mut union = BinaryGrid::empty(l);
            for (k, r) in regions.iter().enumerate() {
                proptest::prop_assert_eq!(r.order_index, k);
                proptest::prop_assert!(r.tau <= 0.0);
                proptest::prop_assert!(r.mask.is_subset_of(&inside));
                proptest::prop_assert!(r.core_mask.is_subset_of(&r.mask));
                proptest::prop_assert_eq!(r.mask.and(&union).unwrap().count(), 0);
                union = union.or(&r.mask).unwrap();
            }
        }
    }
}
