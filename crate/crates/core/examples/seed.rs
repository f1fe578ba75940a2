//! Estimate an initial primitive from the points of a region.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resfit::field::{BinaryGrid, Lattice};
use resfit::seed::{sample_region_points, seed_candidates, seed_primitive};

fn main() -> resfit::Result<()> {
    // A tilted rod.
    let axis = resfit::Vec3::new(1.0, 1.0, 0.0).normalize();
    let mask = BinaryGrid::from_fn(Lattice::normalized(64), |p| {
        let along = p.dot(&axis);
        along.abs() <= 0.3 && (p - axis * along).norm() <= 0.08
    });
    let points = sample_region_points(&mask, 2048, &mut ChaCha8Rng::seed_from_u64(0));
    for (i, est) in seed_candidates(&points)?.iter().enumerate() {
        let prim = seed_primitive(est);
        println!(
            "candidate {i}: axis {:.2?}, half length {:.3}, radii {:.3?}, cylindricity {:.2?}",
            est.axis.as_slice(),
            est.half_length,
            est.radial_extents,
            est.cylindricity
        );
        println!(
            "  primitive sizes ({:.3}, {:.3}, {:.3}), roundness {:.2}",
            prim.params.sx, prim.params.sy, prim.params.sz, prim.params.r
        );
    }
    Ok(())
}
