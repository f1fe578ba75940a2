//! Split a dumbbell into regions ordered from thickest to thinnest.

use resfit::field::{Lattice, SignedDistanceGrid};
use resfit::msd::{decompose, MsdConfig};
use resfit::Vec3;

fn main() -> resfit::Result<()> {
    let (a, b) = (Vec3::new(-0.25, 0.0, 0.0), Vec3::new(0.25, 0.0, 0.0));
    let shape = SignedDistanceGrid::from_fn(Lattice::normalized(96), |p| {
        let rod = (p.y * p.y + p.z * p.z).sqrt().max(p.x.abs() - 0.25) - 0.05;
        ((p - a).norm() - 0.18).min((p - b).norm() - 0.16).min(rod)
    });
    for region in decompose(&shape, &MsdConfig::default())? {
        let n = region.mask.count() as f64;
        let centroid = region
            .mask
            .set_indices()
            .map(|i| shape.lattice.position_of(i))
            .sum::<Vec3>()
            / n;
        println!(
            "region {}: tau {:+.4}, volume {:.5}, centroid ({:+.2}, {:+.2}, {:+.2})",
            region.order_index, region.tau, region.volume, centroid.x, centroid.y, centroid.z
        );
    }
    Ok(())
}
