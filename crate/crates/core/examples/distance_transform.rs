//! Exact signed distance transform of a binary occupancy grid.

use resfit::field::{distance_transform, BinaryGrid, Lattice};
use resfit::Vec3;

fn main() {
    let lattice = Lattice::normalized(64);
    let occ = BinaryGrid::from_fn(lattice, |p| p.norm() <= 0.3);
    let (sdf, flag) = distance_transform(&occ);
    println!("status {flag:?}, spacing {:.4}", lattice.spacing);
    for x in [0.0, 0.15, 0.3, 0.45] {
        let p = Vec3::new(x, 0.0, 0.0);
        println!(
            "f({x:.2}, 0, 0) = {:+.4} (analytic {:+.4})",
            sdf.sample(&p),
            p.norm() - 0.3
        );
    }
}
