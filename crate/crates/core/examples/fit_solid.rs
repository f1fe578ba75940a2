//! Fit a shape with canonical solids only: cuboids, cylinders, cones, spheres.

use resfit::assembly::{PosedPrimitive, RigidPose};
use resfit::field::{distance_transform, BinaryGrid, Lattice};
use resfit::resfit::{fit, FitConfig, FitMode, Target};
use resfit::superfrustum::{canonical_params, CanonicalKind};
use resfit::Vec3;

fn main() -> resfit::Result<()> {
    let at = |x: f64| RigidPose {
        translation: Vec3::new(x, 0.0, 0.0),
        ..RigidPose::identity()
    };
    let cylinder = PosedPrimitive::new(
        canonical_params(CanonicalKind::Cylinder, [0.12, 0.12, 0.25]),
        at(-0.12),
    );
    let cuboid = PosedPrimitive::new(
        canonical_params(CanonicalKind::Cuboid, [0.2, 0.1, 0.08]),
        at(0.15),
    );
    let lattice = Lattice::normalized(64);
    let occ = BinaryGrid::from_fn(lattice, |p| cylinder.sdf(p) <= 0.0 || cuboid.sdf(p) <= 0.0);

    let cfg = FitConfig {
        resolution: 64,
        max_rounds: 5,
        mode: FitMode::Solid,
        ..FitConfig::default()
    };
    let target = Target::from_grid(distance_transform(&occ).0, &cfg)?;
    let result = fit(&target, &cfg)?;
    let rec = result.assembly.occupancy_grid(lattice);
    let iou = occ.and(&rec)?.count() as f64 / occ.or(&rec)?.count() as f64;
    println!(
        "voxel IoU {iou:.4}, kinds {:?}",
        result.kinds.unwrap_or_default()
    );
    for s in &result.trace.swaps {
        println!("primitive {} swapped {} -> {}", s.index, s.from, s.to);
    }
    Ok(())
}
