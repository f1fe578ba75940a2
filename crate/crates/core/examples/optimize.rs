//! Gradient-based fitting of two primitives to a sampled box, with the loss
//! history written as CSV.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resfit::assembly::{PosedPrimitive, RigidPose, DEFAULT_BETA_OCC};
use resfit::field::mesh::shapes;
use resfit::field::{normalize_mesh, sample_points, voxelize};
use resfit::optimize::{optimize, write_loss_csv, LossWeights, OptimizeOptions, TrainPrim};
use resfit::superfrustum::{canonical_params, CanonicalKind};
use resfit::Vec3;

fn main() -> resfit::Result<()> {
    let (mesh, _) = normalize_mesh(&shapes::subdivided_box(
        Vec3::new(-1.0, -0.4, -0.25),
        Vec3::new(1.0, 0.4, 0.25),
        6,
    ))?;
    let grid = voxelize(&mesh, 48)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pts = sample_points(&mesh, &grid, 4096, 4096, &mut rng);

    // Start from two small cubes; training grows and merges them.
    let start: Vec<TrainPrim> = [-0.1, 0.1]
        .iter()
        .map(|&x| {
            let pose = RigidPose {
                translation: Vec3::new(x, 0.0, 0.0),
                ..RigidPose::identity()
            };
            TrainPrim::free(&PosedPrimitive::new(
                canonical_params(CanonicalKind::Cuboid, [0.1; 3]),
                pose,
            ))
        })
        .collect();
    let opts = OptimizeOptions::new(
        LossWeights::default(),
        DEFAULT_BETA_OCC,
        grid.lattice.spacing,
    );
    let out = optimize(start, &pts, &opts, &mut rng)?;
    println!(
        "loss {:.5} -> {:.5} in {} steps, {} restarts",
        out.initial.total,
        out.best.total,
        out.history.len(),
        out.restarts
    );
    for p in &out.prims {
        let prim = p.to_primitive();
        println!(
            "existence {:.2}, params {:.3?}",
            prim.existence(),
            prim.params.to_array()
        );
    }
    let path = std::env::temp_dir().join("optimize_loss.csv");
    write_loss_csv(&out.history, &mut std::fs::File::create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
