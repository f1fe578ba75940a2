//! Blend posed primitives into one field and query it in soft and hard mode.

use resfit::assembly::{smooth_union, Assembly, EvalMode, PosedPrimitive, RigidPose};
use resfit::field::Lattice;
use resfit::superfrustum::{canonical_params, CanonicalKind};
use resfit::Vec3;

fn main() {
    for beta in [0.0, 0.05, 0.2] {
        println!(
            "smooth_union(0.1, 0.12, {beta}) = {:.4}",
            smooth_union(0.1, 0.12, beta)
        );
    }

    let at = |x: f64| RigidPose {
        translation: Vec3::new(x, 0.0, 0.0),
        ..RigidPose::identity()
    };
    let mut ball =
        PosedPrimitive::new(canonical_params(CanonicalKind::Sphere, [0.2; 3]), at(-0.15));
    ball.blend = 0.05;
    let bar = PosedPrimitive::new(
        canonical_params(CanonicalKind::Cuboid, [0.25, 0.06, 0.06]),
        at(0.15),
    );
    // A primitive whose existence has fallen below one half.
    let mut faded = PosedPrimitive::new(
        canonical_params(CanonicalKind::Cylinder, [0.1, 0.1, 0.1]),
        at(0.0),
    );
    faded.existence_logit = -3.0;
    let z = Assembly::from_primitives(vec![ball, bar, faded]);

    let p = Vec3::new(0.0, 0.1, 0.0);
    println!(
        "at {p:?}: training {:+.4}, hard {:+.4}",
        z.eval_field(&p, EvalMode::Training),
        z.eval_field(&p, EvalMode::Hard)
    );
    println!("live primitives: {} of {}", z.num_alive(), z.len());
    let lattice = Lattice::normalized(48);
    println!(
        "occupied cells at 48^3: {}",
        z.occupancy_grid(lattice).count()
    );
}
