//! Evaluate SuperFrustum distances and gradients, and recognise canonical solids.

use resfit::superfrustum::{
    canonical_params, classify_canonical, sdf, sdf_with_grad, CanonicalKind, SuperFrustumParams,
};
use resfit::Vec3;

fn main() -> resfit::Result<()> {
    let p = Vec3::new(0.1, 0.2, 0.45);
    for kind in [
        CanonicalKind::Cuboid,
        CanonicalKind::Cylinder,
        CanonicalKind::Cone,
        CanonicalKind::Sphere,
    ] {
        let theta = canonical_params(kind, [0.2, 0.2, 0.3]);
        println!(
            "{kind:?}: f(p) = {:+.4}, recognised as {:?}",
            sdf(&p, &theta),
            classify_canonical(&theta)
        );
    }

    // A tapered, bent, rounded hollow shape.
    let theta = SuperFrustumParams {
        sx: 0.2,
        sy: 0.12,
        sz: 0.3,
        r: 0.6,
        d: 0.02,
        t: 0.4,
        b: 0.2,
        o: 0.03,
    };
    theta.validate()?;
    let g = sdf_with_grad(&p, &theta);
    println!("general shape: f(p) = {:+.4}", g.value);
    println!("  df/dp     = {:?}", g.d_point);
    println!("  df/dtheta = {:?}", g.d_params);
    Ok(())
}
