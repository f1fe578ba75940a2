//! Score an assembly against a target with every metric, as JSON and CSV.

use resfit::assembly::{Assembly, PosedPrimitive, RigidPose};
use resfit::field::{Lattice, SignedDistanceGrid};
use resfit::metrics::{evaluate, write_csv, EvalTarget, MetricsOptions};
use resfit::superfrustum::{canonical_params, CanonicalKind};

fn main() -> resfit::Result<()> {
    let opts = MetricsOptions {
        resolution: 64,
        ..MetricsOptions::default()
    };
    let target = EvalTarget::from_grid(SignedDistanceGrid::from_fn(
        Lattice::normalized(opts.resolution),
        |p| p.norm() - 0.3,
    ));
    let mut rows = Vec::new();
    for (name, kind) in [
        ("sphere", CanonicalKind::Sphere),
        ("cylinder", CanonicalKind::Cylinder),
        ("cuboid", CanonicalKind::Cuboid),
    ] {
        let z = Assembly::from_primitives(vec![PosedPrimitive::new(
            canonical_params(kind, [0.3; 3]),
            RigidPose::identity(),
        )]);
        let report = evaluate(&target, &z, &opts)?;
        println!("{name}: {}", report.to_json());
        rows.push((name.to_string(), report));
    }
    write_csv(std::io::stdout(), &rows)?;
    Ok(())
}
