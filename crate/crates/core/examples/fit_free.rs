//! Fit a compact free-form assembly to a mesh. Pass an OBJ or STL path to use
//! your own shape, and optionally a resolution (default 64).

use std::path::PathBuf;

use resfit::field::io::{read_mesh, write_obj};
use resfit::field::mesh::shapes;
use resfit::field::{normalize_mesh, VoxelizeOptions};
use resfit::resfit::{fit, FitConfig, Target};
use resfit::Vec3;

fn main() -> resfit::Result<()> {
    let mut args = std::env::args().skip(1);
    let mesh = match args.next() {
        Some(path) => read_mesh(&PathBuf::from(path))?,
        // A ball on a plinth.
        None => shapes::icosphere(0.6, 3)
            .transformed(1.0, Vec3::new(0.0, 0.0, 0.55))
            .merged(&shapes::subdivided_box(
                Vec3::new(-0.8, -0.8, -0.5),
                Vec3::new(0.8, 0.8, 0.0),
                4,
            )),
    };
    let resolution = args
        .next()
        .map_or(Ok(64), |s| s.parse())
        .map_err(|e| resfit::Error::InvalidParameter(format!("resolution: {e}")))?;
    let (mesh, _) = normalize_mesh(&mesh)?;
    let cfg = FitConfig {
        resolution,
        max_rounds: 4,
        ..FitConfig::default()
    };
    let target = Target::from_mesh(&mesh, &cfg, VoxelizeOptions::default())?;
    let result = fit(&target, &cfg)?;

    for r in &result.trace.rounds {
        println!(
            "round {}: {} objective {:.4}, {} primitives, {} pruned",
            r.round,
            if r.accepted { "accepted" } else { "rejected" },
            r.objective,
            r.num_prims,
            r.pruned.len()
        );
    }
    let z = result.assembly.hard();
    println!(
        "stopped: {:?}; {} primitives",
        result.trace.stop_reason,
        z.len()
    );
    let out = std::env::temp_dir();
    z.save(&out.join("fit_free.json"))?;
    write_obj(
        &resfit::cli::assembly_mesh(&z, resolution, 0.0)?,
        &out.join("fit_free.obj"),
    )?;
    println!("wrote {}", out.join("fit_free.{json,obj}").display());
    Ok(())
}
