//! Normalize a mesh, voxelize it into a signed distance grid and mesh it back.
//! Pass an OBJ or STL path to use your own shape.

use std::path::PathBuf;

use resfit::field::io::{read_mesh, write_grid, write_obj};
use resfit::field::mesh::shapes;
use resfit::field::{extract_grid_surface, normalize_mesh, voxelize};
use resfit::Vec3;

fn main() -> resfit::Result<()> {
    let mesh = match std::env::args().nth(1) {
        Some(path) => read_mesh(&PathBuf::from(path))?,
        None => shapes::icosphere(1.0, 3).merged(&shapes::subdivided_box(
            Vec3::new(0.5, -0.3, -0.3),
            Vec3::new(2.0, 0.3, 0.3),
            4,
        )),
    };
    let (normalized, transform) = normalize_mesh(&mesh)?;
    println!(
        "{} triangles, watertight: {}, transform {transform:?}",
        mesh.triangles.len(),
        mesh.is_watertight()
    );

    let grid = voxelize(&normalized, 64)?;
    println!(
        "64^3 grid: {} inside cells, min distance {:.4}",
        grid.inside().count(),
        grid.min_value()
    );

    let out = std::env::temp_dir();
    write_grid(&grid, &out.join("voxelized.grid"))?;
    write_obj(
        &extract_grid_surface(&grid, 0.0),
        &out.join("voxelized.obj"),
    )?;
    println!("wrote {}", out.join("voxelized.{grid,obj}").display());
    Ok(())
}
