//! Mesh a saved assembly, at the surface and slightly eroded.

use resfit::assembly::{Assembly, PosedPrimitive, RigidPose};
use resfit::cli::assembly_mesh;
use resfit::field::io::write_obj;
use resfit::superfrustum::SuperFrustumParams;
use resfit::Vec3;

fn main() -> resfit::Result<()> {
    let path = std::env::temp_dir().join("export_assembly.json");
    let cup = SuperFrustumParams {
        sx: 0.25,
        sy: 0.25,
        sz: 0.3,
        r: 1.0,
        d: 0.01,
        t: 0.3,
        b: 0.0,
        o: 0.02,
    };
    let handle = SuperFrustumParams {
        sx: 0.12,
        sy: 0.03,
        sz: 0.12,
        r: 0.7,
        d: 0.01,
        t: 0.0,
        b: 0.0,
        o: 0.0,
    };
    let side = RigidPose {
        translation: Vec3::new(0.3, 0.0, 0.0),
        ..RigidPose::identity()
    };
    Assembly::from_primitives(vec![
        PosedPrimitive::new(cup, RigidPose::identity()),
        PosedPrimitive::new(handle, side),
    ])
    .save(&path)?;

    let z = Assembly::load(&path)?;
    for (iso, name) in [(0.0, "export_surface.obj"), (-0.005, "export_eroded.obj")] {
        let mesh = assembly_mesh(&z, 96, iso)?;
        let out = std::env::temp_dir().join(name);
        write_obj(&mesh, &out)?;
        println!(
            "iso {iso:+}: {} vertices, {} triangles, volume {:.4} -> {}",
            mesh.vertices.len(),
            mesh.triangles.len(),
            mesh.volume(),
            out.display()
        );
    }
    Ok(())
}
