//! Mesh and grid files.
//!
//! Meshes: OBJ and STL (ASCII or binary) in, OBJ out. Grids: one JSON header
//! line followed by little-endian scalars in x-fastest order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::{Lattice, SignedDistanceGrid};
use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::Vec3;

const GRID_FORMAT: &str = "resfit-grid";
const GRID_VERSION: u32 = 1;

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => read_obj(path),
        Some("stl") => read_stl(path),
        other => Err(Error::UnsupportedFormat(format!(
            "{} (extension {other:?})",
            path.display()
        ))),
    }
}

fn parse_err(path: &Path, msg: impl ToString) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let opts = tobj::LoadOptions {
        triangulate: true,
        single_index: false,
        ..Default::default()
    };
    let (models, _) = tobj::load_obj(path, &opts).map_err(|e| parse_err(path, e))?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for m in models {
        let base = vertices.len() as u32;
        vertices.extend(
            m.mesh
                .positions
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)),
        );
        triangles.extend(
            m.mesh
                .indices
                .chunks_exact(3)
                .map(|c| [base + c[0], base + c[1], base + c[2]]),
        );
    }
    TriangleMesh::new(vertices, triangles)
}

fn read_stl(path: &Path) -> Result<TriangleMesh> {
    let mut reader = BufReader::new(File::open(path)?);
    let stl = stl_io::read_stl(&mut reader).map_err(|e| parse_err(path, e))?;
    let vertices = stl
        .vertices
        .iter()
        .map(|v| Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64))
        .collect();
    let triangles = stl
        .faces
        .iter()
        .map(|f| {
            [
                f.vertices[0] as u32,
                f.vertices[1] as u32,
                f.vertices[2] as u32,
            ]
        })
        .collect();
    TriangleMesh::new(vertices, triangles)
}

pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct GridHeader {
    format: String,
    version: u32,
    resolution: usize,
    origin: [f64; 3],
    spacing: f64,
    sign: String,
    dtype: String,
    order: String,
}

pub fn write_grid(grid: &SignedDistanceGrid, path: &Path) -> Result<()> {
    let header = GridHeader {
        format: GRID_FORMAT.into(),
        version: GRID_VERSION,
        resolution: grid.lattice.resolution,
        origin: grid.lattice.origin,
        spacing: grid.lattice.spacing,
        sign: "negative_inside".into(),
        dtype: "f64".into(),
        order: "x_fastest".into(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in &grid.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<SignedDistanceGrid> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: GridHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| parse_err(path, e))?;
    if header.format != GRID_FORMAT {
        return Err(parse_err(
            path,
            format!("unknown grid format {:?}", header.format),
        ));
    }
    if header.version != GRID_VERSION {
        return Err(Error::UnknownVersion(header.version));
    }
    if header.order != "x_fastest" {
        return Err(parse_err(
            path,
            format!("unsupported order {:?}", header.order),
        ));
    }
    let flip = match header.sign.as_str() {
        "negative_inside" => 1.0,
        "positive_inside" => -1.0,
        s => return Err(parse_err(path, format!("unknown sign convention {s:?}"))),
    };
    let lattice = Lattice::new(header.resolution, Vec3::from(header.origin), header.spacing)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let values: Vec<f64> = match header.dtype.as_str() {
        "f64" => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()) * flip)
            .collect(),
        "f32" => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64 * flip)
            .collect(),
        d => return Err(parse_err(path, format!("unsupported dtype {d:?}"))),
    };
    SignedDistanceGrid::new(lattice, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::mesh::shapes::icosphere;

    #[test]
    fn grid_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.grid");
        let l = Lattice::normalized(12);
        let g = SignedDistanceGrid::from_fn(l, |p| p.norm() - 0.3);
        write_grid(&g, &path).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(back.lattice, g.lattice);
        assert_eq!(back.values, g.values);
    }

    #[test]
    fn obj_round_trip_keeps_topology() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.obj");
        let s = icosphere(0.4, 1);
        write_obj(&s, &path).unwrap();
        let back = read_mesh(&path).unwrap();
        assert_eq!(back.triangles.len(), s.triangles.len());
        assert!(back.is_watertight());
    }

    #[test]
    fn stl_ascii_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.stl");
        let s = icosphere(0.4, 1);
        let mut text = String::from("solid t\n");
        for t in 0..s.triangles.len() {
            let n = s.face_normal(t);
            text += &format!("facet normal {} {} {}\nouter loop\n", n.x, n.y, n.z);
            for v in s.corners(t) {
                text += &format!("vertex {} {} {}\n", v.x as f32, v.y as f32, v.z as f32);
            }
            text += "endloop\nendfacet\n";
        }
        text += "endsolid t\n";
        std::fs::write(&path, text).unwrap();
        let m = read_mesh(&path).unwrap();
        assert_eq!(m.triangles.len(), s.triangles.len());
        assert!(m.is_watertight());
    }

    #[test]
    fn unknown_extension_is_rejected() {
        assert!(matches!(
            read_mesh(Path::new("x.ply")),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
