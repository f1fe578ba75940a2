use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh has no vertices or no triangles")]
    EmptyMesh,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh is not watertight ({boundary_edges} edges are not shared by exactly two triangles); enable forced winding-number signing to voxelize anyway")]
    NotWatertight { boundary_edges: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("grids are defined on different lattices")]
    LatticeMismatch,
    #[error("point sets have different sizes ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("assembly has no primitives")]
    EmptyAssembly,
    #[error("input shape has no interior volume")]
    ZeroVolume,
    #[error("optimization diverged after {restarts} learning-rate restarts")]
    Divergence { restarts: usize },
    #[error("unsupported document version {0}")]
    UnknownVersion(u32),
    #[error("malformed document at `{path}`: {msg}")]
    Schema { path: String, msg: String },
    #[error("failed to parse {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("cannot read {path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error("unsupported file format: {0}")]
    UnsupportedFormat(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
