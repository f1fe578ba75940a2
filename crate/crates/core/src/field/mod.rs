//! Voxel and mesh infrastructure: ingestion, voxelization, distance
//! transforms, connected components, surface extraction, curvature and
//! supervision-point sampling.

pub mod bvh;
pub mod components;
pub mod curvature;
pub mod edt;
pub mod grid;
pub mod io;
pub mod kdtree;
pub mod mesh;
pub mod sampling;
pub mod surface;
pub mod voxelize;

pub use components::{connected_components, Components};
pub use curvature::estimate_curvature;
pub use edt::{distance_transform, DistanceFlag};
pub use grid::{BinaryGrid, Connectivity, Lattice, SignedDistanceGrid};
pub use mesh::{normalize_mesh, NormalizeTransform, TriangleMesh};
pub use sampling::{sample_points, PointSet, SamplePoint};
pub use surface::{extract_grid_surface, extract_surface, ScalarField};
pub use voxelize::{voxelize, voxelize_with, SignMethod, VoxelizeOptions};
