//! Fit compact assemblies of analytic SuperFrustum primitives to 3D shapes.

// Negated comparisons are how validation rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod cli;
pub mod config;
pub mod dual;
pub mod error;
pub mod field;
pub mod metrics;
pub mod msd;
pub mod optimize;
pub mod resfit;
pub mod seed;
pub mod superfrustum;

pub use error::{Error, Result};

/// World-space 3D vector.
pub type Vec3 = nalgebra::Vector3<f64>;
