//! Posed primitives folded into one implicit field by smooth union.

use std::path::Path;

use nalgebra::{Matrix3, UnitQuaternion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::Scalar;
use crate::error::{Error, Result};
use crate::field::{BinaryGrid, Lattice, SignedDistanceGrid};
use crate::superfrustum::{sdf, SuperFrustumParams};
use crate::Vec3;

pub const ASSEMBLY_VERSION: u32 = 1;
/// Occupancy sharpness in 1/world units; about four voxels wide at N = 128.
pub const DEFAULT_BETA_OCC: f64 = 64.0;
pub const BLEND_MIN: f64 = 1e-4;
pub const BLEND_MAX: f64 = 0.05;
pub const BLEND_INIT: f64 = 0.01;
/// Initial existence logit, q = sigmoid(2) ≈ 0.88.
pub const EXISTENCE_INIT_LOGIT: f64 = 2.0;
/// Field value of a dead primitive under existence modulation.
pub const DEAD_FIELD: f64 = 1.0;

/// Polynomial smooth minimum. Underestimates `min(a, b)` by at most `β/4`
/// and equals it once `|a - b| >= β`.
#[inline]
pub fn smooth_union(a: f64, b: f64, beta: f64) -> f64 {
    let h = (0.5 + 0.5 * (b - a) / beta).clamp(0.0, 1.0);
    b * (1.0 - h) + a * h - beta * h * (1.0 - h)
}

/// Smooth union with partial derivatives `(value, ∂a, ∂b, ∂β)`.
#[inline]
pub fn smooth_union_grad(a: f64, b: f64, beta: f64) -> (f64, f64, f64, f64) {
    let raw = 0.5 + 0.5 * (b - a) / beta;
    if raw >= 1.0 {
        return (a, 1.0, 0.0, 0.0);
    }
    if raw <= 0.0 {
        return (b, 0.0, 1.0, 0.0);
    }
    let h = raw;
    let v = b * (1.0 - h) + a * h - beta * h * (1.0 - h);
    // The terms through ∂h cancel: ∂v/∂h = a - b - β(1 - 2h) = 0.
    (v, h, 1.0 - h, -h * (1.0 - h))
}

/// Rotation (as a possibly unnormalized quaternion `[w, x, y, z]`) and translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    pub quat: [f64; 4],
    pub translation: Vec3,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            quat: [1.0, 0.0, 0.0, 0.0],
            translation: Vec3::zeros(),
        }
    }

    /// Pose whose rotation maps canonical +z onto `axis`.
    pub fn aligning_z(axis: &Vec3, translation: Vec3) -> Self {
        let a = axis.normalize();
        let q = UnitQuaternion::rotation_between(&Vec3::z(), &a).unwrap_or_else(|| {
            UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI)
        });
        Self {
            quat: [q.w, q.i, q.j, q.k],
            translation,
        }
    }

    pub fn from_rotation(q: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            quat: [q.w, q.i, q.j, q.k],
            translation,
        }
    }

    pub fn quat_norm(&self) -> f64 {
        self.quat.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.quat_norm();
        if n > 0.0 && n.is_finite() {
            for v in &mut self.quat {
                *v /= n;
            }
        } else {
            self.quat = [1.0, 0.0, 0.0, 0.0];
        }
    }

    /// Rotation matrix of `q / |q|`.
    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(&self.quat)
    }

    /// `Rᵀ (p - t)`.
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.rotation().transpose() * (p - self.translation)
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.rotation() * local + self.translation
    }
}

/// Homogeneous quaternion-to-matrix formula; valid for any nonzero `q`.
pub fn rotation_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    let n2 = w * w + x * x + y * y + z * z;
    let s = 1.0 / n2;
    Matrix3::new(
        (w * w + x * x - y * y - z * z) * s,
        2.0 * (x * y - w * z) * s,
        2.0 * (x * z + w * y) * s,
        2.0 * (x * y + w * z) * s,
        (w * w - x * x + y * y - z * z) * s,
        2.0 * (y * z - w * x) * s,
        2.0 * (x * z - w * y) * s,
        2.0 * (y * z + w * x) * s,
        (w * w - x * x - y * y + z * z) * s,
    )
}

/// Derivatives of [`rotation_matrix`] w.r.t. `w, x, y, z`.
pub fn rotation_matrix_grad(q: &[f64; 4]) -> [Matrix3<f64>; 4] {
    let [w, x, y, z] = *q;
    let n2 = w * w + x * x + y * y + z * z;
    // Unnormalized numerator M(q) with R = M / n2.
    let m = rotation_matrix(q) * n2;
    let dm = [
        Matrix3::new(
            2.0 * w,
            -2.0 * z,
            2.0 * y,
            2.0 * z,
            2.0 * w,
            -2.0 * x,
            -2.0 * y,
            2.0 * x,
            2.0 * w,
        ),
        Matrix3::new(
            2.0 * x,
            2.0 * y,
            2.0 * z,
            2.0 * y,
            -2.0 * x,
            -2.0 * w,
            2.0 * z,
            2.0 * w,
            -2.0 * x,
        ),
        Matrix3::new(
            -2.0 * y,
            2.0 * x,
            2.0 * w,
            2.0 * x,
            2.0 * y,
            2.0 * z,
            -2.0 * w,
            2.0 * z,
            -2.0 * y,
        ),
        Matrix3::new(
            -2.0 * z,
            -2.0 * w,
            2.0 * x,
            2.0 * w,
            -2.0 * z,
            2.0 * y,
            2.0 * x,
            2.0 * y,
            2.0 * z,
        ),
    ];
    let comps = [w, x, y, z];
    std::array::from_fn(|j| (dm[j] * n2 - m * (2.0 * comps[j])) / (n2 * n2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosedPrimitive {
    pub params: SuperFrustumParams,
    pub pose: RigidPose,
    /// Smooth-union width used when this primitive joins the fold.
    pub blend: f64,
    pub existence_logit: f64,
}

impl PosedPrimitive {
    pub fn new(params: SuperFrustumParams, pose: RigidPose) -> Self {
        Self {
            params,
            pose,
            blend: BLEND_INIT,
            existence_logit: EXISTENCE_INIT_LOGIT,
        }
    }

    /// Existence probability `q = sigmoid(logit)`.
    pub fn existence(&self) -> f64 {
        self.existence_logit.sigmoid()
    }

    pub fn is_alive(&self) -> bool {
        self.existence() >= 0.5
    }

    /// `g(p) = f(Rᵀ(p - t); θ)`.
    pub fn sdf(&self, p: &Vec3) -> f64 {
        sdf(&self.pose.to_local(p), &self.params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// Soft existence modulation `q g + (1 - q)`.
    Training,
    /// Primitives with `q < 0.5` are removed, the rest enter unmodulated.
    Hard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assembly {
    pub primitives: Vec<PosedPrimitive>,
    pub beta_occ: f64,
}

impl Default for Assembly {
    fn default() -> Self {
        Self::new()
    }
}

impl Assembly {
    pub fn new() -> Self {
        Self {
            primitives: Vec::new(),
            beta_occ: DEFAULT_BETA_OCC,
        }
    }

    pub fn from_primitives(primitives: Vec<PosedPrimitive>) -> Self {
        Self {
            primitives,
            beta_occ: DEFAULT_BETA_OCC,
        }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Program length `|z|`: primitives with `q >= 0.5`.
    pub fn num_alive(&self) -> usize {
        self.primitives.iter().filter(|p| p.is_alive()).count()
    }

    /// The live primitives only, in order.
    pub fn hard(&self) -> Assembly {
        Assembly {
            primitives: self
                .primitives
                .iter()
                .filter(|p| p.is_alive())
                .copied()
                .collect(),
            beta_occ: self.beta_occ,
        }
    }

    pub fn without(&self, index: usize) -> Assembly {
        let mut out = self.clone();
        out.primitives.remove(index);
        out
    }

    pub fn compile(&self, mode: EvalMode) -> CompiledAssembly {
        CompiledAssembly::new(self, mode)
    }

    /// Field value; `+∞` for an empty (or fully dead, in hard mode) assembly.
    pub fn eval_field(&self, p: &Vec3, mode: EvalMode) -> f64 {
        self.compile(mode).field(p)
    }

    /// Field with explicit existence values (e.g. Gumbel samples).
    pub fn eval_field_with_existence(&self, p: &Vec3, q: &[f64]) -> f64 {
        let mut acc: Option<f64> = None;
        for (prim, &qi) in self.primitives.iter().zip(q) {
            let g = qi * prim.sdf(p) + (1.0 - qi) * DEAD_FIELD;
            acc = Some(match acc {
                None => g,
                Some(f) => smooth_union(f, g, prim.blend),
            });
        }
        acc.unwrap_or(f64::INFINITY)
    }

    /// Soft occupancy `σ(-β_occ F)`.
    pub fn occupancy(&self, p: &Vec3, mode: EvalMode) -> f64 {
        (-self.beta_occ * self.eval_field(p, mode)).sigmoid()
    }

    pub fn field_grid(&self, lattice: Lattice, mode: EvalMode) -> Vec<f64> {
        let c = self.compile(mode);
        (0..lattice.len())
            .into_par_iter()
            .map(|i| c.field(&lattice.position_of(i)))
            .collect()
    }

    /// Field sampled on a lattice; infinite values are clamped to the lattice
    /// diagonal so the result is a valid grid.
    pub fn to_grid(&self, lattice: Lattice, mode: EvalMode) -> SignedDistanceGrid {
        let cap = lattice.diagonal();
        let values = self
            .field_grid(lattice, mode)
            .into_iter()
            .map(|v| v.min(cap))
            .collect();
        SignedDistanceGrid { lattice, values }
    }

    /// Cells with hard-mode field `<= 0`.
    pub fn occupancy_grid(&self, lattice: Lattice) -> BinaryGrid {
        let v = self.field_grid(lattice, EvalMode::Hard);
        BinaryGrid {
            lattice,
            bits: v.into_iter().map(|f| f <= 0.0).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&AssemblyDoc::from(self)).expect("assembly serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: AssemblyDoc = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Read-only evaluation form: rotations precomputed, dead primitives
/// dropped (hard mode) or their existence cached (training mode).
#[derive(Clone, Debug)]
pub struct CompiledAssembly {
    pub items: Vec<CompiledPrimitive>,
    pub beta_occ: f64,
    pub mode: EvalMode,
}

#[derive(Clone, Copy, Debug)]
pub struct CompiledPrimitive {
    /// Index in the source assembly.
    pub source: usize,
    pub rot_t: Matrix3<f64>,
    pub translation: Vec3,
    pub params: SuperFrustumParams,
    pub blend: f64,
    pub q: f64,
}

impl CompiledPrimitive {
    #[inline]
    pub fn local(&self, p: &Vec3) -> Vec3 {
        self.rot_t * (p - self.translation)
    }

    #[inline]
    pub fn sdf(&self, p: &Vec3) -> f64 {
        sdf(&self.local(p), &self.params)
    }
}

impl CompiledAssembly {
    pub fn new(z: &Assembly, mode: EvalMode) -> Self {
        let items = z
            .primitives
            .iter()
            .enumerate()
            .filter(|(_, p)| mode == EvalMode::Training || p.is_alive())
            .map(|(i, p)| CompiledPrimitive {
                source: i,
                rot_t: p.pose.rotation().transpose(),
                translation: p.pose.translation,
                params: p.params,
                blend: p.blend,
                q: match mode {
                    EvalMode::Training => p.existence(),
                    EvalMode::Hard => 1.0,
                },
            })
            .collect();
        Self {
            items,
            beta_occ: z.beta_occ,
            mode,
        }
    }

    #[inline]
    pub fn field(&self, p: &Vec3) -> f64 {
        let mut acc = f64::INFINITY;
        for (k, it) in self.items.iter().enumerate() {
            let g = it.sdf(p);
            let g = if self.mode == EvalMode::Training {
                it.q * g + (1.0 - it.q) * DEAD_FIELD
            } else {
                g
            };
            acc = if k == 0 {
                g
            } else {
                smooth_union(acc, g, it.blend)
            };
        }
        acc
    }
}

// Serialized form.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssemblyDoc {
    version: u32,
    beta_occ: f64,
    primitives: Vec<PrimitiveDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrimitiveDoc {
    params: SuperFrustumParams,
    pose: PoseDoc,
    blend: f64,
    existence: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    quat: [f64; 4],
    t: [f64; 3],
}

impl From<&Assembly> for AssemblyDoc {
    fn from(z: &Assembly) -> Self {
        Self {
            version: ASSEMBLY_VERSION,
            beta_occ: z.beta_occ,
            primitives: z
                .primitives
                .iter()
                .map(|p| PrimitiveDoc {
                    params: p.params,
                    pose: PoseDoc {
                        quat: p.pose.quat,
                        t: p.pose.translation.into(),
                    },
                    blend: p.blend,
                    existence: p.existence_logit,
                })
                .collect(),
        }
    }
}

impl TryFrom<AssemblyDoc> for Assembly {
    type Error = Error;

    fn try_from(doc: AssemblyDoc) -> Result<Self> {
        if doc.version != ASSEMBLY_VERSION {
            return Err(Error::UnknownVersion(doc.version));
        }
        if !(doc.beta_occ > 0.0 && doc.beta_occ.is_finite()) {
            return Err(Error::Schema {
                path: "beta_occ".into(),
                msg: "must be positive".into(),
            });
        }
        let mut primitives = Vec::with_capacity(doc.primitives.len());
        for (i, p) in doc.primitives.into_iter().enumerate() {
            let at = |f: &str| format!("primitives[{i}].{f}");
            p.params.validate().map_err(|e| Error::Schema {
                path: at("params"),
                msg: e.to_string(),
            })?;
            if !(p.blend > 0.0 && p.blend.is_finite()) {
                return Err(Error::Schema {
                    path: at("blend"),
                    msg: "must be positive".into(),
                });
            }
            if !p.existence.is_finite() {
                return Err(Error::Schema {
                    path: at("existence"),
                    msg: "must be finite".into(),
                });
            }
            let pose = RigidPose {
                quat: p.pose.quat,
                translation: Vec3::from(p.pose.t),
            };
            if !(pose.quat_norm() > 0.0) || !pose.quat_norm().is_finite() {
                return Err(Error::Schema {
                    path: at("pose.quat"),
                    msg: "must be a nonzero quaternion".into(),
                });
            }
            primitives.push(PosedPrimitive {
                params: p.params,
                pose,
                blend: p.blend,
                existence_logit: p.existence,
            });
        }
        Ok(Assembly {
            primitives,
            beta_occ: doc.beta_occ,
        })
    }
}
