//! Unconstrained coordinates of a primitive and their maps to valid parameters.

use nalgebra::Matrix3;

use crate::assembly::{rotation_matrix, PosedPrimitive, RigidPose, BLEND_MAX, BLEND_MIN};
use crate::dual::{Dual, Scalar};
use crate::superfrustum::{blend_generic, softmax, CanonicalKind, SuperFrustumParams};
use crate::Vec3;

/// Seeds have `d = 0`; softplus never reaches it, so start just above.
const DILATION_RAW_FLOOR: f64 = -8.0;
const RAW_BOUND: f64 = 30.0;
/// Keeps `t` and `b` strictly inside (-1, 1).
const ATANH_BOUND: f64 = 6.0;
const LOG_SIZE_RANGE: (f64, f64) = (-9.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// `[ln sx, ln sy, ln sz, logit r, softplus⁻¹ d, atanh t, atanh b, o]`,
    /// with `o` passed through a ReLU.
    Free([f64; 8]),
    /// Log half-extents blended over the canonical templates.
    Solid {
        log_sizes: [f64; 3],
        logits: [f64; 6],
        mask: [bool; 6],
    },
}

/// Mask of the solid kinds that are not shells.
pub const SOLID_CORE_KINDS: [bool; 6] = [true, true, true, true, false, false];

/// A primitive in optimization coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainPrim {
    pub shape: Shape,
    pub quat: [f64; 4],
    pub translation: Vec3,
    pub blend_raw: f64,
    pub logit: f64,
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn softplus_inv(y: f64) -> f64 {
    if y <= 0.0 {
        DILATION_RAW_FLOOR
    } else if y > 30.0 {
        y
    } else {
        y.exp_m1().ln().max(DILATION_RAW_FLOOR)
    }
}

fn atanh_clamped(v: f64) -> f64 {
    v.clamp(-0.999_99, 0.999_99).atanh()
}

pub fn blend_from_raw(raw: f64) -> f64 {
    BLEND_MIN + (BLEND_MAX - BLEND_MIN) * raw.sigmoid()
}

pub fn blend_to_raw(beta: f64) -> f64 {
    logit((beta - BLEND_MIN) / (BLEND_MAX - BLEND_MIN))
}

impl TrainPrim {
    pub fn free(p: &PosedPrimitive) -> Self {
        let t = &p.params;
        let shape = Shape::Free([
            t.sx.max(1e-4).ln(),
            t.sy.max(1e-4).ln(),
            t.sz.max(1e-4).ln(),
            logit(t.r),
            softplus_inv(t.d),
            atanh_clamped(t.t),
            atanh_clamped(t.b),
            t.o,
        ]);
        Self::with_shape(shape, p)
    }

    /// Solid-mode coordinates: sizes from the primitive's half-extents and
    /// uniform weights over the kinds in `mask`.
    pub fn solid(p: &PosedPrimitive, mask: [bool; 6]) -> Self {
        let t = &p.params;
        let log_sizes = [
            t.sx.max(1e-4).ln(),
            t.sy.max(1e-4).ln(),
            t.sz.max(1e-4).ln(),
        ];
        Self::with_shape(
            Shape::Solid {
                log_sizes,
                logits: [0.0; 6],
                mask,
            },
            p,
        )
    }

    fn with_shape(shape: Shape, p: &PosedPrimitive) -> Self {
        Self {
            shape,
            quat: p.pose.quat,
            translation: p.pose.translation,
            blend_raw: blend_to_raw(p.blend),
            logit: p.existence_logit,
        }
    }

    pub fn n_shape_vars(&self) -> usize {
        match self.shape {
            Shape::Free(_) => 8,
            Shape::Solid { .. } => 9,
        }
    }

    /// Shape variables, then quaternion, translation, blend and existence.
    pub fn n_vars(&self) -> usize {
        self.n_shape_vars() + 9
    }

    pub fn vars(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_vars());
        match &self.shape {
            Shape::Free(raw) => v.extend_from_slice(raw),
            Shape::Solid {
                log_sizes, logits, ..
            } => {
                v.extend_from_slice(log_sizes);
                v.extend_from_slice(logits);
            }
        }
        v.extend_from_slice(&self.quat);
        v.extend(self.translation.iter());
        v.push(self.blend_raw);
        v.push(self.logit);
        v
    }

    /// Writes `v` back, clamping into the range where every map stays finite.
    pub fn set_vars(&mut self, v: &[f64]) {
        let k = self.n_shape_vars();
        match &mut self.shape {
            Shape::Free(raw) => {
                raw.copy_from_slice(&v[..8]);
                for r in raw.iter_mut().take(3) {
                    *r = r.clamp(LOG_SIZE_RANGE.0, LOG_SIZE_RANGE.1);
                }
                raw[3] = raw[3].clamp(-RAW_BOUND, RAW_BOUND);
                raw[4] = raw[4].clamp(-RAW_BOUND, RAW_BOUND);
                raw[5] = raw[5].clamp(-ATANH_BOUND, ATANH_BOUND);
                raw[6] = raw[6].clamp(-ATANH_BOUND, ATANH_BOUND);
                raw[7] = raw[7].clamp(-1.0, 1.0);
            }
            Shape::Solid {
                log_sizes,
                logits,
                mask,
            } => {
                for i in 0..3 {
                    log_sizes[i] = v[i].clamp(LOG_SIZE_RANGE.0, LOG_SIZE_RANGE.1);
                }
                for i in 0..6 {
                    if mask[i] {
                        logits[i] = v[3 + i].clamp(-RAW_BOUND, RAW_BOUND);
                    }
                }
            }
        }
        self.quat = [v[k], v[k + 1], v[k + 2], v[k + 3]];
        self.translation = Vec3::new(v[k + 4], v[k + 5], v[k + 6]);
        self.blend_raw = v[k + 7].clamp(-RAW_BOUND, RAW_BOUND);
        self.logit = v[k + 8].clamp(-RAW_BOUND, RAW_BOUND);
        self.normalize_quat();
    }

    pub fn normalize_quat(&mut self) {
        let mut pose = RigidPose {
            quat: self.quat,
            translation: self.translation,
        };
        pose.normalize();
        self.quat = pose.quat;
    }

    pub fn blend(&self) -> f64 {
        blend_from_raw(self.blend_raw)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(&self.quat)
    }

    pub fn params(&self) -> SuperFrustumParams {
        match &self.shape {
            Shape::Free(raw) => SuperFrustumParams {
                sx: raw[0].exp(),
                sy: raw[1].exp(),
                sz: raw[2].exp(),
                r: raw[3].sigmoid(),
                d: raw[4].softplus(),
                t: raw[5].tanh(),
                b: raw[6].tanh(),
                o: raw[7].max(0.0),
            },
            Shape::Solid {
                log_sizes,
                logits,
                mask,
            } => {
                let sizes = log_sizes.map(f64::exp);
                SuperFrustumParams::from_array(blend_generic(&softmax(logits, mask), &sizes))
            }
        }
    }

    /// Parameters together with `∂θ/∂shape_var`, one row per shape variable.
    pub fn params_with_jacobian(&self) -> (SuperFrustumParams, Vec<[f64; 8]>) {
        match &self.shape {
            Shape::Free(raw) => {
                let th = self.params();
                let d = [
                    th.sx,
                    th.sy,
                    th.sz,
                    th.r * (1.0 - th.r),
                    raw[4].sigmoid(),
                    1.0 - th.t * th.t,
                    1.0 - th.b * th.b,
                    if raw[7] > 0.0 { 1.0 } else { 0.0 },
                ];
                let rows = (0..8)
                    .map(|i| {
                        let mut row = [0.0; 8];
                        row[i] = d[i];
                        row
                    })
                    .collect();
                (th, rows)
            }
            Shape::Solid {
                log_sizes,
                logits,
                mask,
            } => {
                let sizes: [Dual<9>; 3] = std::array::from_fn(|i| Dual::var(log_sizes[i], i).exp());
                let lg: [Dual<9>; 6] = std::array::from_fn(|i| Dual::var(logits[i], 3 + i));
                let th = blend_generic(&softmax(&lg, mask), &sizes);
                let rows = (0..9)
                    .map(|v| std::array::from_fn(|j| th[j].d[v]))
                    .collect();
                (SuperFrustumParams::from_array(th.map(|x| x.v)), rows)
            }
        }
    }

    pub fn pose(&self) -> RigidPose {
        RigidPose {
            quat: self.quat,
            translation: self.translation,
        }
    }

    pub fn to_primitive(&self) -> PosedPrimitive {
        PosedPrimitive {
            params: self.params(),
            pose: self.pose(),
            blend: self.blend(),
            existence_logit: self.logit,
        }
    }

    /// Solid weights with every logit but the largest unmasked one removed.
    pub fn snapped(&self) -> Self {
        let mut out = *self;
        if let Shape::Solid { logits, mask, .. } = &mut out.shape {
            let kind = self.solid_kind().expect("solid shape");
            *mask = [false; 6];
            mask[kind.index()] = true;
            for (i, l) in logits.iter_mut().enumerate() {
                if i != kind.index() {
                    *l = 0.0;
                }
            }
        }
        out
    }

    /// Largest-weight kind of a solid shape; ties keep the earlier kind.
    pub fn solid_kind(&self) -> Option<CanonicalKind> {
        let Shape::Solid { logits, mask, .. } = &self.shape else {
            return None;
        };
        let mut best: Option<usize> = None;
        for i in 0..6 {
            if mask[i] && best.is_none_or(|b| logits[i] > logits[b]) {
                best = Some(i);
            }
        }
        best.map(|i| CanonicalKind::ALL[i])
    }

    /// One-hot solid primitive of `kind`, keeping sizes and pose.
    pub fn with_kind(&self, kind: CanonicalKind) -> Self {
        let mut out = *self;
        if let Shape::Solid { logits, mask, .. } = &mut out.shape {
            *logits = [0.0; 6];
            *mask = [false; 6];
            mask[kind.index()] = true;
        }
        out
    }

    pub fn is_one_hot(&self) -> bool {
        matches!(self.shape, Shape::Solid { mask, .. } if mask.iter().filter(|&&m| m).count() == 1)
    }
}
