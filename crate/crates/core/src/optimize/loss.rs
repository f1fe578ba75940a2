//! Training losses and their gradients w.r.t. every optimization variable.

use nalgebra::Matrix3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::TrainPrim;
use crate::assembly::{rotation_matrix_grad, smooth_union_grad, DEAD_FIELD};
use crate::dual::Scalar;
use crate::field::PointSet;
use crate::superfrustum::{sdf, sdf_with_grad, SuperFrustumParams};
use crate::Vec3;

/// Points per reduction chunk; fixed so sums do not depend on thread count.
const CHUNK: usize = 256;
/// Beyond this `|β_occ x|` the logistic derivative is below 1e-15 and is dropped.
const SATURATION: f64 = 35.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_count: f64,
    pub lambda_qual: f64,
    /// Mask threshold on the field, in lattice spacings.
    pub tau_mask_spacings: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub steps: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_count: 1e-3,
            lambda_qual: 1e-2,
            tau_mask_spacings: 6.0,
            temperature: 0.5,
            learning_rate: 0.02,
            steps: 400,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> crate::Result<()> {
        let vals = [
            self.lambda_count,
            self.lambda_qual,
            self.tau_mask_spacings,
            self.learning_rate,
        ];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(self.temperature > 0.0) {
            return Err(crate::Error::Config(format!(
                "invalid loss weights {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub count: f64,
    pub qual_overlap: f64,
    pub qual_union: f64,
    pub total: f64,
    /// The mask was empty and every point was used.
    pub mask_fallback: bool,
}

impl LossBreakdown {
    fn finish(mut self, w: &LossWeights) -> Self {
        self.total = self.rec
            + w.lambda_count * self.count
            + w.lambda_qual * (self.qual_overlap + self.qual_union);
        self
    }
}

/// Existence values and their derivatives w.r.t. the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Existence {
    pub q: Vec<f64>,
    pub dq_dlogit: Vec<f64>,
}

impl Existence {
    /// Noise-free `q = sigmoid(logit)`.
    pub fn expected(logits: &[f64]) -> Self {
        let q: Vec<f64> = logits.iter().map(|l| l.sigmoid()).collect();
        let dq_dlogit = q.iter().map(|q| q * (1.0 - q)).collect();
        Self { q, dq_dlogit }
    }
}

/// Binary-concrete samples `sigmoid((logit + g₁ - g₂) / T)` with Gumbel noise.
pub fn sample_existence<R: Rng>(logits: &[f64], temperature: f64, rng: &mut R) -> Existence {
    let mut gumbel = || -(-(rng.gen_range(f64::MIN_POSITIVE..1.0)).ln()).ln();
    let q: Vec<f64> = logits
        .iter()
        .map(|l| ((l + gumbel() - gumbel()) / temperature).sigmoid())
        .collect();
    let dq_dlogit = q.iter().map(|q| q * (1.0 - q) / temperature).collect();
    Existence { q, dq_dlogit }
}

pub fn loss_count(q: &[f64]) -> f64 {
    q.iter().sum()
}

/// Per-primitive evaluation state for one loss call.
struct Prepared {
    theta: SuperFrustumParams,
    jac: Vec<[f64; 8]>,
    rot: Matrix3<f64>,
    rot_t: Matrix3<f64>,
    translation: Vec3,
    beta: f64,
    q: f64,
}

fn prepare(prims: &[TrainPrim], ex: &Existence) -> Vec<Prepared> {
    prims
        .iter()
        .zip(&ex.q)
        .map(|(p, &q)| {
            let (theta, jac) = p.params_with_jacobian();
            let rot = p.rotation();
            Prepared {
                theta,
                jac,
                rot,
                rot_t: rot.transpose(),
                translation: p.translation,
                beta: p.blend(),
                q,
            }
        })
        .collect()
}

#[derive(Clone)]
struct PrimAcc {
    d_theta: [f64; 8],
    /// `Σ (p - t) ∂L/∂localᵀ`, the gradient w.r.t. the rotation matrix.
    d_rot: Matrix3<f64>,
    d_local: Vec3,
    d_beta: f64,
    d_q: f64,
}

impl PrimAcc {
    fn zero() -> Self {
        Self {
            d_theta: [0.0; 8],
            d_rot: Matrix3::zeros(),
            d_local: Vec3::zeros(),
            d_beta: 0.0,
            d_q: 0.0,
        }
    }

    fn add(&mut self, o: &PrimAcc) {
        for j in 0..8 {
            self.d_theta[j] += o.d_theta[j];
        }
        self.d_rot += o.d_rot;
        self.d_local += o.d_local;
        self.d_beta += o.d_beta;
        self.d_q += o.d_q;
    }
}

#[derive(Clone)]
struct ChunkAcc {
    rec: f64,
    overlap: f64,
    union: f64,
    prims: Vec<PrimAcc>,
}

/// Logistic occupancy and its derivative w.r.t. the field.
#[inline]
fn occupancy(beta_occ: f64, f: f64) -> (f64, f64) {
    let o = (-beta_occ * f).sigmoid();
    let d = if (beta_occ * f).abs() > SATURATION {
        0.0
    } else {
        -beta_occ * o * (1.0 - o)
    };
    (o, d)
}

/// Training field values of every primitive at every point, `n × k`, and the
/// folded field per point.
fn forward(prep: &[Prepared], positions: &[Vec3]) -> (Vec<f64>, Vec<f64>) {
    let k = prep.len();
    let rows: Vec<(Vec<f64>, f64)> = positions
        .par_iter()
        .map(|p| {
            let g: Vec<f64> = prep
                .iter()
                .map(|pp| sdf(&(pp.rot_t * (p - pp.translation)), &pp.theta))
                .collect();
            let mut acc = f64::INFINITY;
            for (i, pp) in prep.iter().enumerate() {
                let gs = pp.q * g[i] + (1.0 - pp.q) * DEAD_FIELD;
                acc = if i == 0 {
                    gs
                } else {
                    crate::assembly::smooth_union(acc, gs, pp.beta)
                };
            }
            (g, acc)
        })
        .collect();
    let mut g = Vec::with_capacity(positions.len() * k);
    let mut f = Vec::with_capacity(positions.len());
    for (gi, fi) in rows {
        g.extend(gi);
        f.push(fi);
    }
    (g, f)
}

/// Loss value and, if requested, the gradient w.r.t. each primitive's variables
/// (in [`TrainPrim::vars`] order).
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub grads: Vec<Vec<f64>>,
}

pub fn evaluate(
    prims: &[TrainPrim],
    ex: &Existence,
    pts: &PointSet,
    beta_occ: f64,
    weights: &LossWeights,
    tau_mask: f64,
    want_grad: bool,
) -> Evaluation {
    let k = prims.len();
    let n = pts.len();
    let count = loss_count(&ex.q);
    if n == 0 || k == 0 {
        let mut loss = LossBreakdown {
            count,
            ..Default::default()
        };
        if k == 0 && n > 0 {
            // Nothing occupies space: the mask is empty and every inside point is missed.
            loss.rec = pts
                .points
                .iter()
                .map(|p| p.weight * p.target_occupancy)
                .sum::<f64>()
                / n as f64;
            loss.qual_overlap = 1.0;
            loss.mask_fallback = true;
        }
        let grads = prims
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut g = vec![0.0; p.n_vars()];
                if want_grad {
                    // Only the count term remains; the logit is the last variable.
                    *g.last_mut().unwrap() = weights.lambda_count * ex.dq_dlogit[i];
                }
                g
            })
            .collect();
        return Evaluation {
            loss: loss.finish(weights),
            grads,
        };
    }
    let prep = prepare(prims, ex);
    let positions: Vec<Vec3> = pts.points.iter().map(|p| p.position).collect();
    let (g, field) = forward(&prep, &positions);
    let in_mask: Vec<bool> = field.iter().map(|&f| f < tau_mask).collect();
    let mut n_mask = in_mask.iter().filter(|&&m| m).count();
    let fallback = n_mask == 0;
    if fallback {
        n_mask = n;
    }
    let inv_m = 1.0 / n_mask as f64;
    let inv_n = 1.0 / n as f64;
    let lq = weights.lambda_qual;

    let chunks: Vec<ChunkAcc> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = ChunkAcc {
                rec: 0.0,
                overlap: 0.0,
                union: 0.0,
                prims: vec![PrimAcc::zero(); if want_grad { k } else { 0 }],
            };
            let mut gstar = vec![0.0; k];
            let mut d_gstar = vec![0.0; k];
            let mut partials = vec![(0.0, 0.0, 0.0); k];
            for idx in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let sp = &pts.points[idx];
                let gi = &g[idx * k..(idx + 1) * k];
                for i in 0..k {
                    gstar[i] = prep[i].q * gi[i] + (1.0 - prep[i].q) * DEAD_FIELD;
                }
                let mut f = gstar[0];
                for i in 1..k {
                    let (v, da, db, dbeta) = smooth_union_grad(f, gstar[i], prep[i].beta);
                    partials[i] = (da, db, dbeta);
                    f = v;
                }
                let (ohat, dohat) = occupancy(beta_occ, f);
                let mut d_f = 0.0;
                if fallback || in_mask[idx] {
                    let e = ohat - sp.target_occupancy;
                    acc.rec += sp.weight * e * e;
                    d_f += 2.0 * sp.weight * e * dohat * inv_m;
                }
                let mut sum = 0.0;
                for &gs in gstar.iter() {
                    sum += occupancy(beta_occ, gs).0;
                }
                acc.overlap += sum.max(1.0);
                acc.union += ohat - sum.min(1.0);
                if !want_grad {
                    continue;
                }
                d_f += lq * inv_n * dohat;
                let hinge = if sum > 1.0 {
                    1.0
                } else if sum < 1.0 {
                    -1.0
                } else {
                    0.0
                };
                for i in 0..k {
                    d_gstar[i] = lq * inv_n * hinge * occupancy(beta_occ, gstar[i]).1;
                }
                // Reverse pass through the fold.
                let mut a = d_f;
                for i in (1..k).rev() {
                    let (da, db, dbeta) = partials[i];
                    d_gstar[i] += a * db;
                    acc.prims[i].d_beta += a * dbeta;
                    a *= da;
                }
                d_gstar[0] += a;
                for i in 0..k {
                    if d_gstar[i] == 0.0 {
                        continue;
                    }
                    let pp = &prep[i];
                    let pa = &mut acc.prims[i];
                    pa.d_q += d_gstar[i] * (gi[i] - DEAD_FIELD);
                    let dg = d_gstar[i] * pp.q;
                    if dg == 0.0 {
                        continue;
                    }
                    let rel = sp.position - pp.translation;
                    let sg = sdf_with_grad(&(pp.rot_t * rel), &pp.theta);
                    for j in 0..8 {
                        pa.d_theta[j] += dg * sg.d_params[j];
                    }
                    let dl = Vec3::from(sg.d_point) * dg;
                    pa.d_rot += rel * dl.transpose();
                    pa.d_local += dl;
                }
            }
            acc
        })
        .collect();

    let mut total = ChunkAcc {
        rec: 0.0,
        overlap: 0.0,
        union: 0.0,
        prims: vec![PrimAcc::zero(); if want_grad { k } else { 0 }],
    };
    for c in &chunks {
        total.rec += c.rec;
        total.overlap += c.overlap;
        total.union += c.union;
        for (t, a) in total.prims.iter_mut().zip(&c.prims) {
            t.add(a);
        }
    }
    let loss = LossBreakdown {
        rec: total.rec * inv_m,
        count,
        qual_overlap: total.overlap * inv_n,
        qual_union: total.union * inv_n,
        total: 0.0,
        mask_fallback: fallback,
    }
    .finish(weights);

    let grads = if want_grad {
        prims
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let pa = &total.prims[i];
                let pp = &prep[i];
                let mut gv = Vec::with_capacity(p.n_vars());
                for row in &pp.jac {
                    gv.push((0..8).map(|j| row[j] * pa.d_theta[j]).sum());
                }
                // local = Rᵀ(p - t) with R from the (unnormalized) quaternion.
                for dr in rotation_matrix_grad(&p.quat) {
                    gv.push(pa.d_rot.component_mul(&dr).sum());
                }
                let dt = -(pp.rot * pa.d_local);
                gv.extend(dt.iter());
                let s = p.blend_raw.sigmoid();
                gv.push(
                    pa.d_beta
                        * (crate::assembly::BLEND_MAX - crate::assembly::BLEND_MIN)
                        * s
                        * (1.0 - s),
                );
                gv.push((pa.d_q + weights.lambda_count) * ex.dq_dlogit[i]);
                gv
            })
            .collect()
    } else {
        Vec::new()
    };
    Evaluation { loss, grads }
}
