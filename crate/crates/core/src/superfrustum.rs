//! The SuperFrustum primitive.
//!
//! Eight scalars describe a solid centered at the origin with its axis along
//! +z: half-extents `(sx, sy, sz)`, profile roundness `r`, dilation `d`, taper
//! `t`, bulge `b` and onion thickness `o`.
//!
//! The distance is built in three stages. A rounded rectangle in the xy plane
//! gives the profile distance `prof`; lifting it to `u = prof + min(sx, sy)`
//! turns the solid into a 2D region in the `(u, z)` half plane bounded by the
//! bottom cap, the (tapered) top cap and a lateral side that is a straight
//! segment or a circular arc. The exact 2D distance to that region is then
//! dilated and optionally hollowed.

use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::Vec3;

/// Half-extent used for the sphere degeneracy (`s = ε`, `d = radius`).
pub const SPHERE_EPS: f64 = 1e-7;
/// Default shell thickness of the onioned kinds, relative to their radius.
pub const SHELL_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperFrustumParams {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub r: f64,
    pub d: f64,
    pub t: f64,
    pub b: f64,
    pub o: f64,
}

impl SuperFrustumParams {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.sx, self.sy, self.sz, self.r, self.d, self.t, self.b, self.o,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            sx: a[0],
            sy: a[1],
            sz: a[2],
            r: a[3],
            d: a[4],
            t: a[5],
            b: a[6],
            o: a[7],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("superfrustum parameters"));
        }
        let bad = |what: &str| {
            Err(Error::InvalidParameter(format!(
                "{what} out of range in {self:?}"
            )))
        };
        if !(self.sx > 0.0 && self.sy > 0.0 && self.sz > 0.0) {
            return bad("half-extent");
        }
        if !(0.0..=1.0).contains(&self.r) {
            return bad("roundness");
        }
        if self.d < 0.0 || self.o < 0.0 {
            return bad("dilation/onion");
        }
        if !(self.t > -1.0 && self.t <= 1.0) {
            return bad("taper");
        }
        if !(-1.0..=1.0).contains(&self.b) {
            return bad("bulge");
        }
        Ok(())
    }

    /// Radius of a ball around the origin that contains the solid.
    pub fn bounding_radius(&self) -> f64 {
        let lateral = self.sx.max(self.sy) * (1.0 + self.t.abs()) + self.b.abs() * self.sz;
        (lateral * lateral + self.sz * self.sz).sqrt() + self.d + self.o
    }
}

/// Signed distance of the primitive, generic over plain and dual numbers.
pub fn sdf_generic<S: Scalar>(p: &[S; 3], th: &[S; 8]) -> S {
    let [x, y, z] = *p;
    let [sx, sy, sz, r, d, t, b, o] = *th;
    let zero = S::cst(0.0);

    // Rounded-rectangle profile.
    let w0 = sx.min(sy);
    let rc = r * w0;
    let ax = x.abs() - sx + rc;
    let ay = y.abs() - sy + rc;
    let outside = match (ax.value() > 0.0, ay.value() > 0.0) {
        (true, true) => ax.hypot(ay),
        (true, false) => ax,
        (false, true) => ay,
        (false, false) => zero,
    };
    let prof = outside + ax.max(ay).min(zero) - rc;
    let u = prof + w0;

    let f = side_sdf(u, z, w0, sz, t, b) - d;
    if o.value() > 0.0 {
        f.abs() - o
    } else {
        f
    }
}

/// Signed distance in the `(u, z)` half plane to the silhouette region.
fn side_sdf<S: Scalar>(u: S, z: S, w0: S, sz: S, t: S, b: S) -> S {
    let zero = S::cst(0.0);
    let wt = w0 * (-t + 1.0);

    let d_bottom = (u - w0).max(zero).hypot(z + sz);
    let d_top = (u - wt).max(zero).hypot(z - sz);

    // Chord frame of the lateral side, from A = (w0, -sz) to B = (wt, sz).
    let (du, dz) = (wt - w0, sz * 2.0);
    let len = du.hypot(dz);
    let c = len * 0.5;
    let (eu, ez) = (du / len, dz / len);
    let (nu, nz) = (ez, -eu);
    let (mu, mz) = ((w0 + wt) * 0.5, zero);
    let (qu, qz) = (u - mu, z - mz);
    let px = qu * eu + qz * ez;
    let py = qu * nu + qz * nz;

    // Sagitta, shrunk on tilted chords so the arc stays between the caps.
    let sin_a = (w0 * t).abs() / len;
    let h = b * sz / (sin_a + 1.0);
    let denom = c * c + h * h;
    let k = h * 2.0 / denom;
    let m = (h * h - c * c) / denom;

    let kpx = k * px;
    let kpy_m = k * py - m;
    let rho = kpx.hypot(kpy_m);
    let in_wedge = kpy_m.value() > 0.0 && px.abs().value() <= (c * rho).value();
    let d_side = if in_wedge {
        let g_out = (k * (px * px + py * py - c * c) - py * m * 2.0) / (rho + 1.0);
        g_out.abs()
    } else {
        let da = (u - w0).hypot(z + sz);
        let db = (u - wt).hypot(z - sz);
        da.min(db)
    };

    let lateral_inside = if px.abs().value() <= c.value() {
        let kx = k * px;
        let kc = k * c;
        let arc = k * (c * c - px * px) / ((-(kx * kx) + 1.0).sqrt() + (-(kc * kc) + 1.0).sqrt());
        py.value() <= arc.value()
    } else {
        py.value() <= 0.0
    };
    let inside = z.abs().value() <= sz.value() && lateral_inside;
    let dist = d_bottom.min(d_top).min(d_side);
    if inside {
        -dist
    } else {
        dist
    }
}

/// Plain signed distance without input validation.
#[inline]
pub fn sdf(p: &Vec3, theta: &SuperFrustumParams) -> f64 {
    sdf_generic(&[p.x, p.y, p.z], &theta.to_array())
}

pub fn eval_sdf(p: &Vec3, theta: &SuperFrustumParams) -> Result<f64> {
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        return Err(Error::NonFinite("query point"));
    }
    theta.validate()?;
    Ok(sdf(p, theta))
}

/// Distance with its gradient w.r.t. the 8 shape parameters (in
/// [`SuperFrustumParams::to_array`] order) and the 3 point coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfGrad {
    pub value: f64,
    pub d_params: [f64; 8],
    pub d_point: [f64; 3],
}

pub fn sdf_with_grad(p: &Vec3, theta: &SuperFrustumParams) -> SdfGrad {
    let th = theta.to_array();
    let thd: [Dual<11>; 8] = std::array::from_fn(|i| Dual::var(th[i], i));
    let pd: [Dual<11>; 3] = std::array::from_fn(|i| Dual::var(p[i], 8 + i));
    let f = sdf_generic(&pd, &thd);
    let mut d_params = [0.0; 8];
    d_params.copy_from_slice(&f.d[..8]);
    SdfGrad {
        value: f.v,
        d_params,
        d_point: [f.d[8], f.d[9], f.d[10]],
    }
}

pub fn eval_sdf_with_grad(p: &Vec3, theta: &SuperFrustumParams) -> Result<SdfGrad> {
    eval_sdf(p, theta)?;
    Ok(sdf_with_grad(p, theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalKind {
    Cuboid,
    Cylinder,
    Cone,
    Sphere,
    Tube,
    Shell,
}

impl CanonicalKind {
    pub const ALL: [CanonicalKind; 6] = [
        CanonicalKind::Cuboid,
        CanonicalKind::Cylinder,
        CanonicalKind::Cone,
        CanonicalKind::Sphere,
        CanonicalKind::Tube,
        CanonicalKind::Shell,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_onion(self) -> bool {
        matches!(self, CanonicalKind::Tube | CanonicalKind::Shell)
    }
}

/// Template parameters of `kind` for free half-extents `s`.
pub fn template_generic<S: Scalar>(kind: CanonicalKind, s: &[S; 3]) -> [S; 8] {
    let zero = S::cst(0.0);
    let one = S::cst(1.0);
    let eps = S::cst(SPHERE_EPS);
    let radius = (s[0] + s[1]) * 0.5;
    let ball = (s[0] + s[1] + s[2]) / 3.0;
    match kind {
        CanonicalKind::Cuboid => [s[0], s[1], s[2], zero, zero, zero, zero, zero],
        CanonicalKind::Cylinder => [radius, radius, s[2], one, zero, zero, zero, zero],
        CanonicalKind::Cone => [radius, radius, s[2], one, zero, one, zero, zero],
        CanonicalKind::Sphere => [eps, eps, eps, one, ball, zero, zero, zero],
        CanonicalKind::Tube => [
            radius,
            radius,
            s[2],
            one,
            zero,
            zero,
            zero,
            radius * SHELL_FRACTION,
        ],
        CanonicalKind::Shell => [eps, eps, eps, one, ball, zero, zero, ball * SHELL_FRACTION],
    }
}

/// Canonical template from size hints. Cylinders, cones and tubes use the
/// mean of the first two hints as radius; spheres and shells use the mean of
/// all three.
pub fn canonical_params(kind: CanonicalKind, hints: [f64; 3]) -> SuperFrustumParams {
    SuperFrustumParams::from_array(template_generic(kind, &hints))
}

/// The kind whose template `theta` matches exactly, if any.
pub fn classify_canonical(theta: &SuperFrustumParams) -> Option<CanonicalKind> {
    let th = theta;
    CanonicalKind::ALL.into_iter().find(|&kind| {
        let hints = match kind {
            CanonicalKind::Sphere | CanonicalKind::Shell => [th.d, th.d, th.d],
            _ => [th.sx, th.sy, th.sz],
        };
        canonical_params(kind, hints) == *th
    })
}

/// Softmax logits over the canonical kinds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolidWeights {
    pub logits: [f64; 6],
}

impl SolidWeights {
    pub fn uniform() -> Self {
        Self { logits: [0.0; 6] }
    }

    pub fn one_hot(kind: CanonicalKind) -> Self {
        let mut logits = [f64::NEG_INFINITY; 6];
        logits[kind.index()] = 0.0;
        Self { logits }
    }

    pub fn weights(&self) -> [f64; 6] {
        softmax(&self.logits, &[true; 6])
    }

    /// Kind with the largest logit; ties keep the earlier kind.
    pub fn argmax(&self) -> CanonicalKind {
        let mut best = 0;
        for i in 1..6 {
            if self.logits[i] > self.logits[best] {
                best = i;
            }
        }
        CanonicalKind::ALL[best]
    }

    pub fn snapped(&self) -> Self {
        Self::one_hot(self.argmax())
    }
}

/// Softmax restricted to `mask`; masked-out entries get weight exactly 0.
pub fn softmax<S: Scalar>(logits: &[S; 6], mask: &[bool; 6]) -> [S; 6] {
    let max = (0..6)
        .filter(|&i| mask[i])
        .map(|i| logits[i].value())
        .fold(f64::NEG_INFINITY, f64::max);
    let e: [S; 6] = std::array::from_fn(|i| {
        if mask[i] && logits[i].value() > f64::NEG_INFINITY {
            (logits[i] - max).exp()
        } else {
            S::cst(0.0)
        }
    });
    let mut sum = S::cst(0.0);
    for v in e {
        sum = sum + v;
    }
    std::array::from_fn(|i| e[i] / sum)
}

/// Barycentric blend of the canonical templates.
pub fn blend_generic<S: Scalar>(w: &[S; 6], sizes: &[S; 3]) -> [S; 8] {
    let mut out = [S::cst(0.0); 8];
    for kind in CanonicalKind::ALL {
        let wk = w[kind.index()];
        if wk.value() == 0.0 {
            // Skipping keeps one-hot blends bit-exact.
            continue;
        }
        let tpl = template_generic(kind, sizes);
        for j in 0..8 {
            out[j] = out[j] + wk * tpl[j];
        }
    }
    out
}

pub fn blend_solid(w: &SolidWeights, sizes: [f64; 3]) -> SuperFrustumParams {
    SuperFrustumParams::from_array(blend_generic(&w.weights(), &sizes))
}


#[cfg(test)]
mod tests {
    use super::oracles::*;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(a: [f64; 8]) -> SuperFrustumParams {
        SuperFrustumParams::from_array(a)
    }

    fn random_point(rng: &mut impl Rng, r: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-r..r),
            rng.gen_range(-r..r),
            rng.gen_range(-r..r),
        )
    }

    fn random_params(rng: &mut impl Rng) -> SuperFrustumParams {
        params([
            rng.gen_range(0.05..0.4),
            rng.gen_range(0.05..0.4),
            rng.gen_range(0.05..0.4),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..0.1),
            rng.gen_range(-0.9..1.0),
            rng.gen_range(-1.0..1.0),
            if rng.gen_bool(0.3) {
                rng.gen_range(0.0..0.05)
            } else {
                0.0
            },
        ])
    }

    #[test]
    fn cube_center() {
        let th = params([0.3, 0.3, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((eval_sdf(&Vec3::zeros(), &th).unwrap() + 0.3).abs() < 1e-15);
    }

    #[test]
    fn pure_dilation_sphere() {
        let e = 1e-6;
        let th = params([e, e, e, 1.0, 0.5, 0.0, 0.0, 0.0]);
        assert!((eval_sdf(&Vec3::new(1.0, 0.0, 0.0), &th).unwrap() - 0.5).abs() < 2e-6);
    }

    #[test]
    fn cone_matches_capped_cone() {
        let th = params([0.2, 0.2, 0.5, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = random_point(&mut rng, 0.8);
            let want = sd_capped_cone(&p, 0.5, 0.2, 0.0);
            assert!((sdf(&p, &th) - want).abs() < 1e-6, "at {p:?}");
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let th = params([0.3, 0.3, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(eval_sdf(&Vec3::new(f64::NAN, 0.0, 0.0), &th).is_err());
        let bad = params([0.3, f64::INFINITY, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(eval_sdf(&Vec3::zeros(), &bad).is_err());
    }

    #[test]
    fn gradient_examples() {
        let cube = params([0.3, 0.3, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let g = sdf_with_grad(&Vec3::new(0.5, 0.0, 0.0), &cube);
        assert!((g.d_point[0] - 1.0).abs() < 1e-12);
        let sphere = canonical_params(CanonicalKind::Sphere, [0.25; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = random_point(&mut rng, 1.0);
            if p.norm() < 1e-3 {
                continue;
            }
            assert_eq!(sdf_with_grad(&p, &sphere).d_params[4], -1.0);
        }
    }

    /// Central finite differences in all 11 inputs.
    pub(crate) fn fd_agrees(p: &Vec3, th: &SuperFrustumParams, h: f64, tol: f64) -> bool {
        let g = sdf_with_grad(p, th);
        let base = th.to_array();
        let mut ok = true;
        for i in 0..11 {
            // The onion switches on discontinuously at o = 0.
            if i == 7 && th.o == 0.0 {
                continue;
            }
            let (mut a, mut b) = (base, base);
            let (mut pa, mut pb) = (*p, *p);
            if i < 8 {
                a[i] += h;
                b[i] -= h;
            } else {
                pa[i - 8] += h;
                pb[i - 8] -= h;
            }
            let fd = (sdf(&pa, &params(a)) - sdf(&pb, &params(b))) / (2.0 * h);
            let an = if i < 8 {
                g.d_params[i]
            } else {
                g.d_point[i - 8]
            };
            let scale = an.abs().max(fd.abs()).max(1e-2);
            ok &= (an - fd).abs() / scale <= tol;
        }
        ok
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut good = 0;
        for _ in 0..1000 {
            let th = random_params(&mut rng);
            let p = random_point(&mut rng, 0.6);
            good += fd_agrees(&p, &th, 1e-4, 1e-3) as usize;
        }
        assert!(good >= 990, "{good}/1000");
    }

    #[test]
    fn degenerate_templates_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        type Oracle = Box<dyn Fn(&Vec3) -> f64>;
        let cases: Vec<(SuperFrustumParams, Oracle)> = vec![
            (
                canonical_params(CanonicalKind::Cuboid, [0.1, 0.2, 0.3]),
                Box::new(|p| sd_box(p, &Vec3::new(0.1, 0.2, 0.3))),
            ),
            (
                canonical_params(CanonicalKind::Cylinder, [0.2, 0.2, 0.35]),
                Box::new(|p| sd_cylinder(p, 0.2, 0.35)),
            ),
            (
                canonical_params(CanonicalKind::Cone, [0.25, 0.25, 0.3]),
                Box::new(|p| sd_capped_cone(p, 0.3, 0.25, 0.0)),
            ),
            (
                canonical_params(CanonicalKind::Sphere, [0.3; 3]),
                Box::new(|p| sd_sphere(p, 0.3)),
            ),
        ];
        for (th, oracle) in &cases {
            let worst = (0..10_000)
                .map(|_| {
                    let p = random_point(&mut rng, 0.7);
                    (sdf(&p, th) - oracle(&p)).abs()
                })
                .fold(0.0, f64::max);
            assert!(worst <= 1e-6, "{th:?}: {worst}");
        }
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(
            canonical_params(CanonicalKind::Cuboid, [0.1, 0.2, 0.3]).to_array(),
            [0.1, 0.2, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        let s = canonical_params(CanonicalKind::Sphere, [0.25; 3]);
        assert_eq!(
            (s.d, s.sx, s.sy, s.sz, s.r),
            (0.25, SPHERE_EPS, SPHERE_EPS, SPHERE_EPS, 1.0)
        );
        let tube = canonical_params(CanonicalKind::Tube, [0.2, 0.2, 0.4]);
        assert!((tube.o - 0.04).abs() < 1e-15);
        // Hollow cylinder oracle: |cylinder| - o.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = random_point(&mut rng, 0.6);
            let want = sd_cylinder(&p, 0.2, 0.4).abs() - 0.04;
            assert!((sdf(&p, &tube) - want).abs() < 1e-12);
        }
        let templates: Vec<_> = CanonicalKind::ALL
            .iter()
            .map(|&k| canonical_params(k, [0.2, 0.25, 0.3]))
            .collect();
        for i in 0..6 {
            templates[i].validate().unwrap();
            for j in 0..i {
                assert_ne!(templates[i], templates[j]);
            }
        }
    }

    #[test]
    fn classification_recognizes_templates() {
        for kind in CanonicalKind::ALL {
            let th = canonical_params(kind, [0.2, 0.25, 0.3]);
            assert_eq!(classify_canonical(&th), Some(kind), "{kind:?}");
        }
        let free = params([0.2, 0.25, 0.3, 0.4, 0.0, 0.1, 0.0, 0.0]);
        assert_eq!(classify_canonical(&free), None);
    }

    #[test]
    fn blend_examples() {
        let sizes = [0.1, 0.2, 0.3];
        let cub = blend_solid(&SolidWeights::one_hot(CanonicalKind::Cuboid), sizes);
        assert_eq!(cub, canonical_params(CanonicalKind::Cuboid, sizes));
        let mut w = SolidWeights {
            logits: [f64::NEG_INFINITY; 6],
        };
        w.logits[0] = 0.0;
        w.logits[1] = 0.0;
        let mix = blend_solid(&w, sizes);
        assert!((mix.r - 0.5).abs() < 1e-15);
        assert!((mix.sx - 0.5 * (0.1 + 0.15)).abs() < 1e-15);
        let sum: f64 = SolidWeights {
            logits: [0.3, -1.0, 2.0, 0.0, 0.5, -0.2],
        }
        .weights()
        .iter()
        .sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snapped_blend_equals_canonical_primitive() {
        let w = SolidWeights {
            logits: [0.1, 2.5, -0.3, 0.7, -5.0, -5.0],
        };
        let sizes = [0.2, 0.22, 0.35];
        let snapped = blend_solid(&w.snapped(), sizes);
        let pure = canonical_params(CanonicalKind::Cylinder, sizes);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let p = random_point(&mut rng, 0.6);
            assert!((sdf(&p, &snapped) - sdf(&p, &pure)).abs() <= 1e-9);
        }
    }

    #[test]
    fn onion_is_minus_o_on_solid_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut th = random_params(&mut rng);
            th.o = 0.0;
            // Bisect along a random ray from the center to the o = 0 surface.
            let dir = random_point(&mut rng, 1.0).normalize();
            let (mut lo, mut hi) = (0.0, 2.0);
            if sdf(&Vec3::zeros(), &th) >= 0.0 {
                continue;
            }
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if sdf(&(dir * mid), &th) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let p = dir * lo;
            let mut shell = th;
            shell.o = 0.03;
            assert!((sdf(&p, &shell) + 0.03).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn lipschitz_without_bulge(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut th = random_params(&mut rng);
            th.b = 0.0;
            let p = random_point(&mut rng, 0.7);
            let q = p + random_point(&mut rng, 0.1);
            let lhs = (sdf(&p, &th) - sdf(&q, &th)).abs();
            prop_assert!(lhs <= (p - q).norm() * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn lipschitz_with_bulge(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let th = random_params(&mut rng);
            let p = random_point(&mut rng, 0.7);
            let q = p + random_point(&mut rng, 0.1);
            let lhs = (sdf(&p, &th) - sdf(&q, &th)).abs();
            prop_assert!(lhs <= 1.05 * (p - q).norm() + 1e-12);
        }

        #[test]
        fn dilation_is_monotone(seed in 0u64..10_000, dd in 1e-4f64..0.1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut th = random_params(&mut rng);
            th.o = 0.0;
            let p = random_point(&mut rng, 0.7);
            let before = sdf(&p, &th);
            th.d += dd;
            prop_assert!(sdf(&p, &th) < before);
        }
    }
}
