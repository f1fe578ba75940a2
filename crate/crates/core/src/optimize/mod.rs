//! Gradient-based refinement of an assembly and greedy discrete pruning.

pub mod loss;
pub mod params;
pub mod prune;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::Assembly;
use crate::error::{Error, Result};
use crate::field::PointSet;
pub use loss::{
    evaluate, loss_count, sample_existence, Evaluation, Existence, LossBreakdown, LossWeights,
};
pub use params::{Shape, TrainPrim, SOLID_CORE_KINDS};
pub use prune::{prune, PruneReport, PruneStep};

/// Restarts allowed by the divergence guard.
pub const MAX_RESTARTS: usize = 2;
/// Divergence threshold relative to the initial loss.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// First and second moment estimates for one flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            x[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct OptimizeOptions {
    pub weights: LossWeights,
    pub beta_occ: f64,
    /// Mask threshold in world units.
    pub tau_mask: f64,
    /// Steps between noise-free evaluations for best-iterate tracking.
    pub eval_every: usize,
    /// Primitives whose variables are updated; `None` updates all.
    pub trainable: Option<Vec<bool>>,
    /// Final learning rate as a fraction of the initial one (cosine decay).
    pub final_lr_fraction: f64,
    /// Evaluate every primitive at `q = 1` with no existence noise, matching
    /// the hard-mode assembly. Logits are left untouched.
    pub hard_existence: bool,
}

impl OptimizeOptions {
    pub fn new(weights: LossWeights, beta_occ: f64, spacing: f64) -> Self {
        Self {
            weights,
            beta_occ,
            tau_mask: weights.tau_mask_spacings * spacing,
            eval_every: 10,
            trainable: None,
            final_lr_fraction: 0.1,
            hard_existence: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub prims: Vec<TrainPrim>,
    /// Noise-free loss of the returned iterate.
    pub best: LossBreakdown,
    pub initial: LossBreakdown,
    pub history: Vec<StepLog>,
    pub restarts: usize,
}

fn hard_existence(k: usize) -> Existence {
    Existence {
        q: vec![1.0; k],
        dq_dlogit: vec![0.0; k],
    }
}

/// Noise-free loss of `prims`.
pub fn expected_loss(prims: &[TrainPrim], pts: &PointSet, opts: &OptimizeOptions) -> LossBreakdown {
    let ex = if opts.hard_existence {
        hard_existence(prims.len())
    } else {
        Existence::expected(&prims.iter().map(|p| p.logit).collect::<Vec<_>>())
    };
    evaluate(
        prims,
        &ex,
        pts,
        opts.beta_occ,
        &opts.weights,
        opts.tau_mask,
        false,
    )
    .loss
}

fn flatten(prims: &[TrainPrim]) -> Vec<f64> {
    prims.iter().flat_map(|p| p.vars()).collect()
}

fn unflatten(prims: &mut [TrainPrim], x: &[f64]) {
    let mut off = 0;
    for p in prims {
        let n = p.n_vars();
        p.set_vars(&x[off..off + n]);
        off += n;
    }
}

/// Adam on the total loss with Gumbel-sampled existence at every step.
/// Returns the iterate with the lowest noise-free loss seen.
pub fn optimize<R: Rng>(
    prims: Vec<TrainPrim>,
    pts: &PointSet,
    opts: &OptimizeOptions,
    rng: &mut R,
) -> Result<OptimizeResult> {
    opts.weights.validate()?;
    let steps = opts.weights.steps;
    let initial = expected_loss(&prims, pts, opts);
    if !initial.total.is_finite() {
        return Err(Error::NonFinite("initial loss"));
    }
    let mut best = (initial, prims.clone());
    let mut history = Vec::with_capacity(steps);
    if steps == 0 || prims.is_empty() {
        return Ok(OptimizeResult {
            prims,
            best: initial,
            initial,
            history,
            restarts: 0,
        });
    }
    let trainable = opts
        .trainable
        .clone()
        .unwrap_or_else(|| vec![true; prims.len()]);
    let limit = DIVERGENCE_FACTOR * initial.total.max(1e-6);
    let mut current = prims;
    let mut x = flatten(&current);
    let mut adam = Adam::new(x.len());
    let mut lr0 = opts.weights.learning_rate;
    let mut restarts = 0;
    let mut step = 0;
    while step < steps {
        let ex = if opts.hard_existence {
            hard_existence(current.len())
        } else {
            let logits: Vec<f64> = current.iter().map(|p| p.logit).collect();
            sample_existence(&logits, opts.weights.temperature, rng)
        };
        let ev = evaluate(
            &current,
            &ex,
            pts,
            opts.beta_occ,
            &opts.weights,
            opts.tau_mask,
            true,
        );
        history.push(StepLog {
            step,
            loss: ev.loss,
        });
        let mut diverged =
            !ev.loss.total.is_finite() || ev.grads.iter().flatten().any(|g| !g.is_finite());
        if !diverged {
            let mut g = Vec::with_capacity(x.len());
            for (i, gi) in ev.grads.iter().enumerate() {
                if trainable[i] {
                    g.extend_from_slice(gi);
                } else {
                    g.extend(std::iter::repeat_n(0.0, gi.len()));
                }
            }
            let progress = step as f64 / steps as f64;
            let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            let lr = lr0 * (opts.final_lr_fraction + (1.0 - opts.final_lr_fraction) * cosine);
            adam.step(&mut x, &g, lr);
            unflatten(&mut current, &x);
            x = flatten(&current);
            step += 1;
            if step % opts.eval_every == 0 || step == steps {
                let l = expected_loss(&current, pts, opts);
                if !l.total.is_finite() || l.total > limit {
                    diverged = true;
                } else if l.total < best.0.total {
                    best = (l, current.clone());
                }
            }
        }
        if diverged {
            if restarts == MAX_RESTARTS {
                return Err(Error::Divergence { restarts });
            }
            restarts += 1;
            lr0 *= 0.5;
            log::warn!("loss diverged at step {step}; restarting from the best iterate with learning rate {lr0}");
            current = best.1.clone();
            x = flatten(&current);
            adam = Adam::new(x.len());
        }
    }
    Ok(OptimizeResult {
        prims: best.1,
        best: best.0,
        initial,
        history,
        restarts,
    })
}

/// Free-parameter refinement of a whole assembly.
pub fn optimize_assembly<R: Rng>(
    z: &Assembly,
    pts: &PointSet,
    weights: &LossWeights,
    spacing: f64,
    rng: &mut R,
) -> Result<Assembly> {
    let prims: Vec<TrainPrim> = z.primitives.iter().map(TrainPrim::free).collect();
    if weights.steps == 0 {
        return Ok(z.clone());
    }
    let opts = OptimizeOptions::new(*weights, z.beta_occ, spacing);
    let out = optimize(prims, pts, &opts, rng)?;
    Ok(Assembly {
        primitives: out.prims.iter().map(TrainPrim::to_primitive).collect(),
        beta_occ: z.beta_occ,
    })
}

/// Per-step loss log as CSV.
pub fn write_loss_csv(history: &[StepLog], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "step,rec,count,overlap,union,total")?;
    for s in history {
        let l = &s.loss;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.step, l.rec, l.count, l.qual_overlap, l.qual_union, l.total
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{PosedPrimitive, RigidPose};
    use crate::field::{sample_points, voxelize, Lattice, SamplePoint};
    use crate::superfrustum::{canonical_params, CanonicalKind, SuperFrustumParams};
    use crate::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sd_box(p: &Vec3, h: &Vec3) -> f64 {
        let q = p.abs() - h;
        q.map(|v| v.max(0.0)).norm() + q.max().min(0.0)
    }

    fn target_points(f: impl Fn(&Vec3) -> f64 + Sync, n: usize, seed: u64) -> (PointSet, Lattice) {
        let l = Lattice::normalized(48);
        let grid = crate::field::SignedDistanceGrid::from_fn(l, |p| f(p));
        let mesh = crate::field::extract_grid_surface(&grid, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (sample_points(&mesh, &grid, n, n, &mut rng), l)
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut adam = Adam::new(2);
        for _ in 0..2000 {
            let g = vec![2.0 * (x[0] - 1.0), 2.0 * (x[1] + 0.5)];
            adam.step(&mut x, &g, 0.01);
        }
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn zero_steps_leave_assembly_unchanged() {
        let z = Assembly::from_primitives(vec![PosedPrimitive::new(
            canonical_params(CanonicalKind::Cuboid, [0.1, 0.2, 0.3]),
            RigidPose::identity(),
        )]);
        let (pts, l) = target_points(|p| p.norm() - 0.3, 200, 1);
        let w = LossWeights {
            steps: 0,
            ..Default::default()
        };
        let out =
            optimize_assembly(&z, &pts, &w, l.spacing, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn recovers_a_translation() {
        let params = SuperFrustumParams {
            sx: 0.15,
            sy: 0.12,
            sz: 0.2,
            r: 0.5,
            d: 0.0,
            t: 0.0,
            b: 0.0,
            o: 0.0,
        };
        let offset = Vec3::new(0.06, -0.04, 0.05);
        let target = PosedPrimitive::new(
            params,
            RigidPose {
                translation: offset,
                ..RigidPose::identity()
            },
        );
        let (pts, l) = target_points(|p| target.sdf(p), 3000, 2);
        let z = Assembly::from_primitives(vec![PosedPrimitive::new(params, RigidPose::identity())]);
        let w = LossWeights {
            steps: 300,
            lambda_count: 0.0,
            lambda_qual: 0.0,
            ..Default::default()
        };
        let out =
            optimize_assembly(&z, &pts, &w, l.spacing, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let err = (out.primitives[0].pose.translation - offset).norm();
        assert!(
            err <= l.spacing,
            "translation error {err} vs spacing {}",
            l.spacing
        );
    }

    #[test]
    fn count_penalty_lowers_existence() {
        let ball = canonical_params(CanonicalKind::Sphere, [0.25; 3]);
        let (pts, l) = target_points(|p| p.norm() - 0.25, 3000, 4);
        let prim = PosedPrimitive::new(ball, RigidPose::identity());
        let z = Assembly::from_primitives(vec![prim, prim]);
        let run = |lambda_count: f64| {
            let w = LossWeights {
                steps: 400,
                lambda_count,
                ..Default::default()
            };
            optimize_assembly(&z, &pts, &w, l.spacing, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
        };
        // Reconstruction alone keeps both copies; removing one is left to pruning.
        let keep = run(0.0);
        assert!(keep.primitives.iter().all(|p| p.existence() > 0.5));
        // Where reconstruction is indifferent to existence, the count term alone lowers it.
        let far: Vec<SamplePoint> = (0..64)
            .map(|i| SamplePoint {
                position: Vec3::new(3.0 + 0.01 * i as f64, 3.0, 3.0),
                target_occupancy: 0.0,
                weight: 1.0,
            })
            .collect();
        let far = PointSet {
            points: far,
            n_volume: 64,
            n_surface: 0,
        };
        let w = LossWeights {
            steps: 200,
            lambda_count: 1e-2,
            ..Default::default()
        };
        let out =
            optimize_assembly(&z, &far, &w, l.spacing, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(out
            .primitives
            .iter()
            .all(|p| p.existence_logit < prim.existence_logit));
    }

    #[test]
    fn best_iterate_never_worse_than_start() {
        let (pts, l) = target_points(|p| sd_box(p, &Vec3::new(0.2, 0.1, 0.15)), 1500, 6);
        let prims = vec![TrainPrim::free(&PosedPrimitive::new(
            canonical_params(CanonicalKind::Cuboid, [0.15, 0.15, 0.15]),
            RigidPose::identity(),
        ))];
        let w = LossWeights {
            steps: 100,
            lambda_count: 0.0,
            lambda_qual: 0.0,
            ..Default::default()
        };
        let opts = OptimizeOptions::new(w, 64.0, l.spacing);
        let out = optimize(prims, &pts, &opts, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!(out.best.rec <= out.initial.rec);
        // Sizes move from the cube toward the box half extents.
        let th = out.prims[0].params();
        let err = |a: f64, b: f64| (a - b).abs() / b;
        assert!(
            err(th.sx, 0.2) < 0.15 && err(th.sy, 0.1) < 0.15 && err(th.sz, 0.15) < 0.15,
            "{th:?}"
        );
        let mut csv = Vec::new();
        write_loss_csv(&out.history, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 101);
    }

    #[test]
    fn deterministic_under_seed() {
        let (pts, l) = target_points(|p| p.norm() - 0.2, 800, 8);
        let z = Assembly::from_primitives(vec![PosedPrimitive::new(
            canonical_params(CanonicalKind::Cuboid, [0.1; 3]),
            RigidPose::identity(),
        )]);
        let w = LossWeights {
            steps: 50,
            ..Default::default()
        };
        let a =
            optimize_assembly(&z, &pts, &w, l.spacing, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b =
            optimize_assembly(&z, &pts, &w, l.spacing, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mesh_target_is_usable() {
        // Voxelized mesh targets feed the same pipeline.
        let mesh = crate::field::mesh::shapes::icosphere(0.3, 3);
        let grid = voxelize(&mesh, 32).unwrap();
        let pts = sample_points(&mesh, &grid, 500, 500, &mut ChaCha8Rng::seed_from_u64(1));
        let prims = vec![TrainPrim::free(&PosedPrimitive::new(
            canonical_params(CanonicalKind::Sphere, [0.2; 3]),
            RigidPose::identity(),
        ))];
        let opts = OptimizeOptions::new(
            LossWeights {
                steps: 20,
                ..Default::default()
            },
            64.0,
            grid.lattice.spacing,
        );
        assert!(optimize(prims, &pts, &opts, &mut ChaCha8Rng::seed_from_u64(2)).is_ok());
    }
}
