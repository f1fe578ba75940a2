//! Residual primitive fitting: decompose what is still unexplained, seed new
//! primitives there, refine the whole assembly, prune, and keep the round only
//! if the objective improves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{Assembly, EvalMode, PosedPrimitive, DEFAULT_BETA_OCC};
use crate::error::{Error, Result};
use crate::field::sampling::{near_surface_positions, CurvatureWeights, SURFACE_BAND_SPACINGS};
use crate::field::voxelize::MIN_VOXEL_RESOLUTION;
use crate::field::{
    distance_transform, extract_grid_surface, extract_surface, sample_points, voxelize_with,
    BinaryGrid, Lattice, PointSet, SignedDistanceGrid, TriangleMesh, VoxelizeOptions,
};
use crate::msd::{decompose, MsdConfig};
use crate::optimize::{
    optimize, LossWeights, OptimizeOptions, PruneStep, TrainPrim, SOLID_CORE_KINDS,
};
use crate::seed::{sample_region_points, seed_candidates, seed_primitive};
use crate::superfrustum::CanonicalKind;
use crate::Vec3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// Continuous SuperFrustum parameters.
    #[default]
    Free,
    /// Mixtures of canonical solids, snapped to one kind per primitive at the end.
    Solid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub max_rounds: usize,
    pub msd: MsdConfig,
    /// Cost per live primitive in the objective.
    pub alpha: f64,
    /// Minimum objective gain for a round to be kept.
    pub epsilon: f64,
    pub weights: LossWeights,
    pub resolution: usize,
    pub seed: u64,
    pub mode: FitMode,
    pub beta_occ: f64,
    /// Uniform volume samples for the reconstruction loss.
    pub volume_points: usize,
    /// Near-surface samples for the reconstruction loss.
    pub surface_points: usize,
    /// Near-surface samples per side for the objective.
    pub objective_points: usize,
    /// Interior samples used to seed each region.
    pub seed_points: usize,
    /// A region is seeded only if its volume is at least this fraction of the
    /// round's largest region; 0 seeds every region.
    pub seed_volume_ratio: f64,
    /// Steps of the per-region warm-up.
    pub local_steps: usize,
    /// Steps of the refinement at hard existence after each joint phase.
    pub polish_steps: usize,
    /// Steps of the refit of the survivors when a plain deletion does not pay
    /// off during pruning; 0 prunes without refitting.
    pub prune_refit_steps: usize,
    /// Steps of the size and pose refinement after snapping in solid mode.
    pub snap_steps: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            msd: MsdConfig::default(),
            alpha: 1e-3,
            epsilon: 1e-3,
            weights: LossWeights::default(),
            resolution: 128,
            seed: 0,
            mode: FitMode::Free,
            beta_occ: DEFAULT_BETA_OCC,
            volume_points: 4096,
            surface_points: 4096,
            objective_points: 4096,
            seed_points: 2048,
            seed_volume_ratio: 0.1,
            local_steps: 150,
            polish_steps: 100,
            prune_refit_steps: 100,
            snap_steps: 150,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if self.resolution < MIN_VOXEL_RESOLUTION {
            return Err(Error::Config(format!(
                "resolution must be at least {MIN_VOXEL_RESOLUTION}, got {}",
                self.resolution
            )));
        }
        if !(0.0..=1.0).contains(&self.seed_volume_ratio) {
            return Err(Error::Config(format!(
                "seed_volume_ratio must lie in [0, 1], got {}",
                self.seed_volume_ratio
            )));
        }
        if !(self.beta_occ > 0.0 && self.beta_occ.is_finite()) {
            return Err(Error::Config(format!(
                "beta_occ must be positive, got {}",
                self.beta_occ
            )));
        }
        if self.volume_points + self.surface_points == 0 || self.objective_points == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        self.msd.validate()?;
        self.weights.validate()
    }
}

/// A shape to fit: its signed distance grid, a surface for sampling, and the
/// fixed target-side points of the objective.
#[derive(Clone, Debug)]
pub struct Target {
    pub grid: SignedDistanceGrid,
    pub inside: BinaryGrid,
    pub surface: TriangleMesh,
    eval_points: Vec<Vec3>,
    eval_inside: Vec<bool>,
    eval_weights: Vec<f64>,
    curvature: std::sync::Arc<CurvatureWeights>,
    objective_points: usize,
    objective_seed: u64,
}

impl Target {
    /// Uses the zero level set of `grid` as the surface.
    pub fn from_grid(grid: SignedDistanceGrid, cfg: &FitConfig) -> Result<Self> {
        let surface = extract_grid_surface(&grid, 0.0);
        Self::new(grid, surface, cfg)
    }

    /// Voxelizes a mesh in normalized coordinates at `cfg.resolution`.
    pub fn from_mesh(mesh: &TriangleMesh, cfg: &FitConfig, opts: VoxelizeOptions) -> Result<Self> {
        let grid = voxelize_with(mesh, cfg.resolution, opts)?;
        Self::new(grid, mesh.clone(), cfg)
    }

    pub fn new(grid: SignedDistanceGrid, surface: TriangleMesh, cfg: &FitConfig) -> Result<Self> {
        let inside = grid.inside();
        if inside.count() == 0 || surface.is_empty() {
            return Err(Error::ZeroVolume);
        }
        let curvature = std::sync::Arc::new(CurvatureWeights::new(&surface));
        let band = SURFACE_BAND_SPACINGS * grid.lattice.spacing;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a5e_70b1_ec71_0e00);
        let eval_points = near_surface_positions(&surface, cfg.objective_points, band, &mut rng);
        let eval_inside = eval_points.iter().map(|p| grid.sample(p) <= 0.0).collect();
        let eval_weights = eval_points.iter().map(|p| curvature.weight(p)).collect();
        Ok(Self {
            grid,
            inside,
            surface,
            eval_points,
            eval_inside,
            eval_weights,
            curvature,
            objective_points: cfg.objective_points,
            objective_seed: cfg.seed ^ 0x0b1e_c71e_5eed_0001,
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.grid.lattice
    }

    pub fn is_inside(&self, p: &Vec3) -> bool {
        self.grid.sample(p) <= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    /// `R - alpha * |z|`.
    pub objective: f64,
    /// Curvature-weighted label agreement over near-surface points.
    pub reconstruction: f64,
    pub num_prims: usize,
}

/// Objective of the hard-mode assembly against the target.
pub fn objective(target: &Target, z: &Assembly, alpha: f64) -> ObjectiveValue {
    let hard = z.hard();
    let field = hard.compile(EvalMode::Hard);
    let (mut agree, mut total) = (0.0, 0.0);
    for ((p, &t), &w) in target
        .eval_points
        .iter()
        .zip(&target.eval_inside)
        .zip(&target.eval_weights)
    {
        total += w;
        if t == (field.field(p) <= 0.0) {
            agree += w;
        }
    }
    if !hard.is_empty() {
        let lattice = target.lattice();
        let mesh = extract_surface(&|p: &Vec3| field.field(p), &lattice, 0.0);
        let band = SURFACE_BAND_SPACINGS * lattice.spacing;
        let mut rng = ChaCha8Rng::seed_from_u64(target.objective_seed);
        for p in near_surface_positions(&mesh, target.objective_points, band, &mut rng) {
            let w = target.curvature.weight(&p);
            total += w;
            if target.is_inside(&p) == (field.field(&p) <= 0.0) {
                agree += w;
            }
        }
    }
    let reconstruction = if total > 0.0 { agree / total } else { 0.0 };
    let num_prims = hard.len();
    ObjectiveValue {
        objective: reconstruction - alpha * num_prims as f64,
        reconstruction,
        num_prims,
    }
}

/// Target interior not covered by the hard-mode assembly, as a signed distance grid.
pub fn residual(target: &Target, z: &Assembly) -> SignedDistanceGrid {
    let covered = z.occupancy_grid(target.lattice());
    let occ = target.inside.and_not(&covered).expect("same lattice");
    distance_transform(&occ).0
}

/// Number of lattice cells inside one primitive on its own.
pub fn solo_volume(p: &PosedPrimitive, lattice: &Lattice) -> usize {
    let r = p.params.bounding_radius();
    let c = lattice.to_grid(&p.pose.translation);
    let n = lattice.resolution as i64;
    let reach = r / lattice.spacing + 1.0;
    let range = |x: f64| {
        (
            (x - reach).floor().max(0.0) as i64,
            ((x + reach).ceil() as i64).min(n - 1),
        )
    };
    let (ri, rj, rk) = (range(c.x), range(c.y), range(c.z));
    let mut count = 0;
    for i in ri.0..=ri.1 {
        for j in rj.0..=rj.1 {
            for k in rk.0..=rk.1 {
                if p.sdf(&lattice.position(i as usize, j as usize, k as usize)) <= 0.0 {
                    count += 1;
                }
            }
        }
    }
    count
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxRounds,
    EmptyResidual,
    NoRegions,
    NoImprovement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub accepted: bool,
    /// Objective of the round's candidate assembly.
    pub objective: f64,
    pub reconstruction: f64,
    pub num_prims: usize,
    pub added: usize,
    /// Primitives removed by the existence threshold before pruning.
    pub dead: usize,
    pub pruned: Vec<PruneStep>,
    /// Residual voxels before and after the round.
    pub residual_before: usize,
    pub residual_after: usize,
    pub msd_taus: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapRecord {
    pub index: usize,
    pub from: String,
    pub to: String,
    pub objective_before: f64,
    pub objective_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub initial_objective: f64,
    pub rounds: Vec<RoundRecord>,
    pub stop_reason: StopReason,
    /// Solid mode: objective right after snapping and after the swap test.
    pub snap_objective: Option<f64>,
    pub swaps: Vec<SwapRecord>,
    pub final_objective: ObjectiveValue,
}

impl FitTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub assembly: Assembly,
    pub trace: FitTrace,
    /// Canonical kind of every primitive in solid mode.
    pub kinds: Option<Vec<CanonicalKind>>,
}

fn to_assembly(prims: &[TrainPrim], beta_occ: f64) -> Assembly {
    Assembly {
        primitives: prims.iter().map(TrainPrim::to_primitive).collect(),
        beta_occ,
    }
}

fn to_train(p: &PosedPrimitive, mode: FitMode) -> TrainPrim {
    match mode {
        FitMode::Free => TrainPrim::free(p),
        FitMode::Solid => TrainPrim::solid(p, SOLID_CORE_KINDS),
    }
}

/// Sample points whose location lies within `tau` of `mask`.
fn local_support(pts: &PointSet, mask: &BinaryGrid, tau: f64) -> PointSet {
    let (dist, _) = distance_transform(mask);
    let points: Vec<_> = pts
        .points
        .iter()
        .filter(|s| dist.sample(&s.position) <= tau)
        .copied()
        .collect();
    let n_volume = pts.points[..pts.n_volume]
        .iter()
        .filter(|s| dist.sample(&s.position) <= tau)
        .count();
    let n_surface = points.len() - n_volume;
    PointSet {
        points,
        n_volume,
        n_surface,
    }
}

/// Weighted fraction of `pts` whose hard-mode label matches the target.
fn agreement(z: &Assembly, pts: &PointSet) -> f64 {
    let field = z.hard().compile(EvalMode::Hard);
    let (mut agree, mut total) = (0.0, 0.0);
    for s in &pts.points {
        total += s.weight;
        if (s.target_occupancy > 0.5) == (field.field(&s.position) <= 0.0) {
            agree += s.weight;
        }
    }
    if total > 0.0 {
        agree / total
    } else {
        0.0
    }
}

/// Prunes `prims` greedily and returns the survivors and the accepted deletions.
/// Greedy deletion in ascending solo-volume order. A deletion is accepted iff
/// the objective strictly increases, either as is or after the survivors are
/// refit at hard existence.
fn prune_prims(
    target: &Target,
    prims: Vec<TrainPrim>,
    cfg: &FitConfig,
    pts: &PointSet,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<TrainPrim>, Vec<PruneStep>)> {
    let lattice = target.lattice();
    let score =
        |ps: &[TrainPrim]| objective(target, &to_assembly(ps, cfg.beta_occ), cfg.alpha).objective;
    let mut state = prims;
    let mut ids: Vec<usize> = (0..state.len()).collect();
    let mut current = score(&state);
    let mut steps = Vec::new();
    loop {
        let solo: Vec<usize> = state
            .iter()
            .map(|p| solo_volume(&p.to_primitive(), &lattice))
            .collect();
        let mut order: Vec<usize> = ids.clone();
        order.sort_by_key(|&id| {
            let pos = ids.iter().position(|&k| k == id).expect("live id");
            (solo[pos], id)
        });
        let mut changed = false;
        for id in order {
            let Some(pos) = ids.iter().position(|&k| k == id) else {
                continue;
            };
            let mut trial = state.clone();
            trial.remove(pos);
            let mut o = score(&trial);
            if o <= current && cfg.prune_refit_steps > 0 && !trial.is_empty() {
                let refit = polish(
                    trial.clone(),
                    pts,
                    cfg,
                    lattice.spacing,
                    cfg.prune_refit_steps,
                    rng,
                )?;
                let o_refit = score(&refit);
                if o_refit > o {
                    trial = refit;
                    o = o_refit;
                }
            }
            if o > current {
                steps.push(PruneStep {
                    removed: id,
                    objective_before: current,
                    objective_after: o,
                });
                log::debug!("pruned primitive {id}: objective {current:.6} -> {o:.6}");
                state = trial;
                ids.remove(pos);
                current = o;
                changed = true;
            }
        }
        if !changed || state.is_empty() {
            break;
        }
    }
    Ok((state, steps))
}

fn options(cfg: &FitConfig, spacing: f64, steps: usize) -> OptimizeOptions {
    OptimizeOptions::new(
        LossWeights {
            steps,
            ..cfg.weights
        },
        cfg.beta_occ,
        spacing,
    )
}

/// Refines live primitives as the hard-mode assembly sees them: every one at
/// full existence, so the soft erosion no longer biases sizes.
fn polish(
    prims: Vec<TrainPrim>,
    pts: &PointSet,
    cfg: &FitConfig,
    spacing: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrainPrim>> {
    if steps == 0 || prims.is_empty() {
        return Ok(prims);
    }
    let mut opts = options(cfg, spacing, steps);
    opts.hard_existence = true;
    Ok(optimize(prims, pts, &opts, rng)?.prims)
}

/// Runs the fitting loop. `on_round` sees every candidate assembly with its record.
pub fn fit_with(
    target: &Target,
    cfg: &FitConfig,
    mut on_round: impl FnMut(&RoundRecord, &Assembly),
) -> Result<FitResult> {
    cfg.validate()?;
    let lattice = target.lattice();
    let spacing = lattice.spacing;
    let tau_mask = cfg.weights.tau_mask_spacings * spacing;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pts = sample_points(
        &target.surface,
        &target.grid,
        cfg.volume_points,
        cfg.surface_points,
        &mut rng,
    );

    let mut state: Vec<TrainPrim> = Vec::new();
    let initial = objective(target, &Assembly::new(), cfg.alpha);
    let mut current = initial;
    let mut rounds = Vec::new();
    let mut stop_reason = StopReason::MaxRounds;
    for round in 1..=cfg.max_rounds {
        let res = if state.is_empty() {
            target.grid.clone()
        } else {
            residual(target, &to_assembly(&state, cfg.beta_occ))
        };
        let residual_before = res.inside().count();
        if residual_before < cfg.msd.min_region_voxels {
            stop_reason = StopReason::EmptyResidual;
            break;
        }
        let mut regions = decompose(&res, &cfg.msd)?;
        if regions.is_empty() {
            stop_reason = StopReason::NoRegions;
            break;
        }
        let largest = regions.iter().map(|r| r.volume).fold(0.0, f64::max);
        regions.retain(|r| r.volume >= cfg.seed_volume_ratio * largest);

        // Seed each region, then warm the new primitive up on its local support
        // with everything else frozen.
        let seeds: Vec<u64> = regions.iter().map(|_| rng.gen()).collect();
        let frozen = &state;
        let new_prims: Vec<TrainPrim> = regions
            .par_iter()
            .zip(seeds)
            .map(|(region, s)| -> Result<Option<TrainPrim>> {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let inside = sample_region_points(&region.mask, cfg.seed_points, &mut rng);
                let Ok(candidates) = seed_candidates(&inside) else {
                    return Ok(None);
                };
                let local = local_support(&pts, &region.mask, tau_mask);
                if cfg.local_steps == 0 || local.is_empty() {
                    return Ok(Some(to_train(&seed_primitive(&candidates[0]), cfg.mode)));
                }
                let mut opts = options(cfg, spacing, cfg.local_steps);
                let mut trainable = vec![false; frozen.len() + 1];
                trainable[frozen.len()] = true;
                opts.trainable = Some(trainable);
                // Warm up one seed per candidate axis and keep the best hard-mode
                // agreement with the whole target; the earliest wins ties.
                let mut best: Option<(f64, TrainPrim)> = None;
                for est in &candidates {
                    let mut prims = frozen.clone();
                    prims.push(to_train(&seed_primitive(est), cfg.mode));
                    let out = optimize(prims, &local, &opts, &mut rng)?;
                    let score = agreement(&to_assembly(&out.prims, cfg.beta_occ), &pts);
                    log::debug!(
                        "region {} seed along {:?}: agreement {score:.5}",
                        region.order_index,
                        est.axis
                    );
                    if best.as_ref().is_none_or(|b| score > b.0) {
                        best = Some((score, *out.prims.last().expect("new primitive")));
                    }
                }
                Ok(best.map(|b| b.1))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let added = new_prims.len();

        let mut candidate = state.clone();
        candidate.extend(new_prims);
        if cfg.weights.steps > 0 {
            candidate = optimize(
                candidate,
                &pts,
                &options(cfg, spacing, cfg.weights.steps),
                &mut rng,
            )?
            .prims;
        }
        let before_cleanup = candidate.len();
        candidate.retain(|p| p.logit >= 0.0);
        let dead = before_cleanup - candidate.len();
        let candidate = polish(candidate, &pts, cfg, spacing, cfg.polish_steps, &mut rng)?;
        let (candidate, pruned) = prune_prims(target, candidate, cfg, &pts, &mut rng)?;

        let z = to_assembly(&candidate, cfg.beta_occ);
        let o = objective(target, &z, cfg.alpha);
        let accepted = o.objective >= current.objective + cfg.epsilon;
        let record = RoundRecord {
            round,
            accepted,
            objective: o.objective,
            reconstruction: o.reconstruction,
            num_prims: o.num_prims,
            added,
            dead,
            pruned,
            residual_before,
            residual_after: residual(target, &z).inside().count(),
            msd_taus: regions.iter().map(|r| r.tau).collect(),
        };
        log::info!(
            "round {round}: O {:.5} (R {:.5}, {} primitives, {added} added) {}",
            o.objective,
            o.reconstruction,
            o.num_prims,
            if accepted { "accepted" } else { "rejected" }
        );
        on_round(&record, &z);
        rounds.push(record);
        if !accepted {
            stop_reason = StopReason::NoImprovement;
            break;
        }
        state = candidate;
        current = o;
    }

    let mut snap_objective = None;
    let mut swaps = Vec::new();
    let mut kinds = None;
    if cfg.mode == FitMode::Solid && !state.is_empty() {
        let (prims, snap, sw) = finish_solid(target, state, cfg, &pts, &mut rng)?;
        state = prims;
        snap_objective = Some(snap);
        swaps = sw;
        kinds = Some(
            state
                .iter()
                .map(|p| p.solid_kind().expect("solid primitive"))
                .collect(),
        );
        current = objective(target, &to_assembly(&state, cfg.beta_occ), cfg.alpha);
    }
    let assembly = to_assembly(&state, cfg.beta_occ);
    let trace = FitTrace {
        initial_objective: initial.objective,
        rounds,
        stop_reason,
        snap_objective,
        swaps,
        final_objective: current,
    };
    Ok(FitResult {
        assembly,
        trace,
        kinds,
    })
}

pub fn fit(target: &Target, cfg: &FitConfig) -> Result<FitResult> {
    fit_with(target, cfg, |_, _| {})
}

/// Snaps every primitive to its dominant kind, refines sizes and pose, then
/// tries solid-to-shell swaps that raise the objective.
fn finish_solid(
    target: &Target,
    prims: Vec<TrainPrim>,
    cfg: &FitConfig,
    pts: &PointSet,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<TrainPrim>, f64, Vec<SwapRecord>)> {
    let spacing = target.lattice().spacing;
    let snapped: Vec<TrainPrim> = prims.iter().map(TrainPrim::snapped).collect();
    let mut prims = polish(snapped, pts, cfg, spacing, cfg.snap_steps, rng)?;
    let score =
        |ps: &[TrainPrim]| objective(target, &to_assembly(ps, cfg.beta_occ), cfg.alpha).objective;
    let mut best = score(&prims);
    let snap = best;
    let mut swaps = Vec::new();
    for i in 0..prims.len() {
        let from = prims[i].solid_kind().expect("solid primitive");
        let to = match from {
            CanonicalKind::Cylinder => CanonicalKind::Tube,
            CanonicalKind::Sphere => CanonicalKind::Shell,
            _ => continue,
        };
        let mut trial = prims.clone();
        trial[i] = prims[i].with_kind(to);
        let o = score(&trial);
        if o > best {
            swaps.push(SwapRecord {
                index: i,
                from: format!("{from:?}"),
                to: format!("{to:?}"),
                objective_before: best,
                objective_after: o,
            });
            prims = trial;
            best = o;
        }
    }
    Ok((prims, snap, swaps))
}
