//! Reconstruction and program-quality metrics.

use std::io::Write;

use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{Assembly, EvalMode};
use crate::error::{Error, Result};
use crate::field::kdtree::PointIndex;
use crate::field::sampling::{near_surface_positions, SURFACE_BAND_SPACINGS};
use crate::field::{
    extract_grid_surface, extract_surface, BinaryGrid, Lattice, SignedDistanceGrid, TriangleMesh,
};
use crate::Vec3;

/// Evaluation resolution per axis.
pub const EVAL_RESOLUTION: usize = 128;
/// Surface samples per shape for chamfer and EMD.
pub const METRIC_SURFACE_POINTS: usize = 2048;
/// Near-surface samples per direction for the bidirectional surface IoU.
pub const BISURF_POINTS: usize = 10_000;
/// Entropic blur of the Sinkhorn solver as a fraction of the bounding diagonal.
pub const SINKHORN_BLUR: f64 = 0.002;
pub const SINKHORN_ITERATIONS: usize = 200;
/// Largest point count accepted by [`emd_exact`].
pub const EXACT_EMD_MAX_POINTS: usize = 512;

/// |a ∧ b| / |a ∨ b|, or 1 if both grids are empty.
pub fn voxel_iou(a: &BinaryGrid, b: &BinaryGrid) -> Result<f64> {
    let inter = a.and(b)?.count();
    let union = a.or(b)?.count();
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Symmetric mean of squared nearest-neighbor distances, times 10³.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let one_way = |from: &[Vec3], to: &[Vec3]| {
        let index = PointIndex::new(to);
        // Collected first so the sum order, and thus the result, is fixed.
        let d2: Vec<f64> = from
            .par_iter()
            .map(|p| index.nearest(p).expect("non-empty").1)
            .collect();
        d2.iter().sum::<f64>() / from.len() as f64
    };
    Ok(0.5 * (one_way(a, b) + one_way(b, a)) * 1e3)
}

fn check_sizes(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(())
}

fn diagonal(a: &[Vec3], b: &[Vec3]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in a.iter().chain(b) {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Approximate earth mover's distance between equal-size point sets: the mean
/// matched distance of the entropic transport plan on squared Euclidean cost.
///
/// The blur is `SINKHORN_BLUR` times the bounding diagonal, so the entropic
/// weight is its square. The weight is annealed geometrically from the squared
/// diagonal during the first three quarters of the iterations.
pub fn emd(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    check_sizes(a, b)?;
    let n = a.len();
    let diag = diagonal(a, b);
    if diag == 0.0 {
        return Ok(0.0);
    }
    let cost: Vec<f64> = a
        .par_iter()
        .flat_map_iter(|p| b.iter().map(move |q| (p - q).norm_squared()))
        .collect();
    let eps_target = (SINKHORN_BLUR * diag).powi(2);
    let eps_start = diag * diag;
    let anneal = SINKHORN_ITERATIONS * 3 / 4;
    let decay = (eps_target / eps_start).powf(1.0 / anneal as f64);
    let log_w = -(n as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut eps = eps_start;
    for it in 0..SINKHORN_ITERATIONS {
        eps = if it < anneal {
            eps_start * decay.powi(it as i32 + 1)
        } else {
            eps_target
        };
        let gs = &g;
        f = (0..n)
            .into_par_iter()
            .map(|i| {
                let row = &cost[i * n..(i + 1) * n];
                -eps * log_sum_exp((0..n).map(move |j| (gs[j] - row[j]) / eps + log_w))
            })
            .collect();
        let (fs, cs) = (&f, &cost);
        g = (0..n)
            .into_par_iter()
            .map(|j| -eps * log_sum_exp((0..n).map(move |i| (fs[i] - cs[i * n + j]) / eps + log_w)))
            .collect();
    }
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut mass = 0.0;
            let mut moved = 0.0;
            for j in 0..n {
                let c = cost[i * n + j];
                let p = ((f[i] + g[j] - c) / eps + 2.0 * log_w).exp();
                mass += p;
                moved += p * c.sqrt();
            }
            (mass, moved)
        })
        .collect();
    let (mass, moved) = rows.iter().fold((0.0, 0.0), |s, r| (s.0 + r.0, s.1 + r.1));
    Ok(moved / mass)
}

/// Exact earth mover's distance for at most [`EXACT_EMD_MAX_POINTS`] points:
/// the mean matched distance of the assignment minimizing squared distance.
pub fn emd_exact(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    check_sizes(a, b)?;
    if a.len() > EXACT_EMD_MAX_POINTS {
        return Err(Error::InvalidParameter(format!(
            "exact EMD supports at most {EXACT_EMD_MAX_POINTS} points, got {}",
            a.len()
        )));
    }
    let diag = diagonal(a, b).max(f64::MIN_POSITIVE);
    // Integer weights keep the assignment solver exact; 2^40 levels over the
    // squared diagonal is far below any tolerance of interest.
    let scale = (1u64 << 40) as f64 / (diag * diag);
    let weights = Matrix::from_fn(a.len(), b.len(), |(i, j)| {
        ((a[i] - b[j]).norm_squared() * scale).round() as i64
    });
    let (_, assignment) = kuhn_munkres_min(&weights);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| (a[i] - b[j]).norm())
        .sum();
    Ok(total / a.len() as f64)
}

/// Reference shape for evaluation: a signed distance grid plus its surface.
#[derive(Clone, Debug)]
pub struct EvalTarget {
    pub grid: SignedDistanceGrid,
    pub surface: TriangleMesh,
}

impl EvalTarget {
    pub fn new(grid: SignedDistanceGrid, surface: TriangleMesh) -> Self {
        Self { grid, surface }
    }

    /// Uses the zero level set of `grid` as the surface.
    pub fn from_grid(grid: SignedDistanceGrid) -> Self {
        let surface = extract_grid_surface(&grid, 0.0);
        Self { grid, surface }
    }

    pub fn is_inside(&self, p: &Vec3) -> bool {
        self.grid.sample(p) <= 0.0
    }

    /// Occupancy resampled on `lattice`.
    pub fn occupancy(&self, lattice: Lattice) -> BinaryGrid {
        BinaryGrid::from_fn(lattice, |p| self.is_inside(p))
    }
}

/// Surface of the hard-mode assembly by dual contouring on `lattice`.
pub fn reconstruction_surface(z: &Assembly, lattice: &Lattice) -> TriangleMesh {
    let field = z.hard().compile(EvalMode::Hard);
    extract_surface(&|p: &Vec3| field.field(p), lattice, 0.0)
}

fn directional_iou(
    points: &[Vec3],
    a: impl Fn(&Vec3) -> bool + Sync,
    b: impl Fn(&Vec3) -> bool + Sync,
) -> f64 {
    let (both, either) = points
        .par_iter()
        .map(|p| {
            let (x, y) = (a(p), b(p));
            ((x && y) as usize, (x || y) as usize)
        })
        .reduce(|| (0, 0), |s, t| (s.0 + t.0, s.1 + t.1));
    if either == 0 {
        1.0
    } else {
        both as f64 / either as f64
    }
}

/// Mean of the occupancy IoUs over near-surface points of the target and of
/// the reconstruction, both within a band of two lattice spacings.
pub fn bisurf_iou(
    target: &EvalTarget,
    z: &Assembly,
    lattice: &Lattice,
    points: usize,
    seed: u64,
) -> f64 {
    let hard = z.hard();
    if hard.is_empty() {
        return 0.0;
    }
    let field = hard.compile(EvalMode::Hard);
    let recon = extract_surface(&|p: &Vec3| field.field(p), lattice, 0.0);
    if recon.is_empty() {
        return 0.0;
    }
    let band = SURFACE_BAND_SPACINGS * lattice.spacing;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let near_target = near_surface_positions(&target.surface, points, band, &mut rng);
    let near_recon = near_surface_positions(&recon, points, band, &mut rng);
    let inside_target = |p: &Vec3| target.is_inside(p);
    let inside_recon = |p: &Vec3| field.field(p) <= 0.0;
    0.5 * (directional_iou(&near_target, inside_target, inside_recon)
        + directional_iou(&near_recon, inside_target, inside_recon))
}

/// Fraction of cells inside any live primitive that lie inside two or more.
pub fn overlap_ratio(z: &Assembly, lattice: &Lattice) -> f64 {
    let hard = z.hard();
    if hard.is_empty() {
        return 0.0;
    }
    let field = hard.compile(EvalMode::Hard);
    let (multi, any) = (0..lattice.len())
        .into_par_iter()
        .map(|idx| {
            let p = lattice.position_of(idx);
            let inside = field
                .items
                .iter()
                .filter(|c| c.sdf(&p) <= 0.0)
                .take(2)
                .count();
            ((inside >= 2) as usize, (inside >= 1) as usize)
        })
        .reduce(|| (0, 0), |s, t| (s.0 + t.0, s.1 + t.1));
    if any == 0 {
        0.0
    } else {
        multi as f64 / any as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsOptions {
    pub resolution: usize,
    pub surface_points: usize,
    pub bisurf_points: usize,
    pub seed: u64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            resolution: EVAL_RESOLUTION,
            surface_points: METRIC_SURFACE_POINTS,
            bisurf_points: BISURF_POINTS,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub voxel_iou: f64,
    pub bisurf_iou: f64,
    /// Absent when the reconstruction has no surface.
    pub chamfer: Option<f64>,
    pub emd: Option<f64>,
    pub num_prims: usize,
    pub overlap_ratio: f64,
    pub resolution: usize,
    pub surface_points: usize,
    pub bisurf_points: usize,
}

/// All metrics of a hard-mode assembly against a target.
pub fn evaluate(target: &EvalTarget, z: &Assembly, opts: &MetricsOptions) -> Result<MetricsReport> {
    if opts.resolution < 2 || opts.surface_points == 0 || opts.bisurf_points == 0 {
        return Err(Error::InvalidParameter(
            "metric resolution and sample counts must be positive".into(),
        ));
    }
    let lattice = Lattice::normalized(opts.resolution);
    let hard = z.hard();
    let voxel = voxel_iou(&target.occupancy(lattice), &hard.occupancy_grid(lattice))?;
    let recon = reconstruction_surface(&hard, &lattice);
    let (chamfer_value, emd_value) = if recon.is_empty() || target.surface.is_empty() {
        (None, None)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let a: Vec<Vec3> = target
            .surface
            .sample_surface(opts.surface_points, &mut rng)
            .into_iter()
            .map(|s| s.0)
            .collect();
        let b: Vec<Vec3> = recon
            .sample_surface(opts.surface_points, &mut rng)
            .into_iter()
            .map(|s| s.0)
            .collect();
        (Some(chamfer(&a, &b)?), Some(emd(&a, &b)?))
    };
    Ok(MetricsReport {
        voxel_iou: voxel,
        bisurf_iou: bisurf_iou(
            target,
            &hard,
            &lattice,
            opts.bisurf_points,
            opts.seed ^ 0xb15f,
        ),
        chamfer: chamfer_value,
        emd: emd_value,
        num_prims: hard.len(),
        overlap_ratio: overlap_ratio(&hard, &lattice),
        resolution: opts.resolution,
        surface_points: opts.surface_points,
        bisurf_points: opts.bisurf_points,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    name: &'a str,
    voxel_iou: f64,
    bisurf_iou: f64,
    chamfer: Option<f64>,
    emd: Option<f64>,
    num_prims: usize,
    overlap_ratio: f64,
    resolution: usize,
    surface_points: usize,
    bisurf_points: usize,
}

/// Writes one CSV row per named report, with a header.
pub fn write_csv<W: Write>(writer: W, rows: &[(String, MetricsReport)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for (name, report) in rows {
        let r = report;
        let row = CsvRow {
            name,
            voxel_iou: r.voxel_iou,
            bisurf_iou: r.bisurf_iou,
            chamfer: r.chamfer,
            emd: r.emd,
            num_prims: r.num_prims,
            overlap_ratio: r.overlap_ratio,
            resolution: r.resolution,
            surface_points: r.surface_points,
            bisurf_points: r.bisurf_points,
        };
        out.serialize(row)
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    out.flush()?;
    Ok(())
}
