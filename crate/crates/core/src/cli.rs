//! Command-line front end: fit, eval, decompose and export.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{Assembly, EvalMode};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::io::{read_grid, read_mesh, write_obj};
use crate::field::{
    distance_transform, extract_grid_surface, extract_surface, normalize_mesh, voxelize_with,
    Lattice, NormalizeTransform, SignedDistanceGrid, TriangleMesh, VoxelizeOptions,
};
use crate::metrics::{evaluate, write_csv, EvalTarget, MetricsReport};
use crate::msd::decompose;
use crate::resfit::{fit_with, FitMode, FitResult, Target};
use crate::Vec3;

/// Exit code for unreadable, malformed or degenerate input.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for numerical failure.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "resfit",
    version,
    about = "Fit compact assemblies of SuperFrustum primitives to 3D shapes"
)]
pub struct Cli {
    /// Log progress (-v) or details (-vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an assembly to one or more shapes.
    Fit(FitArgs),
    /// Score assemblies against their target shapes.
    Eval(EvalArgs),
    /// Split a shape into thickness-ordered regions.
    Decompose(DecomposeArgs),
    /// Mesh the surface of an assembly.
    Export(ExportArgs),
}

/// Settings shared by every command. Flags override the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Voxel resolution per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accept meshes with boundary edges.
    #[arg(long)]
    pub force_winding: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// OBJ, STL or grid files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory; one subdirectory per input when fitting several.
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub common: Overrides,
    /// Maximum fitting rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Decomposition iterations per round.
    #[arg(long)]
    pub msd_iters: Option<usize>,
    /// Per-primitive cost in the objective.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda_count: Option<f64>,
    #[arg(long)]
    pub lambda_qual: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<FitMode>,
    /// Shapes fitted concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write only primitives with existence of at least one half.
    #[arg(long)]
    pub hard: bool,
    /// Write the candidate assembly and record of every round.
    #[arg(long)]
    pub dump_rounds: bool,
    /// Also write the surface of the result as OBJ.
    #[arg(long)]
    pub export: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Alternating target shape and assembly paths.
    #[arg(required = true, num_args = 2.., value_names = ["TARGET", "ASSEMBLY"])]
    pub pairs: Vec<PathBuf>,
    #[command(flatten)]
    pub common: Overrides,
    /// JSON report file; printed to stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// CSV file with one row per pair.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub msd_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub assembly: PathBuf,
    /// OBJ file to write.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    /// Field level to contour; negative values erode.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub iso: f64,
}

fn parse_mode(s: &str) -> std::result::Result<FitMode, String> {
    match s {
        "free" => Ok(FitMode::Free),
        "solid" => Ok(FitMode::Solid),
        _ => Err(format!("unknown mode {s:?}; expected free or solid")),
    }
}

impl Overrides {
    fn base(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.fit.seed = seed;
            cfg.metrics.seed = seed;
        }
        cfg.force_winding |= self.force_winding;
        Ok(cfg)
    }
}

impl FitArgs {
    /// Effective configuration: defaults, then the config file, then flags.
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = self.common.base()?;
        let fit = &mut cfg.fit;
        if let Some(v) = self.common.resolution {
            fit.resolution = v;
        }
        if let Some(v) = self.rounds {
            fit.max_rounds = v;
        }
        if let Some(v) = self.msd_iters {
            fit.msd.max_iterations = v;
        }
        if let Some(v) = self.alpha {
            fit.alpha = v;
        }
        if let Some(v) = self.lambda_count {
            fit.weights.lambda_count = v;
        }
        if let Some(v) = self.lambda_qual {
            fit.weights.lambda_qual = v;
        }
        if let Some(v) = self.mode {
            fit.mode = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl EvalArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = self.common.base()?;
        if let Some(v) = self.common.resolution {
            cfg.metrics.resolution = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl DecomposeArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = self.common.base()?;
        if let Some(v) = self.common.resolution {
            cfg.fit.resolution = v;
        }
        if let Some(v) = self.msd_iters {
            cfg.fit.msd.max_iterations = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A shape in normalized coordinates.
#[derive(Clone, Debug)]
pub struct Shape {
    pub grid: SignedDistanceGrid,
    pub surface: TriangleMesh,
    /// Maps normalized coordinates back to the input frame.
    pub transform: NormalizeTransform,
}

fn is_grid_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("grid"))
}

/// Names the file in I/O errors.
fn with_path(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(io) => Error::Read {
            path: path.to_path_buf(),
            msg: io.to_string(),
        },
        other => other,
    }
}

fn load_assembly(path: &Path) -> Result<Assembly> {
    Assembly::load(path).map_err(with_path(path))
}

/// Reads a grid file as is, or normalizes and voxelizes a mesh at `resolution`.
pub fn load_shape(path: &Path, resolution: usize, force_winding: bool) -> Result<Shape> {
    load_shape_inner(path, resolution, force_winding).map_err(with_path(path))
}

fn load_shape_inner(path: &Path, resolution: usize, force_winding: bool) -> Result<Shape> {
    if is_grid_file(path) {
        let grid = read_grid(path)?;
        let surface = extract_grid_surface(&grid, 0.0);
        return Ok(Shape {
            grid,
            surface,
            transform: NormalizeTransform::identity(),
        });
    }
    let (mesh, transform) = normalize_mesh(&read_mesh(path)?)?;
    let opts = VoxelizeOptions {
        force_winding,
        ..Default::default()
    };
    let grid = voxelize_with(&mesh, resolution, opts)?;
    Ok(Shape {
        grid,
        surface: mesh,
        transform,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Surface of the hard-mode assembly at level `iso`.
pub fn assembly_mesh(z: &Assembly, resolution: usize, iso: f64) -> Result<TriangleMesh> {
    let hard = z.hard();
    if hard.is_empty() {
        return Err(Error::EmptyAssembly);
    }
    let field = hard.compile(EvalMode::Hard);
    Ok(extract_surface(
        &|p: &Vec3| field.field(p),
        &Lattice::normalized(resolution),
        iso,
    ))
}

#[derive(Serialize)]
struct RoundDump<'a> {
    record: &'a crate::resfit::RoundRecord,
    assembly: serde_json::Value,
}

/// Fits one shape and writes `assembly.json`, `trace.json`, `transform.json`
/// and the effective `config.toml` into `out`.
pub fn cmd_fit(input: &Path, out: &Path, cfg: &RunConfig, args: &FitArgs) -> Result<FitResult> {
    create_dir(out)?;
    cfg.save(&out.join("config.toml"))?;
    let shape = load_shape(input, cfg.fit.resolution, cfg.force_winding)?;
    let target = Target::new(shape.grid, shape.surface, &cfg.fit)?;
    let rounds_dir = out.join("rounds");
    if args.dump_rounds {
        create_dir(&rounds_dir)?;
    }
    let mut dump_error = None;
    let result = fit_with(&target, &cfg.fit, |record, z| {
        if !args.dump_rounds || dump_error.is_some() {
            return;
        }
        let assembly = serde_json::from_str(&z.to_json()).expect("assembly json");
        let path = rounds_dir.join(format!("round_{:02}.json", record.round));
        if let Err(e) = write_json(&RoundDump { record, assembly }, &path) {
            dump_error = Some(e);
        }
    })?;
    if let Some(e) = dump_error {
        return Err(e);
    }
    let assembly = if args.hard {
        result.assembly.hard()
    } else {
        result.assembly.clone()
    };
    assembly.save(&out.join("assembly.json"))?;
    std::fs::write(out.join("trace.json"), result.trace.to_json())?;
    write_json(&shape.transform, &out.join("transform.json"))?;
    if args.export && !assembly.hard().is_empty() {
        write_obj(
            &assembly_mesh(&assembly, cfg.fit.resolution, 0.0)?,
            &out.join("assembly.obj"),
        )?;
    }
    Ok(FitResult { assembly, ..result })
}

/// Metrics of a saved assembly against a target shape file.
pub fn cmd_eval(target: &Path, assembly: &Path, cfg: &RunConfig) -> Result<MetricsReport> {
    let shape = load_shape(target, cfg.metrics.resolution, cfg.force_winding)?;
    let z = load_assembly(assembly)?;
    evaluate(
        &EvalTarget::new(shape.grid, shape.surface),
        &z,
        &cfg.metrics,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionEntry {
    pub order: usize,
    pub tau: f64,
    pub volume: f64,
    pub voxels: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionManifest {
    pub resolution: usize,
    pub regions: Vec<RegionEntry>,
}

/// Writes one OBJ per region and `manifest.json` into `out`. An empty input
/// yields an empty manifest.
pub fn cmd_decompose(input: &Path, out: &Path, cfg: &RunConfig) -> Result<RegionManifest> {
    create_dir(out)?;
    cfg.save(&out.join("config.toml"))?;
    let grid = match load_shape(input, cfg.fit.resolution, cfg.force_winding) {
        Ok(shape) => Some(shape.grid),
        Err(Error::EmptyMesh) => None,
        Err(e) => return Err(e),
    };
    let mut manifest = RegionManifest {
        resolution: cfg.fit.resolution,
        regions: Vec::new(),
    };
    let regions = match &grid {
        Some(g) => decompose(g, &cfg.fit.msd)?,
        None => Vec::new(),
    };
    if regions.is_empty() {
        log::warn!("{} has no decomposable interior", input.display());
    }
    for region in &regions {
        let file = format!("region_{:02}.obj", region.order_index);
        let mesh = extract_grid_surface(&distance_transform(&region.mask).0, 0.0);
        write_obj(&mesh, &out.join(&file))?;
        manifest.regions.push(RegionEntry {
            order: region.order_index,
            tau: region.tau,
            volume: region.volume,
            voxels: region.mask.count(),
            file,
        });
    }
    write_json(&manifest, &out.join("manifest.json"))?;
    Ok(manifest)
}

/// Writes the hard-mode surface of a saved assembly as OBJ.
pub fn cmd_export(
    assembly: &Path,
    out: &Path,
    resolution: usize,
    iso: f64,
) -> Result<TriangleMesh> {
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "export resolution must be at least 2, got {resolution}"
        )));
    }
    let mesh = assembly_mesh(&load_assembly(assembly)?, resolution, iso)?;
    write_obj(&mesh, out)?;
    Ok(mesh)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } | Error::NonFinite(_) => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "shape".into())
}

fn run_fit(args: &FitArgs) -> Result<()> {
    let cfg = args.config()?;
    if args.inputs.len() == 1 {
        cmd_fit(&args.inputs[0], &args.output, &cfg, args)?;
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<(PathBuf, Result<FitResult>)> = pool.install(|| {
        args.inputs
            .par_iter()
            .map(|input| {
                (
                    input.clone(),
                    cmd_fit(input, &args.output.join(stem(input)), &cfg, args),
                )
            })
            .collect()
    });
    let mut worst: Option<Error> = None;
    for (input, result) in results {
        if let Err(e) = result {
            log::error!("{}: {e}", input.display());
            if worst.as_ref().is_none_or(|w| exit_code(&e) > exit_code(w)) {
                worst = Some(e);
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    if !args.pairs.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter(
            "eval expects TARGET ASSEMBLY pairs".into(),
        ));
    }
    let cfg = args.config()?;
    let mut rows = Vec::new();
    for pair in args.pairs.chunks_exact(2) {
        rows.push((
            pair[1].display().to_string(),
            cmd_eval(&pair[0], &pair[1], &cfg)?,
        ));
    }
    let json = if rows.len() == 1 {
        rows[0].1.to_json()
    } else {
        let reports: Vec<&MetricsReport> = rows.iter().map(|r| &r.1).collect();
        serde_json::to_string_pretty(&reports)?
    };
    match &args.output {
        Some(path) => std::fs::write(path, &json)?,
        None => println!("{json}"),
    }
    if let Some(path) = &args.csv {
        write_csv(std::fs::File::create(path)?, &rows)?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Eval(args) => run_eval(args),
        Command::Decompose(args) => {
            let manifest = cmd_decompose(&args.input, &args.output, &args.config()?)?;
            log::info!("{} regions", manifest.regions.len());
            Ok(())
        }
        Command::Export(args) => {
            cmd_export(&args.assembly, &args.output, args.resolution, args.iso).map(|_| ())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("resfit").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config() {
        let cli = parse(&[
            "fit",
            "a.obj",
            "-o",
            "out",
            "--rounds",
            "2",
            "--msd-iters",
            "3",
            "--alpha",
            "0.01",
            "--lambda-count",
            "0.2",
            "--lambda-qual",
            "0.3",
            "--mode",
            "solid",
            "--seed",
            "9",
            "--resolution",
            "64",
            "--jobs",
            "2",
        ]);
        let Command::Fit(args) = &cli.command else {
            panic!("fit expected")
        };
        let cfg = args.config().unwrap();
        assert_eq!(cfg.fit.max_rounds, 2);
        assert_eq!(cfg.fit.msd.max_iterations, 3);
        assert_eq!(cfg.fit.alpha, 0.01);
        assert_eq!(cfg.fit.weights.lambda_count, 0.2);
        assert_eq!(cfg.fit.weights.lambda_qual, 0.3);
        assert_eq!(cfg.fit.mode, FitMode::Solid);
        assert_eq!((cfg.fit.seed, cfg.metrics.seed), (9, 9));
        assert_eq!((cfg.fit.resolution, cfg.jobs), (64, 2));
    }

    #[test]
    fn defaults_without_flags() {
        let cli = parse(&["fit", "a.obj", "-o", "out"]);
        let Command::Fit(args) = &cli.command else {
            panic!("fit expected")
        };
        assert_eq!(args.config().unwrap(), RunConfig::default());
    }

    #[test]
    fn invalid_values_are_input_errors() {
        let cli = parse(&["fit", "a.obj", "-o", "out", "--rounds", "0"]);
        let Command::Fit(args) = &cli.command else {
            panic!("fit expected")
        };
        assert_eq!(exit_code(&args.config().unwrap_err()), EXIT_INPUT);
        assert!(
            Cli::try_parse_from(["resfit", "fit", "a.obj", "-o", "o", "--mode", "hollow"]).is_err()
        );
        assert_eq!(
            exit_code(&Error::Divergence { restarts: 2 }),
            EXIT_NUMERICAL
        );
    }

    #[test]
    fn negative_iso_parses() {
        let cli = parse(&["export", "z.json", "-o", "z.obj", "--iso", "-0.01"]);
        let Command::Export(args) = &cli.command else {
            panic!("export expected")
        };
        assert_eq!(args.iso, -0.01);
    }
}
