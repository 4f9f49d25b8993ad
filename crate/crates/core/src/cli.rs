//! Command-line front end: argument types and the five subcommands.
//!
//! Every subcommand writes machine-readable artifacts (JSON or CSV) into
//! `--out-dir` and reports whether its own self-check passed; the binary maps
//! that to the exit code.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corridor::{hop_oracle_bfs, select_corridors, CorridorError, SearchConfig};
use crate::decomposition::{decompose, CuboidGraph, DecompositionConfig};
use crate::depth_fusion::{complete_depth, fit_scale, DepthImage, DepthPair, FusionConfig, Intrinsics};
use crate::exploration::run_exploration;
use crate::occupancy::{load_map, Cell, OccupancyGrid};
use crate::sim::{camera_pose, render_depth, CameraConfig, GroundTruthScene, HiddenWarp, MapSource, NoiseConfig, PerlinParams, Scenario, Simulator};
use crate::trajectory::{solve, verify, Limits, SolverConfig, Trajectory};
use crate::Vec3;

#[derive(Debug, Parser)]
#[command(name = "corridor-nav", version, about = "Cuboid corridor planning, depth fusion and exploration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map file to cuboid graph JSON and cover statistics.
    Decompose(DecomposeArgs),
    /// Map, start and goal to a verified trajectory with stage timings.
    Plan(PlanArgs),
    /// Relative and metric depth images to completed metric depth.
    Fuse(FuseArgs),
    /// Scenario file to an exploration report and coverage curve.
    Explore(ExploreArgs),
    /// Maps x trials timing and quality table.
    Bench(BenchArgs),
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON configuration; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Map file written by `save_map`; otherwise the config's `map`, else a
    /// seeded Perlin map.
    #[arg(long)]
    pub map: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Start position `x,y,z` in meters.
    #[arg(long, value_parser = parse_point)]
    pub start: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_point)]
    pub goal: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub common: Common,
    /// Relative inverse depth, `.dpth`.
    #[arg(long)]
    pub mono: Option<PathBuf>,
    /// Metric depth in mm, `.pgm` (16-bit) or `.dpth`.
    #[arg(long)]
    pub stereo: Option<PathBuf>,
    /// Render a synthetic pair into the output directory and fuse it.
    #[arg(long)]
    pub demo: bool,
}

#[derive(Clone, Debug, Args)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scenario JSON; `--config` is read as a scenario when this is absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub trials: Option<usize>,
}

/// What a subcommand produced and whether its self-check passed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub verified: bool,
    pub summary: serde_json::Value,
}

pub fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    <[f64; 3]>::try_from(v).map_err(|v| format!("expected x,y,z, got {} values", v.len()))
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)?)?;
    artifacts.push(path);
    Ok(())
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn seeded_perlin(seed: u64, dims: [usize; 3]) -> MapSource {
    MapSource::Perlin(PerlinParams { dims, seed: seed as u32, ..Default::default() })
}

fn resolve_map(file: Option<&Path>, configured: Option<&MapSource>, seed: u64) -> Result<OccupancyGrid> {
    if let Some(p) = file {
        return load_map(p).with_context(|| format!("loading map {}", p.display()));
    }
    let source = configured.cloned().unwrap_or_else(|| seeded_perlin(seed, [64, 64, 8]));
    Ok(source.build()?.grid().clone())
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Decompose(a) => run_decompose(&a),
        Command::Plan(a) => run_plan(&a),
        Command::Fuse(a) => run_fuse(&a),
        Command::Explore(a) => run_explore(&a),
        Command::Bench(a) => run_bench(&a),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeConfig {
    pub map: Option<MapSource>,
    pub decomposition: DecompositionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeStats {
    pub cuboids: usize,
    pub edges: usize,
    pub traversable_voxels: usize,
    pub covered_voxels: usize,
    pub coverage_pct: f64,
    pub wall_ms: f64,
}

/// Cover and obstacle-freedom check used as the subcommand's self-test.
pub fn check_cover(graph: &CuboidGraph, cfg: &DecompositionConfig) -> Result<(), String> {
    let grid = graph.grid();
    for (n, c) in graph.vertices().iter().enumerate() {
        for k in c.lo.k..=c.hi.k {
            for j in c.lo.j..=c.hi.j {
                for i in c.lo.i..=c.hi.i {
                    if cfg.unknown.blocks(grid.get(crate::occupancy::GridIndex::new(i, j, k))) {
                        return Err(format!("cuboid {n} contains a blocked voxel at ({i}, {j}, {k})"));
                    }
                }
            }
        }
    }
    for idx in grid.indices() {
        if !cfg.unknown.blocks(grid.get(idx)) && graph.first_coverer(idx).is_none() {
            return Err(format!("voxel {idx:?} is not covered"));
        }
    }
    Ok(())
}

pub fn run_decompose(a: &DecomposeArgs) -> Result<Outcome> {
    let cfg: DecomposeConfig = load_config(a.common.config.as_deref())?;
    let grid = resolve_map(a.map.as_deref(), cfg.map.as_ref(), a.common.seed)?;
    fs::create_dir_all(&a.common.out_dir)?;
    let clock = Instant::now();
    let graph = decompose(&grid, &cfg.decomposition);
    let wall_ms = ms(clock);
    let traversable = grid.cells().iter().filter(|&&c| !cfg.decomposition.unknown.blocks(c)).count();
    let stats = DecomposeStats {
        cuboids: graph.vertices().len(),
        edges: graph.edges().len(),
        traversable_voxels: traversable,
        covered_voxels: graph.covered_count(),
        coverage_pct: if traversable == 0 { 100.0 } else { 100.0 * graph.covered_count() as f64 / traversable as f64 },
        wall_ms,
    };
    let mut artifacts = Vec::new();
    write_json(&a.common.out_dir, "graph.json", &graph.to_export(), &mut artifacts)?;
    write_json(&a.common.out_dir, "stats.json", &stats, &mut artifacts)?;
    let check = check_cover(&graph, &cfg.decomposition);
    if let Err(e) = &check {
        eprintln!("self-check failed: {e}");
    }
    Ok(Outcome { artifacts, verified: check.is_ok(), summary: serde_json::to_value(&stats)? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub map: Option<MapSource>,
    pub start: Option<[f64; 3]>,
    pub goal: Option<[f64; 3]>,
    /// Obstacle inflation radius applied before decomposition, meters.
    pub inflation: f64,
    pub decomposition: DecompositionConfig,
    pub search: SearchConfig,
    pub solver: SolverConfig,
    pub limits: Limits,
    pub verify_samples: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            map: None,
            start: None,
            goal: None,
            inflation: 0.0,
            decomposition: DecompositionConfig::default(),
            search: SearchConfig::default(),
            solver: SolverConfig::default(),
            limits: Limits::default(),
            verify_samples: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub decomposition_ms: f64,
    pub corridor_ms: f64,
    pub optimization_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub cuboids: usize,
    pub corridor: Vec<usize>,
    pub hops: usize,
    pub segments: usize,
    pub total_time: f64,
    pub init_total_time: f64,
    pub iterations: usize,
    pub converged: bool,
    pub path_length: f64,
    pub timings: StageTimes,
    pub verify: crate::trajectory::VerifyReport,
    pub verified: bool,
}

/// Arc length of the position sampled at `rate_hz`.
pub fn path_length(traj: &Trajectory, rate_hz: f64) -> f64 {
    traj.sample(rate_hz).windows(2).map(|w| (w[1].1.position - w[0].1.position).norm()).sum()
}

#[derive(Debug)]
pub enum PipelineError {
    Corridor(CorridorError, StageTimes),
    Solver(crate::trajectory::TrajectoryError, StageTimes),
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipelineError::Corridor(CorridorError::GoalUnreachable, _) => write!(f, "GoalUnreachable: no cuboid chain reaches the goal"),
            PipelineError::Corridor(CorridorError::StartNotFree, _) => write!(f, "StartNotFree: the start lies outside free space"),
            PipelineError::Solver(e, _) => write!(f, "SolverFailure: {e}"),
        }
    }
}

impl std::error::Error for PipelineError {}

/// Decompose, search and solve, timing each stage.
pub fn plan_pipeline(grid: &OccupancyGrid, start: Vec3, goal: Vec3, cfg: &PlanConfig) -> Result<(PlanReport, Trajectory, CuboidGraph), PipelineError> {
    let mut times = StageTimes::default();
    let clock = Instant::now();
    let inflated;
    let grid = if cfg.inflation > 0.0 {
        inflated = grid.inflate(cfg.inflation);
        &inflated
    } else {
        grid
    };
    let graph = decompose(grid, &cfg.decomposition);
    times.decomposition_ms = ms(clock);
    let clock = Instant::now();
    let corridor = select_corridors(&graph, start, goal, &cfg.search);
    times.corridor_ms = ms(clock);
    let corridor = corridor.map_err(|e| PipelineError::Corridor(e, times))?;
    let clock = Instant::now();
    let rep = solve(&corridor, &crate::trajectory::Waypoint::at_rest(start), goal, &cfg.limits, &cfg.solver);
    times.optimization_ms = ms(clock);
    let rep = rep.map_err(|e| PipelineError::Solver(e, times))?;
    let check = verify(&rep.trajectory, &corridor, &cfg.limits, cfg.verify_samples);
    let report = PlanReport {
        cuboids: graph.vertices().len(),
        corridor: corridor.cuboids.clone(),
        hops: corridor.hops(),
        segments: rep.trajectory.segment_count(),
        total_time: rep.final_total_time,
        init_total_time: rep.init_total_time,
        iterations: rep.iterations,
        converged: rep.converged,
        path_length: path_length(&rep.trajectory, 100.0),
        timings: times,
        verify: check,
        verified: check.passes(cfg.solver.feas_eps),
    };
    Ok((report, rep.trajectory, graph))
}

pub fn run_plan(a: &PlanArgs) -> Result<Outcome> {
    let cfg: PlanConfig = load_config(a.common.config.as_deref())?;
    let grid = resolve_map(a.map.as_deref(), cfg.map.as_ref(), a.common.seed)?;
    let start = a.start.or(cfg.start).ok_or_else(|| anyhow!("no start given (--start or config)"))?;
    let goal = a.goal.or(cfg.goal).ok_or_else(|| anyhow!("no goal given (--goal or config)"))?;
    fs::create_dir_all(&a.common.out_dir)?;
    let (report, traj, _) = plan_pipeline(&grid, Vec3::from(start), Vec3::from(goal), &cfg)?;
    let mut artifacts = Vec::new();
    traj.export(&a.common.out_dir, "trajectory")?;
    artifacts.push(a.common.out_dir.join("trajectory.csv"));
    artifacts.push(a.common.out_dir.join("trajectory.json"));
    write_json(&a.common.out_dir, "plan.json", &report, &mut artifacts)?;
    Ok(Outcome { artifacts, verified: report.verified, summary: serde_json::to_value(&report)? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuseConfig {
    pub fusion: FusionConfig,
    /// Camera used for intrinsics and for `--demo` rendering.
    pub camera: CameraConfig,
    pub warp: HiddenWarp,
    pub noise: NoiseConfig,
}

impl Default for FuseConfig {
    fn default() -> Self {
        FuseConfig { fusion: FusionConfig::default(), camera: CameraConfig::default(), warp: HiddenWarp::default(), noise: NoiseConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuseReport {
    pub alpha2: f64,
    pub alpha1: f64,
    pub alpha0: f64,
    pub n_valid: usize,
    pub residual_rms: f64,
    pub completed_pixels: usize,
    pub wall_ms: f64,
    /// Median relative error against the rendered truth, `--demo` only.
    pub median_relative_error: Option<f64>,
}

fn read_depth(path: &Path) -> Result<DepthImage> {
    let img = match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => DepthImage::read_pgm_mm(path),
        _ => DepthImage::read_dpth(path),
    };
    img.with_context(|| format!("reading {}", path.display()))
}

fn demo_pair(cfg: &FuseConfig, seed: u64, dir: &Path) -> Result<(PathBuf, PathBuf, DepthImage)> {
    let scene = PerlinParams { dims: [64, 64, 12], threshold: 0.1, seed: seed as u32, ..Default::default() };
    let grid = crate::sim::perlin_columns(&scene);
    let start = crate::sim::open_start(&grid, 1.5, 0.5).ok_or_else(|| anyhow!("demo scene has no open spot"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let frame = render_depth(&grid, &camera_pose(start, yaw), &cfg.camera, &cfg.noise, &cfg.warp, &mut rng);
    let mono = dir.join("mono.dpth");
    let stereo = dir.join("stereo.pgm");
    frame.relative.write_dpth(&mono)?;
    frame.metric.write_pgm_mm(&stereo)?;
    frame.truth.write_pgm_mm(dir.join("truth.pgm"))?;
    Ok((mono, stereo, frame.truth))
}

pub fn run_fuse(a: &FuseArgs) -> Result<Outcome> {
    let cfg: FuseConfig = load_config(a.common.config.as_deref())?;
    let dir = &a.common.out_dir;
    fs::create_dir_all(dir)?;
    let mut artifacts = Vec::new();
    let (mono_path, stereo_path, truth) = if a.demo {
        let (m, s, t) = demo_pair(&cfg, a.common.seed, dir)?;
        artifacts.extend([m.clone(), s.clone(), dir.join("truth.pgm")]);
        (m, s, Some(t))
    } else {
        let m = a.mono.clone().ok_or_else(|| anyhow!("--mono is required without --demo"))?;
        let s = a.stereo.clone().ok_or_else(|| anyhow!("--stereo is required without --demo"))?;
        (m, s, None)
    };
    let mono = read_depth(&mono_path)?;
    let stereo = read_depth(&stereo_path)?;
    let intr = if mono.width == cfg.camera.width && mono.height == cfg.camera.height {
        cfg.camera.intrinsics()
    } else {
        Intrinsics::from_fov(mono.width, mono.height, cfg.camera.hfov_deg.to_radians())
    };
    let clock = Instant::now();
    let pair = DepthPair::new(mono, stereo, intr)?;
    let fit = fit_scale(&pair, &cfg.fusion)?;
    let completed = complete_depth(&pair, &fit, &cfg.fusion);
    let wall_ms = ms(clock);

    let median_relative_error = truth.map(|t| {
        let mut errs: Vec<f64> = (0..t.data.len())
            .filter(|&n| completed.valid[n] && cfg.fusion.stereo_valid(t.data[n]))
            .map(|n| (completed.depth_mm[n] - t.data[n]).abs() / t.data[n])
            .collect();
        errs.sort_by(f64::total_cmp);
        errs.get(errs.len() / 2).copied().unwrap_or(f64::INFINITY)
    });
    let out = completed.to_image();
    out.write_pgm_mm(dir.join("completed.pgm"))?;
    out.write_dpth(dir.join("completed.dpth"))?;
    artifacts.extend([dir.join("completed.pgm"), dir.join("completed.dpth")]);
    let report = FuseReport {
        alpha2: fit.alpha2,
        alpha1: fit.alpha1,
        alpha0: fit.alpha0,
        n_valid: fit.n_valid,
        residual_rms: fit.residual_rms,
        completed_pixels: completed.valid_count(),
        wall_ms,
        median_relative_error,
    };
    write_json(dir, "fit.json", &report, &mut artifacts)?;
    let verified = [fit.alpha2, fit.alpha1, fit.alpha0, fit.residual_rms].iter().all(|v| v.is_finite())
        && report.completed_pixels > 0
        && median_relative_error.is_none_or(|e| e < 0.02);
    Ok(Outcome { artifacts, verified, summary: serde_json::to_value(&report)? })
}

pub fn run_explore(a: &ExploreArgs) -> Result<Outcome> {
    let source = a.scenario.as_deref().or(a.common.config.as_deref());
    let mut scenario: Scenario = load_config(source)?;
    if let Some(t) = a.threshold {
        if !(t > 0.0 && t <= 1.0) {
            bail!("threshold must lie in (0, 1], got {t}");
        }
        scenario.exploration.threshold = t;
    }
    let seed = a.common.seed;
    if let MapSource::Perlin(p) = &mut scenario.map {
        if source.is_none() {
            p.seed = seed as u32;
        }
    }
    let (scene, start) = scenario.instantiate()?;
    fs::create_dir_all(&a.common.out_dir)?;
    let mut sim = Simulator::new(scene, start, scenario.yaw, scenario.sim.clone(), seed);
    let report = run_exploration(&mut sim, &scenario.exploration, seed);
    let mut artifacts = Vec::new();
    write_json(&a.common.out_dir, "report.json", &report, &mut artifacts)?;
    let csv_path = a.common.out_dir.join("coverage.csv");
    report.write_coverage_csv(File::create(&csv_path)?)?;
    artifacts.push(csv_path);
    let verified = report.collisions == 0 && report.coverage_is_monotone();
    let summary = serde_json::json!({
        "termination": report.termination,
        "final_fraction": report.final_fraction,
        "rounds": report.rounds,
        "path_length": report.path_length,
        "collisions": report.collisions,
        "wall_time_s": report.wall_time_s,
    });
    Ok(Outcome { artifacts, verified, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Maps to run; empty means five seeded 64 x 64 x 8 Perlin maps.
    pub maps: Vec<MapSource>,
    pub trials: usize,
    pub plan: PlanConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { maps: Vec::new(), trials: 10, plan: PlanConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub map: usize,
    pub trial: usize,
    pub status: String,
    pub hops: Option<usize>,
    pub bfs_hops: Option<usize>,
    pub segments: Option<usize>,
    pub path_length: Option<f64>,
    pub trajectory_time: Option<f64>,
    pub decomposition_ms: f64,
    pub corridor_ms: f64,
    pub optimization_ms: f64,
    pub verified: bool,
}

fn random_free_point(grid: &OccupancyGrid, rng: &mut ChaCha8Rng) -> Option<Vec3> {
    let free: Vec<usize> = (0..grid.len()).filter(|&n| grid.cell_at_linear(n) != Cell::Occupied).collect();
    if free.is_empty() {
        return None;
    }
    let n = free[rng.random_range(0..free.len())];
    Some(grid.index_to_center(grid.unlinear(n)))
}

/// Minimum BFS hop count from the corridor's start vertex to any goal cuboid.
fn bfs_hops(graph: &CuboidGraph, start: Vec3, goal: Vec3) -> Option<usize> {
    let s = *graph.covering_cuboids(start).ok()?.first()?;
    graph.covering_cuboids(goal).ok()?.into_iter().filter_map(|g| hop_oracle_bfs(graph, s, g).ok()).min()
}

pub fn bench_rows(cfg: &BenchConfig, seed: u64) -> Result<Vec<BenchRow>> {
    let maps: Vec<MapSource> = if cfg.maps.is_empty() {
        (0..5).map(|m| seeded_perlin(seed.wrapping_add(m), [64, 64, 8])).collect()
    } else {
        cfg.maps.clone()
    };
    let mut rows = Vec::new();
    for (m, source) in maps.iter().enumerate() {
        let scene: GroundTruthScene = source.build()?;
        let grid = if cfg.plan.inflation > 0.0 { scene.grid().inflate(cfg.plan.inflation) } else { scene.grid().clone() };
        let plan_cfg = PlanConfig { inflation: 0.0, ..cfg.plan.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((m as u64 + 1) << 32));
        for trial in 0..cfg.trials {
            let (Some(start), Some(goal)) = (random_free_point(&grid, &mut rng), random_free_point(&grid, &mut rng)) else {
                rows.push(BenchRow {
                    map: m,
                    trial,
                    status: "no_free_space".into(),
                    hops: None,
                    bfs_hops: None,
                    segments: None,
                    path_length: None,
                    trajectory_time: None,
                    decomposition_ms: 0.0,
                    corridor_ms: 0.0,
                    optimization_ms: 0.0,
                    verified: true,
                });
                continue;
            };
            let row = match plan_pipeline(&grid, start, goal, &plan_cfg) {
                Ok((r, _, graph)) => BenchRow {
                    map: m,
                    trial,
                    status: "ok".into(),
                    hops: Some(r.hops),
                    bfs_hops: bfs_hops(&graph, start, goal),
                    segments: Some(r.segments),
                    path_length: Some(r.path_length),
                    trajectory_time: Some(r.total_time),
                    decomposition_ms: r.timings.decomposition_ms,
                    corridor_ms: r.timings.corridor_ms,
                    optimization_ms: r.timings.optimization_ms,
                    verified: r.verified,
                },
                Err(e) => {
                    let (status, times, verified) = match &e {
                        PipelineError::Corridor(CorridorError::GoalUnreachable, t) => {
                            // Unreachable must agree with the oracle.
                            let graph = decompose(&grid, &plan_cfg.decomposition);
                            ("goal_unreachable", *t, bfs_hops(&graph, start, goal).is_none())
                        }
                        PipelineError::Corridor(CorridorError::StartNotFree, t) => ("start_not_free", *t, true),
                        PipelineError::Solver(_, t) => ("solver_failure", *t, false),
                    };
                    BenchRow {
                        map: m,
                        trial,
                        status: status.into(),
                        hops: None,
                        bfs_hops: None,
                        segments: None,
                        path_length: None,
                        trajectory_time: None,
                        decomposition_ms: times.decomposition_ms,
                        corridor_ms: times.corridor_ms,
                        optimization_ms: times.optimization_ms,
                        verified,
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn run_bench(a: &BenchArgs) -> Result<Outcome> {
    let mut cfg: BenchConfig = load_config(a.common.config.as_deref())?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    fs::create_dir_all(&a.common.out_dir)?;
    let rows = bench_rows(&cfg, a.common.seed)?;
    let path = a.common.out_dir.join("bench.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let maps = if cfg.maps.is_empty() { 5 } else { cfg.maps.len() };
    let hops_agree = rows.iter().filter(|r| r.status == "ok").all(|r| r.hops == r.bfs_hops);
    let timings_positive = rows.iter().filter(|r| r.status != "no_free_space").all(|r| r.decomposition_ms > 0.0 && r.corridor_ms > 0.0);
    let verified = rows.len() == maps * cfg.trials && hops_agree && timings_positive && rows.iter().all(|r| r.verified);
    let summary = serde_json::json!({
        "rows": rows.len(),
        "solved": rows.iter().filter(|r| r.status == "ok").count(),
        "hops_agree": hops_agree,
        "timings_positive": timings_positive,
    });
    Ok(Outcome { artifacts: vec![path], verified, summary })
}
