//! Next-best-view exploration over a viewed/unviewed voxel map.
//!
//! Viewed status is tracked separately from occupancy: a voxel is viewed once
//! its center has been inside the camera frustum with no occupied voxel of
//! the occupancy map between the camera and that center.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::CuboidGraph;
use crate::occupancy::{Cell, GridIndex, OccupancyGrid};
use crate::sim::{camera_pose, CameraConfig, LegOutcome, Simulator};
use crate::{Pose, Vec3};

/// Viewed flags over the declared exploration volume.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationMap {
    origin: Vec3,
    resolution: f64,
    dims: [usize; 3],
    viewed: Vec<bool>,
    viewed_count: usize,
}

impl ExplorationMap {
    pub fn new(origin: Vec3, resolution: f64, dims: [usize; 3]) -> Self {
        assert!(resolution > 0.0 && dims.iter().all(|&d| d > 0), "exploration volume must be non-empty");
        let n = dims[0] * dims[1] * dims[2];
        ExplorationMap { origin, resolution, dims, viewed: vec![false; n], viewed_count: 0 }
    }

    /// Covers the box `[lo, hi]` with voxels of side `resolution`.
    pub fn over_volume(lo: Vec3, hi: Vec3, resolution: f64) -> Self {
        let ext = hi - lo;
        let dims = [0, 1, 2].map(|ax| ((ext[ax] / resolution).round() as usize).max(1));
        Self::new(lo, resolution, dims)
    }

    /// Same bounds as `grid`, resampled at `resolution`.
    pub fn covering(grid: &OccupancyGrid, resolution: f64) -> Self {
        Self::over_volume(grid.origin(), grid.world_max(), resolution)
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn total(&self) -> usize {
        self.viewed.len()
    }

    pub fn viewed_count(&self) -> usize {
        self.viewed_count
    }

    pub fn fraction(&self) -> f64 {
        self.viewed_count as f64 / self.total() as f64
    }

    pub fn upper(&self) -> Vec3 {
        self.origin + Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.resolution
    }

    fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn is_viewed(&self, idx: GridIndex) -> bool {
        self.viewed[self.linear(idx.i, idx.j, idx.k)]
    }

    pub fn mark(&mut self, idx: GridIndex) -> bool {
        let n = self.linear(idx.i, idx.j, idx.k);
        let fresh = !self.viewed[n];
        if fresh {
            self.viewed[n] = true;
            self.viewed_count += 1;
        }
        fresh
    }

    pub fn center(&self, idx: GridIndex) -> Vec3 {
        self.origin + Vec3::new(idx.i as f64 + 0.5, idx.j as f64 + 0.5, idx.k as f64 + 0.5) * self.resolution
    }

    /// Unviewed voxels whose centers lie within `range` of `p`.
    fn unviewed_near(&self, p: Vec3, range: f64) -> Vec<GridIndex> {
        let lo = (p - Vec3::repeat(range) - self.origin) / self.resolution;
        let hi = (p + Vec3::repeat(range) - self.origin) / self.resolution;
        let span = |ax: usize| {
            let a = lo[ax].floor().max(0.0) as usize;
            let b = (hi[ax].ceil().max(0.0) as usize).min(self.dims[ax]);
            a..b
        };
        let mut out = Vec::new();
        for k in span(2) {
            for j in span(1) {
                for i in span(0) {
                    if self.viewed[self.linear(i, j, k)] {
                        continue;
                    }
                    let idx = GridIndex::new(i, j, k);
                    if (self.center(idx) - p).norm() <= range {
                        out.push(idx);
                    }
                }
            }
        }
        out
    }
}

/// True when an occupied voxel of `grid` lies on the segment `from -> to`,
/// other than the voxel that contains `to`.
pub fn segment_occluded(grid: &OccupancyGrid, from: Vec3, to: Vec3) -> bool {
    let target = grid.world_to_index(to);
    let mut blocked = false;
    grid.traverse(from, to, |idx, _| {
        if Some(idx) == target {
            return false;
        }
        if grid.get(idx) == Cell::Occupied {
            blocked = true;
            return false;
        }
        true
    });
    blocked
}

fn visible(pose: &Pose, cam: &CameraConfig, grid: &OccupancyGrid, p: Vec3) -> bool {
    let local = pose.inverse_transform_point(&nalgebra::Point3::from(p)).coords;
    cam.in_frustum(local) && !segment_occluded(grid, pose.translation.vector, p)
}

/// Marks every voxel seen from `pose` and returns how many were new.
pub fn update_viewed(map: &mut ExplorationMap, pose: &Pose, cam: &CameraConfig, grid: &OccupancyGrid) -> usize {
    let origin = pose.translation.vector;
    let mut fresh = 0;
    for idx in map.unviewed_near(origin, cam.max_range) {
        if visible(pose, cam, grid, map.center(idx)) {
            map.mark(idx);
            fresh += 1;
        }
    }
    fresh
}

/// Unviewed voxels `update_viewed` would mark from `pose`, without marking.
pub fn view_gain(map: &ExplorationMap, pose: &Pose, cam: &CameraConfig, grid: &OccupancyGrid) -> usize {
    let origin = pose.translation.vector;
    map.unviewed_near(origin, cam.max_range).into_iter().filter(|&idx| visible(pose, cam, grid, map.center(idx))).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub position: Vec3,
    pub yaw: f64,
    /// Unviewed voxels this pose would newly observe.
    pub gain: usize,
    /// Index of the candidate in the sample set.
    pub sample: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NbvConfig {
    pub candidates: usize,
    pub yaw_bins: usize,
    /// Candidates are kept this far inside the volume on every side.
    pub margin: f64,
}

impl Default for NbvConfig {
    fn default() -> Self {
        NbvConfig { candidates: 300, yaw_bins: 8, margin: 0.5 }
    }
}

fn bin_yaw(b: usize, bins: usize) -> f64 {
    crate::replan::wrap_angle(b as f64 * std::f64::consts::TAU / bins as f64)
}

/// Draws candidate positions uniformly inside the volume.
pub fn sample_candidates(map: &ExplorationMap, cfg: &NbvConfig, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = map.origin();
    let hi = map.upper();
    (0..cfg.candidates)
        .map(|_| {
            Vec3::from_fn(|ax, _| {
                let (a, b) = (lo[ax] + cfg.margin, hi[ax] - cfg.margin);
                if a < b { rng.random_range(a..b) } else { 0.5 * (lo[ax] + hi[ax]) }
            })
        })
        .collect()
}

/// Best yaw bin for a candidate at `p`: the visibility test of each unviewed
/// voxel's occlusion ray is shared across bins.
pub fn score_position(map: &ExplorationMap, grid: &OccupancyGrid, cam: &CameraConfig, p: Vec3, bins: usize) -> (f64, usize) {
    let poses: Vec<Pose> = (0..bins).map(|b| camera_pose(p, bin_yaw(b, bins))).collect();
    let mut gains = vec![0usize; bins];
    for idx in map.unviewed_near(p, cam.max_range) {
        let c = map.center(idx);
        let pt = nalgebra::Point3::from(c);
        let in_bins: Vec<usize> = (0..bins).filter(|&b| cam.in_frustum(poses[b].inverse_transform_point(&pt).coords)).collect();
        if in_bins.is_empty() || segment_occluded(grid, p, c) {
            continue;
        }
        for b in in_bins {
            gains[b] += 1;
        }
    }
    let best = (0..bins).fold(0, |best, b| if gains[b] > gains[best] { b } else { best });
    (bin_yaw(best, bins), gains[best])
}

/// Scores every candidate. Candidates rejected by `reachable` score zero.
pub fn score_candidates(
    map: &ExplorationMap,
    grid: &OccupancyGrid,
    cam: &CameraConfig,
    cfg: &NbvConfig,
    seed: u64,
    reachable: impl Fn(Vec3) -> bool,
) -> Vec<Viewpoint> {
    let bins = cfg.yaw_bins.max(1);
    sample_candidates(map, cfg, seed)
        .into_iter()
        .enumerate()
        .map(|(sample, position)| {
            let (yaw, gain) = if reachable(position) { score_position(map, grid, cam, position, bins) } else { (0.0, 0) };
            Viewpoint { position, yaw, gain, sample }
        })
        .collect()
}

/// Highest-gain candidate; ties go to the lowest sample index.
pub fn select_nbv(
    map: &ExplorationMap,
    grid: &OccupancyGrid,
    cam: &CameraConfig,
    cfg: &NbvConfig,
    seed: u64,
    reachable: impl Fn(Vec3) -> bool,
) -> Viewpoint {
    let scored = score_candidates(map, grid, cam, cfg, seed, reachable);
    let mut best = Viewpoint { position: 0.5 * (map.origin() + map.upper()), yaw: 0.0, gain: 0, sample: 0 };
    for (n, v) in scored.into_iter().enumerate() {
        if n == 0 || v.gain > best.gain {
            best = v;
        }
    }
    best
}

/// Vertices of `graph` connected to any cuboid covering `p`.
pub fn component_of(graph: &CuboidGraph, p: Vec3) -> Vec<bool> {
    let mut seen = vec![false; graph.vertices().len()];
    let mut stack: Vec<usize> = graph.covering_cuboids(p).unwrap_or_default();
    for &v in &stack {
        seen[v] = true;
    }
    while let Some(v) = stack.pop() {
        for &u in graph.neighbors(v) {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationConfig {
    /// Stop once this fraction of the volume has been viewed.
    pub threshold: f64,
    /// Side of an exploration voxel in meters.
    pub resolution: f64,
    pub nbv: NbvConfig,
    /// Consecutive rounds without a positive-gain candidate before giving up.
    pub zero_gain_rounds: usize,
    /// Consecutive rounds whose leg failed and viewed nothing new.
    pub stalled_rounds: usize,
    pub max_rounds: usize,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        ExplorationConfig { threshold: 0.6, resolution: 0.5, nbv: NbvConfig::default(), zero_gain_rounds: 3, stalled_rounds: 3, max_rounds: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Threshold,
    ZeroGain,
    Stalled,
    MaxRounds,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSample {
    pub t: f64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalRecord {
    pub round: usize,
    pub viewpoint: Viewpoint,
    pub outcome: Option<LegOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub threshold: f64,
    pub termination: Termination,
    pub rounds: usize,
    pub final_fraction: f64,
    pub viewed: usize,
    pub total: usize,
    pub path_length: f64,
    pub sim_time: f64,
    pub replans: usize,
    pub stops: usize,
    pub collisions: usize,
    pub goals: Vec<GoalRecord>,
    pub coverage: Vec<CoverageSample>,
    pub wall_time_s: f64,
}

impl ExplorationReport {
    pub fn coverage_is_monotone(&self) -> bool {
        self.coverage.windows(2).all(|w| w[1].fraction >= w[0].fraction && w[1].t >= w[0].t)
    }

    pub fn write_coverage_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "fraction"])?;
        for s in &self.coverage {
            w.write_record([s.t.to_string(), s.fraction.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Initial 360° scan, then rounds of select → fly → observe until the viewed
/// fraction reaches the threshold or progress runs out.
pub fn run_exploration(sim: &mut Simulator, cfg: &ExplorationConfig, seed: u64) -> ExplorationReport {
    let clock = Instant::now();
    let cam = sim.config().camera;
    let mut map = ExplorationMap::covering(sim.scene().grid(), cfg.resolution);
    let mut coverage = vec![CoverageSample { t: sim.state().time, fraction: 0.0 }];
    let mut goals = Vec::new();

    let observe = |t: f64, pose: &Pose, grid: &OccupancyGrid, map: &mut ExplorationMap, coverage: &mut Vec<CoverageSample>| {
        update_viewed(map, pose, &cam, grid);
        coverage.push(CoverageSample { t, fraction: map.fraction() });
    };

    sim.scan_360(&mut |t, pose, grid| observe(t, pose, grid, &mut map, &mut coverage));

    let mut zero = 0;
    let mut stalled = 0;
    let mut round = 0;
    let termination = loop {
        if map.fraction() >= cfg.threshold {
            break Termination::Threshold;
        }
        if round >= cfg.max_rounds {
            break Termination::MaxRounds;
        }
        round += 1;
        let here = sim.state().position;
        let graph = sim.planning_graph(here);
        let component = component_of(&graph, here);
        let reachable = |p: Vec3| graph.covering_cuboids(p).is_ok_and(|c| c.iter().any(|&v| component[v]));
        let round_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(round as u64);
        let vp = select_nbv(&map, sim.map(), &cam, &cfg.nbv, round_seed, reachable);
        if vp.gain == 0 {
            goals.push(GoalRecord { round, viewpoint: vp, outcome: None });
            zero += 1;
            if zero >= cfg.zero_gain_rounds {
                break Termination::ZeroGain;
            }
            continue;
        }
        zero = 0;
        let before = map.viewed_count();
        let outcome = sim.navigate_to(vp.position, &mut |t, pose, grid| observe(t, pose, grid, &mut map, &mut coverage));
        if outcome == LegOutcome::Arrived {
            sim.turn_to(vp.yaw, &mut |t, pose, grid| observe(t, pose, grid, &mut map, &mut coverage));
        }
        if outcome != LegOutcome::Arrived && map.viewed_count() == before {
            stalled += 1;
        } else {
            stalled = 0;
        }
        goals.push(GoalRecord { round, viewpoint: vp, outcome: Some(outcome) });
        if stalled >= cfg.stalled_rounds {
            break Termination::Stalled;
        }
    };

    ExplorationReport {
        threshold: cfg.threshold,
        termination,
        rounds: round,
        final_fraction: map.fraction(),
        viewed: map.viewed_count(),
        total: map.total(),
        path_length: sim.stats.path_length,
        sim_time: sim.state().time,
        replans: sim.stats.replans,
        stops: sim.stats.stops,
        collisions: sim.stats.collisions,
        goals,
        coverage,
        wall_time_s: clock.elapsed().as_secs_f64(),
    }
}
