//! Closed loop: sense, fuse, map, supervise, fly.

use std::borrow::Cow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::{camera_pose, render_depth, CameraConfig, HiddenWarp, NoiseConfig, RenderedFrame};
use super::scene::GroundTruthScene;
use super::vehicle::{step, ActiveTrajectory, VehicleConfig, VehicleState};
use crate::decomposition::{decompose, CuboidGraph, DecompositionConfig, LayerSpec};
use crate::depth_fusion::{complete_depth, depth_to_points, fit_scale, CompletedDepth, DepthPair, FusionConfig};
use crate::occupancy::{Cell, GridIndex, OccupancyGrid};
use crate::replan::{plan_from, supervise, PlanAction, PlanDecision, ReplanConfig, StopReason};
use crate::trajectory::Waypoint;
use crate::{Pose, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub camera: CameraConfig,
    pub noise: NoiseConfig,
    pub warp: HiddenWarp,
    pub fusion: FusionConfig,
    /// Obstacle inflation radius in meters.
    pub inflation: f64,
    /// Inflation-only voxels within this radius of the vehicle are cleared
    /// before planning so the vehicle can always find its own cuboid.
    pub start_bubble: f64,
    /// Unknown voxels closer than this to the vehicle, outside the start
    /// bubble and outside its current planning layer, are treated as
    /// obstacles by the supervisor and the planner. The camera cannot see
    /// steeply above or below, so without this the vehicle may climb or dive
    /// into space it has never observed.
    pub known_radius: f64,
    pub dt: f64,
    /// Sense once every this many control steps.
    pub sense_every: usize,
    /// Planning layer thickness in voxels.
    pub layer_thickness: usize,
    pub replan: ReplanConfig,
    pub vehicle: VehicleConfig,
    /// Simulated seconds allowed for one leg.
    pub leg_timeout: f64,
    /// After a stop the vehicle hovers and plans again from rest this many
    /// times before giving up on the leg.
    pub stop_retries: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            camera: CameraConfig::default(),
            noise: NoiseConfig::default(),
            warp: HiddenWarp::default(),
            fusion: FusionConfig::default(),
            inflation: 0.3,
            start_bubble: 0.5,
            known_radius: 1.5,
            dt: 0.05,
            sense_every: 4,
            layer_thickness: 4,
            replan: ReplanConfig::default(),
            vehicle: VehicleConfig::default(),
            leg_timeout: 120.0,
            stop_retries: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    /// Control steps whose true position was inside a ground-truth obstacle.
    pub collisions: usize,
    pub replans: usize,
    pub stops: usize,
    pub plan_failures: usize,
    pub frames: usize,
    pub path_length: f64,
    pub decisions: Vec<DecisionRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: f64,
    pub decision: String,
    pub first_collision: Option<f64>,
    pub latency_ms: Option<f64>,
    pub position: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub enum TickOutcome {
    Flying,
    Replanned,
    Arrived,
    Stopped(StopReason),
    Idle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegOutcome {
    Arrived,
    /// The first plan for the leg could not be made.
    NoPlan(StopReason),
    /// A replan failed in flight and the vehicle stopped.
    Stopped(StopReason),
    Timeout,
}

/// Called after every sensing step with the sim time, the camera pose and the
/// online map.
pub type SenseObserver<'a> = dyn FnMut(f64, &Pose, &OccupancyGrid) + 'a;

pub struct Simulator {
    scene: GroundTruthScene,
    cfg: SimConfig,
    map: OccupancyGrid,
    planning: OccupancyGrid,
    stencil: Vec<[i64; 3]>,
    state: VehicleState,
    active: Option<ActiveTrajectory>,
    goal: Option<Vec3>,
    rng: ChaCha8Rng,
    ticks: usize,
    pub stats: SimStats,
}

impl Simulator {
    pub fn new(scene: GroundTruthScene, start: Vec3, yaw: f64, cfg: SimConfig, seed: u64) -> Self {
        let g = scene.grid();
        let map = OccupancyGrid::new(g.origin(), g.resolution(), g.dims(), Cell::Unknown).expect("scene geometry");
        let mut planning = map.clone();
        for idx in map.indices() {
            if Self::is_shell(&map, idx) {
                planning.set(idx, Cell::Occupied);
            }
        }
        let stencil = map.inflation_stencil(cfg.inflation);
        Simulator {
            scene,
            cfg,
            map,
            planning,
            stencil,
            state: VehicleState::at_rest(start, yaw),
            active: None,
            goal: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ticks: 0,
            stats: SimStats::default(),
        }
    }

    fn is_shell(g: &OccupancyGrid, idx: GridIndex) -> bool {
        let [nx, ny, nz] = g.dims();
        idx.i == 0 || idx.j == 0 || idx.k == 0 || idx.i + 1 == nx || idx.j + 1 == ny || idx.k + 1 == nz
    }

    pub fn scene(&self) -> &GroundTruthScene {
        &self.scene
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Occupancy built from the camera so far.
    pub fn map(&self) -> &OccupancyGrid {
        &self.map
    }

    /// Inflated map with a one-voxel occupied shell at the volume boundary.
    pub fn planning_map(&self) -> &OccupancyGrid {
        &self.planning
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn active(&self) -> Option<&ActiveTrajectory> {
        self.active.as_ref()
    }

    pub fn decomposition_config(&self) -> DecompositionConfig {
        let nz = self.map.dims()[2];
        let t = self.cfg.layer_thickness.max(1);
        let layers = if nz < 3 {
            LayerSpec::Single
        } else {
            let mut bands = vec![[0, 0]];
            let mut k = 1;
            while k < nz - 1 {
                let top = (k + t - 1).min(nz - 2);
                bands.push([k, top]);
                k = top + 1;
            }
            bands.push([nz - 1, nz - 1]);
            LayerSpec::Bands(bands)
        };
        DecompositionConfig { layers, ..Default::default() }
    }

    /// Planning map with unknown voxels in the shell between the start bubble
    /// and `known_radius` around `at`, in other layers than `at`, marked
    /// occupied.
    pub fn guarded_planning(&self, at: Vec3) -> OccupancyGrid {
        let mut g = self.planning.clone();
        let (r0, r1) = (self.cfg.start_bubble, self.cfg.known_radius);
        let Some(center) = g.world_to_index(at) else {
            return g;
        };
        if r1 <= r0 {
            return g;
        }
        let [nx, ny, nz] = g.dims();
        let band = self
            .decomposition_config()
            .layers
            .resolve(nz)
            .into_iter()
            .find(|b| (b[0]..=b[1]).contains(&center.k))
            .unwrap_or([0, nz - 1]);
        let reach = (r1 / g.resolution()).ceil() as i64;
        for dk in -reach..=reach {
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    let (i, j, k) = (center.i as i64 + di, center.j as i64 + dj, center.k as i64 + dk);
                    if i < 0 || j < 0 || k < 0 || i >= nx as i64 || j >= ny as i64 || k >= nz as i64 {
                        continue;
                    }
                    let idx = GridIndex::new(i as usize, j as usize, k as usize);
                    let d = (g.index_to_center(idx) - at).norm();
                    let other_layer = idx.k < band[0] || idx.k > band[1];
                    if other_layer && d > r0 && d <= r1 && g.get(idx) == Cell::Unknown {
                        g.set(idx, Cell::Occupied);
                    }
                }
            }
        }
        g
    }

    /// Cuboid graph of the planning map with the start bubble around `at`.
    pub fn planning_graph(&self, at: Vec3) -> CuboidGraph {
        let mut g = self.guarded_planning(at);
        let r = self.cfg.start_bubble;
        if let Some(center) = g.world_to_index(at) {
            let reach = (r / g.resolution()).ceil() as i64;
            let [nx, ny, nz] = g.dims();
            for dk in -reach..=reach {
                for dj in -reach..=reach {
                    for di in -reach..=reach {
                        let (i, j, k) = (center.i as i64 + di, center.j as i64 + dj, center.k as i64 + dk);
                        if i < 0 || j < 0 || k < 0 || i >= nx as i64 || j >= ny as i64 || k >= nz as i64 {
                            continue;
                        }
                        let idx = GridIndex::new(i as usize, j as usize, k as usize);
                        if (g.index_to_center(idx) - at).norm() > r || Self::is_shell(&g, idx) {
                            continue;
                        }
                        if g.get(idx) == Cell::Occupied && self.map.get(idx) != Cell::Occupied {
                            g.set(idx, self.map.get(idx));
                        }
                    }
                }
            }
        }
        decompose(&g, &self.decomposition_config())
    }

    fn fuse(&self, frame: &RenderedFrame) -> CompletedDepth {
        let intr = self.cfg.camera.intrinsics();
        let fused = DepthPair::new(frame.relative.clone(), frame.metric.clone(), intr)
            .ok()
            .and_then(|pair| fit_scale(&pair, &self.cfg.fusion).ok().map(|fit| complete_depth(&pair, &fit, &self.cfg.fusion)));
        fused.unwrap_or_else(|| {
            // Too little stereo to fit: keep only the trusted stereo pixels.
            let valid: Vec<bool> = frame.metric.data.iter().map(|&d| self.cfg.fusion.stereo_valid(d)).collect();
            CompletedDepth { width: frame.metric.width, height: frame.metric.height, depth_mm: frame.metric.data.clone(), valid }
        })
    }

    /// Renders, fuses and integrates one frame from the current pose.
    pub fn sense(&mut self, observer: &mut SenseObserver<'_>) -> Pose {
        let pose = camera_pose(self.state.position, self.state.yaw);
        let frame = render_depth(self.scene.grid(), &pose, &self.cfg.camera, &self.cfg.noise, &self.cfg.warp, &mut self.rng);
        let mut depth = self.fuse(&frame);
        // Misses carry no relative depth; never turn them into points.
        for (ok, &m) in depth.valid.iter_mut().zip(&frame.relative.data) {
            *ok &= m > 0.0;
        }
        let points = depth_to_points(&depth, &self.cfg.camera.intrinsics(), &pose);
        let delta = self.map.integrate_pointcloud_mut(pose.translation.vector, &points);
        for n in delta.newly_occupied {
            self.planning.stamp(self.map.unlinear(n), &self.stencil);
        }
        for n in delta.newly_free {
            if self.planning.cell_at_linear(n) == Cell::Unknown {
                self.planning.set_linear(n, Cell::Free);
            }
        }
        self.stats.frames += 1;
        observer(self.state.time, &pose, &self.map);
        pose
    }

    /// Turns in place through a full circle, sensing at each heading.
    pub fn scan_360(&mut self, observer: &mut SenseObserver<'_>) {
        let steps = 8;
        let yaw0 = self.state.yaw;
        for s in 0..steps {
            self.state.yaw = crate::replan::wrap_angle(yaw0 + s as f64 * std::f64::consts::TAU / steps as f64);
            self.sense(observer);
            self.state.time += 0.25;
        }
        self.state.yaw = yaw0;
    }

    /// Rotates in place toward `yaw` at the vehicle's yaw rate, sensing after
    /// every step.
    pub fn turn_to(&mut self, yaw: f64, observer: &mut SenseObserver<'_>) {
        let max_step = self.cfg.vehicle.max_yaw_step.max(1e-3);
        loop {
            let err = crate::replan::wrap_angle(yaw - self.state.yaw);
            if err.abs() < 1e-9 {
                break;
            }
            self.state.yaw = crate::replan::wrap_angle(self.state.yaw + err.clamp(-max_step, max_step));
            self.state.time += self.cfg.dt;
            self.sense(observer);
        }
    }

    fn record(&mut self, d: &PlanDecision) {
        self.stats.decisions.push(DecisionRecord {
            t: self.state.time,
            decision: d.label().to_string(),
            first_collision: d.first_collision,
            latency_ms: d.latency_ms,
            position: self.state.position.into(),
        });
    }

    fn hover(&mut self) {
        self.active = None;
        self.state.velocity = Vec3::zeros();
        self.state.acceleration = Vec3::zeros();
    }

    /// Plans from the current commanded state to `goal`.
    pub fn plan_to(&mut self, goal: Vec3) -> Result<(), StopReason> {
        let start = Waypoint { position: self.state.reference, velocity: self.state.velocity, acceleration: self.state.acceleration };
        let graph = self.planning_graph(start.position);
        let cancel = std::sync::atomic::AtomicBool::new(false);
        match plan_from(&graph, &start, goal, &self.cfg.replan, &cancel) {
            Ok((trajectory, _)) => {
                self.active = Some(ActiveTrajectory { trajectory, start_time: self.state.time });
                self.goal = Some(goal);
                Ok(())
            }
            Err(r) => {
                self.stats.plan_failures += 1;
                Err(r)
            }
        }
    }

    /// One control step: optional sensing, the supervisor check, then motion.
    pub fn tick(&mut self, observer: &mut SenseObserver<'_>) -> TickOutcome {
        if self.ticks % self.cfg.sense_every.max(1) == 0 {
            self.sense(observer);
        }
        self.ticks += 1;
        let (Some(active), Some(goal)) = (self.active.clone(), self.goal) else {
            self.state.time += self.cfg.dt;
            return TickOutcome::Idle;
        };

        let mut outcome = TickOutcome::Flying;
        let t_local = active.local_time(self.state.time);
        let guarded = self.guarded_planning(self.state.reference);
        let decision = supervise(&active.trajectory, t_local, &guarded, goal, &self.cfg.replan, |at| {
            Cow::Owned(self.planning_graph(at))
        });
        let active = match decision.action.clone() {
            PlanAction::Continue => active,
            PlanAction::Replan { trajectory, .. } => {
                self.record(&decision);
                self.stats.replans += 1;
                outcome = TickOutcome::Replanned;
                let a = ActiveTrajectory { trajectory, start_time: self.state.time };
                self.active = Some(a.clone());
                a
            }
            PlanAction::Stop(reason) => {
                self.record(&decision);
                self.stats.stops += 1;
                self.hover();
                self.state.time += self.cfg.dt;
                return TickOutcome::Stopped(reason);
            }
        };

        let before = self.state;
        self.state = step(&before, &active, self.cfg.dt, &self.cfg.vehicle, &mut self.rng);
        self.stats.path_length += (self.state.position - before.position).norm();
        let sub = 5;
        let hit = (1..=sub).any(|k| {
            let t = active.local_time(before.time + self.cfg.dt * k as f64 / sub as f64);
            let offset = self.state.position - self.state.reference;
            self.scene.is_collision(active.trajectory.evaluate_clamped(t).position + offset)
        });
        if hit {
            self.stats.collisions += 1;
        }
        if active.finished(self.state.time) {
            self.hover();
            return TickOutcome::Arrived;
        }
        outcome
    }

    /// Plans to `goal` and flies until arrival, a failed replan or the leg
    /// timeout.
    pub fn navigate_to(&mut self, goal: Vec3, observer: &mut SenseObserver<'_>) -> LegOutcome {
        if self.plan_to(goal).is_err() {
            // Nothing reachable through observed space yet: look around once.
            self.scan_360(observer);
            if let Err(r) = self.plan_to(goal) {
                return LegOutcome::NoPlan(r);
            }
        }
        let t_start = self.state.time;
        let mut retries = 0;
        loop {
            if self.state.time - t_start > self.cfg.leg_timeout {
                self.hover();
                return LegOutcome::Timeout;
            }
            match self.tick(observer) {
                TickOutcome::Arrived => return LegOutcome::Arrived,
                TickOutcome::Stopped(r) => {
                    if retries >= self.cfg.stop_retries {
                        return LegOutcome::Stopped(r);
                    }
                    retries += 1;
                    self.scan_360(observer);
                    if let Err(r) = self.plan_to(goal) {
                        return LegOutcome::Stopped(r);
                    }
                }
                TickOutcome::Idle => return LegOutcome::Stopped(StopReason::SolverFailure("no active plan".into())),
                TickOutcome::Flying | TickOutcome::Replanned => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scene::{dead_end, hallway, perlin_columns, PerlinParams};

    fn quiet() -> SimConfig {
        SimConfig { noise: NoiseConfig::off(), warp: HiddenWarp::IDENTITY, ..Default::default() }
    }

    #[test]
    fn identity_warp_without_noise_maps_observed_voxels_exactly() {
        let p = PerlinParams { dims: [48, 48, 8], seed: 5, threshold: 0.0, keep_clear: vec![(Vec3::new(6.0, 6.0, 1.0), 1.0)], ..Default::default() };
        let scene = GroundTruthScene::new(perlin_columns(&p));
        let mut sim = Simulator::new(scene, Vec3::new(6.0, 6.0, 1.0), 0.0, quiet(), 0);
        sim.scan_360(&mut |_, _, _| {});
        let truth = sim.scene().grid();
        let mut observed = 0;
        for idx in sim.map().indices() {
            match sim.map().get(idx) {
                Cell::Unknown => {}
                c => {
                    observed += 1;
                    assert_eq!(c, truth.get(idx), "voxel {idx:?}");
                }
            }
        }
        assert!(observed > 200);
        assert!(sim.map().count(Cell::Occupied) > 50);
    }

    #[test]
    fn hallway_flight_arrives_without_collisions() {
        let scene = GroundTruthScene::new(hallway(12.0, 0.25));
        let mut sim = Simulator::new(scene, Vec3::new(1.0, 1.0, 1.0), 0.0, SimConfig::default(), 1);
        let out = sim.navigate_to(Vec3::new(11.0, 1.0, 1.0), &mut |_, _, _| {});
        assert_eq!(out, LegOutcome::Arrived);
        assert_eq!(sim.stats.collisions, 0);
        assert!((sim.state().position - Vec3::new(11.0, 1.0, 1.0)).norm() < 1e-6);
        assert!(sim.stats.path_length > 9.9);
    }

    #[test]
    fn dead_end_is_escaped_by_replanning() {
        let d = dead_end(0.25);
        let scene = GroundTruthScene::new(d.grid.clone());
        let mut sim = Simulator::new(scene, d.start, 0.0, SimConfig::default(), 2);
        let out = sim.navigate_to(d.goal, &mut |_, _, _| {});
        assert_eq!(out, LegOutcome::Arrived, "{:?}", sim.stats.decisions);
        assert_eq!(sim.stats.collisions, 0);
        assert!(sim.stats.replans >= 1);
        assert!((sim.state().position - d.goal).norm() < 1e-6);
    }
}
