//! Continue/replan/stop supervision and the yaw reference.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corridor::{select_corridors_from, Corridor, CorridorError, SearchConfig};
use crate::decomposition::CuboidGraph;
use crate::occupancy::{Cell, OccupancyGrid};
use crate::trajectory::{solve_with_cancel, verify, Limits, SolverConfig, Trajectory, TrajectoryError, Waypoint};
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplanConfig {
    /// Look-ahead checked for collisions, in seconds.
    pub horizon: f64,
    /// Sampling step of the collision check.
    pub dt: f64,
    /// Supervisor rate.
    pub rate_hz: f64,
    pub limits: Limits,
    pub search: SearchConfig,
    pub solver: SolverConfig,
    /// Dense samples used to verify a replacement trajectory.
    pub verify_samples: usize,
    /// Covering cuboids of the start tried before giving up.
    pub max_start_cuboids: usize,
}

impl Default for ReplanConfig {
    fn default() -> Self {
        ReplanConfig {
            horizon: 10.0,
            dt: 0.05,
            rate_hz: 20.0,
            limits: Limits::default(),
            search: SearchConfig::default(),
            solver: SolverConfig::default(),
            verify_samples: 2000,
            max_start_cuboids: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StartNotFree,
    GoalUnreachable,
    SolverFailure(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlanAction {
    Continue,
    Replan { trajectory: Trajectory, corridor: Corridor },
    Stop(StopReason),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanDecision {
    pub action: PlanAction,
    /// Checked time window on the old trajectory.
    pub horizon: (f64, f64),
    pub first_collision: Option<f64>,
    /// Wall time spent replanning, when a replan was attempted.
    pub latency_ms: Option<f64>,
}

impl PlanDecision {
    pub fn label(&self) -> &'static str {
        match self.action {
            PlanAction::Continue => "continue",
            PlanAction::Replan { .. } => "replan",
            PlanAction::Stop(_) => "stop",
        }
    }
}

fn blocked(grid: &OccupancyGrid, p: Vec3) -> bool {
    match grid.world_to_index(p) {
        Some(idx) => grid.get(idx) == Cell::Occupied,
        None => true,
    }
}

/// First time in `[t0, t1]`, sampled every `dt` plus the end, at which the
/// trajectory is in an occupied voxel or outside the map.
pub fn first_collision(traj: &Trajectory, grid: &OccupancyGrid, t0: f64, t1: f64, dt: f64) -> Option<f64> {
    let n = ((t1 - t0) / dt).floor().max(0.0) as usize;
    (0..=n)
        .map(|k| t0 + k as f64 * dt)
        .chain(std::iter::once(t1))
        .find(|&t| blocked(grid, traj.evaluate_clamped(t).position))
}

/// Plans from `start` to `goal`, trying each cuboid that covers the start.
pub fn plan_from(
    graph: &CuboidGraph,
    start: &Waypoint,
    goal: Vec3,
    cfg: &ReplanConfig,
    cancel: &AtomicBool,
) -> Result<(Trajectory, Corridor), StopReason> {
    let starts = graph.covering_cuboids(start.position).map_err(|_| StopReason::StartNotFree)?;
    if starts.is_empty() {
        return Err(StopReason::StartNotFree);
    }
    let mut last = StopReason::GoalUnreachable;
    for &sv in starts.iter().take(cfg.max_start_cuboids.max(1)) {
        let corridor = match select_corridors_from(graph, sv, goal, &cfg.search) {
            Ok(c) => c,
            Err(CorridorError::GoalUnreachable) => return Err(StopReason::GoalUnreachable),
            Err(CorridorError::StartNotFree) => return Err(StopReason::StartNotFree),
        };
        match solve_with_cancel(&corridor, start, goal, &cfg.limits, &cfg.solver, cancel) {
            Ok(rep) => {
                let check = verify(&rep.trajectory, &corridor, &cfg.limits, cfg.verify_samples);
                if check.passes(cfg.solver.feas_eps) {
                    return Ok((rep.trajectory, corridor));
                }
                last = StopReason::SolverFailure("solution failed verification".into());
            }
            Err(TrajectoryError::Cancelled) => return Err(StopReason::SolverFailure("cancelled".into())),
            Err(e) => last = StopReason::SolverFailure(e.to_string()),
        }
    }
    Err(last)
}

/// One supervisor tick: keep the plan if the next `horizon` seconds are
/// clear, otherwise plan again from the commanded state at `t_now`.
pub fn check_and_replan(
    traj: &Trajectory,
    t_now: f64,
    grid: &OccupancyGrid,
    graph: &CuboidGraph,
    goal: Vec3,
    cfg: &ReplanConfig,
) -> PlanDecision {
    supervise(traj, t_now, grid, goal, cfg, |_| Cow::Borrowed(graph))
}

/// As [`check_and_replan`], building the cuboid graph only when a replan is
/// needed. `make_graph` receives the commanded start position.
pub fn supervise<'g, F>(traj: &Trajectory, t_now: f64, grid: &OccupancyGrid, goal: Vec3, cfg: &ReplanConfig, make_graph: F) -> PlanDecision
where
    F: FnOnce(Vec3) -> Cow<'g, CuboidGraph>,
{
    let t0 = t_now.clamp(0.0, traj.total_time());
    let t1 = (t0 + cfg.horizon).min(traj.total_time());
    let hit = first_collision(traj, grid, t0, t1, cfg.dt);
    if hit.is_none() {
        return PlanDecision { action: PlanAction::Continue, horizon: (t0, t1), first_collision: None, latency_ms: None };
    }
    let clock = Instant::now();
    let s = traj.evaluate_clamped(t0);
    let start = Waypoint { position: s.position, velocity: s.velocity, acceleration: s.acceleration };
    let graph = make_graph(start.position);
    let action = match plan_from(&graph, &start, goal, cfg, &AtomicBool::new(false)) {
        Ok((trajectory, corridor)) => PlanAction::Replan { trajectory, corridor },
        Err(reason) => PlanAction::Stop(reason),
    };
    let latency_ms = Some(clock.elapsed().as_secs_f64() * 1e3);
    PlanDecision { action, horizon: (t0, t1), first_collision: hit, latency_ms }
}

/// Shared handle to the trajectory currently being tracked. Readers take a
/// cheap snapshot; the supervisor swaps in replacements atomically.
#[derive(Debug, Default)]
pub struct ActivePlan {
    inner: Mutex<Option<Arc<Trajectory>>>,
}

impl ActivePlan {
    pub fn new(traj: Trajectory) -> Self {
        ActivePlan { inner: Mutex::new(Some(Arc::new(traj))) }
    }

    pub fn snapshot(&self) -> Option<Arc<Trajectory>> {
        self.inner.lock().expect("plan lock").clone()
    }

    pub fn swap(&self, traj: Option<Trajectory>) -> Option<Arc<Trajectory>> {
        std::mem::replace(&mut *self.inner.lock().expect("plan lock"), traj.map(Arc::new))
    }
}

#[derive(Serialize)]
struct LogLine<'a> {
    t: f64,
    decision: &'a str,
    horizon: [f64; 2],
    first_collision: Option<f64>,
    latency_ms: Option<f64>,
    reason: Option<&'a StopReason>,
}

/// Appends one JSON object per decision.
pub fn log_decision<W: Write>(out: &mut W, t: f64, d: &PlanDecision) -> std::io::Result<()> {
    let reason = match &d.action {
        PlanAction::Stop(r) => Some(r),
        _ => None,
    };
    let line = LogLine { t, decision: d.label(), horizon: [d.horizon.0, d.horizon.1], first_collision: d.first_collision, latency_ms: d.latency_ms, reason };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YawCommand {
    pub yaw: f64,
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Desired yaw: hold while nearly hovering, otherwise turn toward the
/// horizontal velocity by at most `max_step`.
pub fn yaw_reference(current: f64, vx: f64, vy: f64, max_step: f64) -> YawCommand {
    if vx.abs() < 0.1 && vy.abs() < 0.1 {
        return YawCommand { yaw: wrap_angle(current) };
    }
    let heading = vy.atan2(vx);
    let err = wrap_angle(heading - current);
    let yaw = if err > max_step {
        wrap_angle(current + max_step)
    } else if err < -max_step {
        wrap_angle(current - max_step)
    } else {
        heading
    };
    YawCommand { yaw }
}
