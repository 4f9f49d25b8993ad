use serde::{Deserialize, Serialize};

use super::spline::{Limits, Waypoint};
use super::TrajectoryError;
use crate::corridor::Corridor;
use crate::Vec3;

/// Straight-line initial guess through the corridor junctions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Initialization {
    pub waypoints: Vec<Waypoint>,
    pub durations: Vec<f64>,
    /// Corridor box index of each segment.
    pub segment_box: Vec<usize>,
}

impl Initialization {
    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }
}

/// Pass-through points of the straight-line guess: the start, the centre of
/// each junction between consecutive boxes, and the goal.
fn anchor_points(corridor: &Corridor, start: Vec3, goal: Vec3) -> Result<Vec<Vec3>, TrajectoryError> {
    if corridor.is_empty() {
        return Err(TrajectoryError::EmptyCorridor);
    }
    let mut pts = vec![start];
    for n in 0..corridor.len() - 1 {
        let (lo, hi) = corridor
            .junction(n)
            .ok_or_else(|| TrajectoryError::Mismatch(format!("corridor boxes {n} and {} do not touch", n + 1)))?;
        pts.push(0.5 * (lo + hi));
    }
    pts.push(goal);
    Ok(pts)
}

fn line_duration(a: Vec3, b: Vec3, limits: &Limits, t_min: f64) -> f64 {
    ((b - a).norm() / limits.max_velocity.norm()).max(t_min)
}

/// Straight-line initialization with one segment per corridor box.
///
/// Interior waypoints sit at the centre of each junction with zero velocity
/// and acceleration; durations are the straight-line distance over the norm
/// of the velocity limit, floored at 1 ms.
pub fn initialize(corridor: &Corridor, start: &Waypoint, goal: Vec3, limits: &Limits) -> Result<Initialization, TrajectoryError> {
    let pts = anchor_points(corridor, start.position, goal)?;
    let mut waypoints: Vec<Waypoint> = pts.iter().map(|&p| Waypoint::at_rest(p)).collect();
    waypoints[0] = *start;
    let durations = pts.windows(2).map(|w| line_duration(w[0], w[1], limits, 1e-3)).collect();
    Ok(Initialization { waypoints, durations, segment_box: (0..corridor.len()).collect() })
}

/// How many spline segments each corridor box receives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub per_box: Vec<usize>,
}

impl SegmentPlan {
    pub fn total(&self) -> usize {
        self.per_box.iter().sum()
    }

    pub fn segment_box(&self) -> Vec<usize> {
        self.per_box.iter().enumerate().flat_map(|(n, &k)| std::iter::repeat_n(n, k)).collect()
    }
}

/// Splits the corridor into at least `min_segments` segments, adding extra
/// segments to the boxes with the longest straight-line stretch per segment.
/// A start at rest on the goal keeps a single segment.
pub fn plan_segments(corridor: &Corridor, start: &Waypoint, goal: Vec3, min_segments: usize) -> Result<SegmentPlan, TrajectoryError> {
    let pts = anchor_points(corridor, start.position, goal)?;
    let lengths: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let mut per_box = vec![1; corridor.len()];
    let degenerate = start.is_at_rest() && lengths.iter().all(|&l| l == 0.0);
    if degenerate {
        return Ok(SegmentPlan { per_box });
    }
    while per_box.iter().sum::<usize>() < min_segments {
        let mut pick = 0;
        let mut best = f64::NEG_INFINITY;
        for (n, (&l, &k)) in lengths.iter().zip(&per_box).enumerate() {
            let score = l / k as f64;
            if score > best {
                best = score;
                pick = n;
            }
        }
        per_box[pick] += 1;
    }
    Ok(SegmentPlan { per_box })
}

/// Subdivided straight-line guess whose rest-to-rest segments already meet
/// the velocity and acceleration control-point bounds.
///
/// A rest-to-rest quintic over distance `d` has velocity control points up to
/// `5d/t` and acceleration control points up to `20d/t²`, so stretching each
/// duration past both bounds (times `margin`) makes every such segment
/// strictly feasible. Only a non-rest start can still violate a bound.
pub(crate) fn feasible_initialization(
    corridor: &Corridor,
    start: &Waypoint,
    goal: Vec3,
    limits: &Limits,
    plan: &SegmentPlan,
    t_min: f64,
    margin: f64,
) -> Result<Initialization, TrajectoryError> {
    let pts = anchor_points(corridor, start.position, goal)?;
    let mut waypoints = vec![*start];
    let mut durations = Vec::new();
    for (n, &k) in plan.per_box.iter().enumerate() {
        for s in 1..=k {
            let p = pts[n] + (pts[n + 1] - pts[n]) * (s as f64 / k as f64);
            let prev = waypoints.last().unwrap().position;
            let mut t = line_duration(prev, p, limits, t_min);
            for ax in 0..3 {
                let d = (p[ax] - prev[ax]).abs();
                t = t.max(margin * 5.0 * d / limits.max_velocity[ax]);
                t = t.max(margin * (20.0 * d / limits.max_acceleration[ax]).sqrt());
            }
            durations.push(t.max(2.0 * t_min));
            waypoints.push(Waypoint::at_rest(p));
        }
    }
    Ok(Initialization { waypoints, durations, segment_box: plan.segment_box() })
}
