//! Corridor selection: the fewest-cuboid chain linking a start and a goal.
//!
//! Every edge costs one hop. The heuristic is the metric distance from the
//! goal to the nearest point of a cuboid divided by the grid diagonal: one hop
//! never advances more than a cuboid diameter, which is at most the diagonal,
//! so the scaled heuristic never overestimates the remaining hop count.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::CuboidGraph;
use crate::Vec3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// Distance divided by the grid diagonal; admissible for hop counts.
    #[default]
    ScaledDistance,
    /// Raw metric distance; can overestimate hop counts on small maps.
    MetricDistance,
    /// No heuristic; plain uniform-cost search.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub heuristic: Heuristic,
    /// Margin subtracted from every side of each corridor box, in meters.
    pub clearance: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { heuristic: Heuristic::ScaledDistance, clearance: 0.0 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorridorError {
    #[error("start position is not inside any free cuboid")]
    StartNotFree,
    #[error("goal cannot be reached through the cuboid graph")]
    GoalUnreachable,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("goal vertex is unreachable from the start vertex")]
pub struct Unreachable;

/// Ordered cuboid chain with the box each trajectory segment must stay in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub cuboids: Vec<usize>,
    pub lower: Vec<Vec3>,
    pub upper: Vec<Vec3>,
}

impl Corridor {
    /// Builds a corridor from explicit boxes, without a backing graph.
    pub fn from_boxes(boxes: Vec<(Vec3, Vec3)>) -> Self {
        let cuboids = (0..boxes.len()).collect();
        let (lower, upper) = boxes.into_iter().unzip();
        Corridor { cuboids, lower, upper }
    }

    pub fn len(&self) -> usize {
        self.cuboids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuboids.is_empty()
    }

    /// Hops between the first and last cuboid.
    pub fn hops(&self) -> usize {
        self.cuboids.len().saturating_sub(1)
    }

    pub fn contains(&self, n: usize, p: Vec3) -> bool {
        (0..3).all(|ax| p[ax] >= self.lower[n][ax] && p[ax] <= self.upper[n][ax])
    }

    /// Closed intersection of boxes `n` and `n + 1`.
    pub fn junction(&self, n: usize) -> Option<(Vec3, Vec3)> {
        let lo = self.lower[n].zip_map(&self.lower[n + 1], f64::max);
        let hi = self.upper[n].zip_map(&self.upper[n + 1], f64::min);
        (0..3).all(|ax| lo[ax] <= hi[ax]).then_some((lo, hi))
    }
}

fn heuristic(graph: &CuboidGraph, v: usize, goal: Vec3, kind: Heuristic, diag: f64) -> f64 {
    match kind {
        Heuristic::Zero => 0.0,
        Heuristic::MetricDistance => graph.vertices()[v].distance_to(goal),
        Heuristic::ScaledDistance => graph.vertices()[v].distance_to(goal) / diag,
    }
}

/// A* from the lowest-index cuboid containing `start` to any cuboid
/// containing `goal`.
pub fn select_corridors(graph: &CuboidGraph, start: Vec3, goal: Vec3, cfg: &SearchConfig) -> Result<Corridor, CorridorError> {
    let starts = graph.covering_cuboids(start).map_err(|_| CorridorError::StartNotFree)?;
    let &first = starts.first().ok_or(CorridorError::StartNotFree)?;
    select_corridors_from(graph, first, goal, cfg)
}

/// A* from an explicit start cuboid.
pub fn select_corridors_from(graph: &CuboidGraph, start_vertex: usize, goal: Vec3, cfg: &SearchConfig) -> Result<Corridor, CorridorError> {
    let goals = graph.covering_cuboids(goal).map_err(|_| CorridorError::GoalUnreachable)?;
    if goals.is_empty() {
        return Err(CorridorError::GoalUnreachable);
    }
    let n = graph.vertices().len();
    let mut is_goal = vec![false; n];
    for &g in &goals {
        is_goal[g] = true;
    }
    let diag = graph.grid().diagonal();

    let mut best = vec![usize::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    // Min-heap on (f, h, vertex); ties resolve to the lower vertex index.
    let mut open = BinaryHeap::new();
    best[start_vertex] = 0;
    let h0 = heuristic(graph, start_vertex, goal, cfg.heuristic, diag);
    open.push(Reverse((OrderedFloat(h0), OrderedFloat(h0), start_vertex)));

    while let Some(Reverse((_, _, v))) = open.pop() {
        if closed[v] {
            continue;
        }
        closed[v] = true;
        if is_goal[v] {
            let mut chain = vec![v];
            let mut cur = v;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                chain.push(cur);
            }
            chain.reverse();
            return Ok(build_corridor(graph, chain, cfg.clearance));
        }
        let g_next = best[v] + 1;
        for &u in graph.neighbors(v) {
            if closed[u] || g_next >= best[u] {
                continue;
            }
            best[u] = g_next;
            parent[u] = v;
            let h = heuristic(graph, u, goal, cfg.heuristic, diag);
            open.push(Reverse((OrderedFloat(g_next as f64 + h), OrderedFloat(h), u)));
        }
    }
    Err(CorridorError::GoalUnreachable)
}

fn build_corridor(graph: &CuboidGraph, cuboids: Vec<usize>, clearance: f64) -> Corridor {
    let shrink = Vec3::repeat(clearance.max(0.0));
    let mut lower = Vec::with_capacity(cuboids.len());
    let mut upper = Vec::with_capacity(cuboids.len());
    for &c in &cuboids {
        let v = &graph.vertices()[c];
        let mut lo = v.min + shrink;
        let mut hi = v.max - shrink;
        for ax in 0..3 {
            if lo[ax] > hi[ax] {
                let mid = 0.5 * (v.min[ax] + v.max[ax]);
                lo[ax] = mid;
                hi[ax] = mid;
            }
        }
        lower.push(lo);
        upper.push(hi);
    }
    Corridor { cuboids, lower, upper }
}

/// Breadth-first hop count between two vertices.
pub fn hop_oracle_bfs(graph: &CuboidGraph, start_vertex: usize, goal_vertex: usize) -> Result<usize, Unreachable> {
    let n = graph.vertices().len();
    if start_vertex >= n || goal_vertex >= n {
        return Err(Unreachable);
    }
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::from([start_vertex]);
    dist[start_vertex] = 0;
    while let Some(v) = queue.pop_front() {
        if v == goal_vertex {
            return Ok(dist[v]);
        }
        for &u in graph.neighbors(v) {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    Err(Unreachable)
}
