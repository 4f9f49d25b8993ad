//! Log-barrier interior-point solver for the minimum-time problem.
//!
//! Variables are the free waypoint components and the segment durations.
//! Each constraint is one control point of one segment on one axis, written as
//! `Σ_k P_k(t) x_k` with `P_k` a polynomial in `t` and `1/t`, which gives
//! exact first and second derivatives. Every accepted phase-2 iterate is
//! strictly inside all bounds, so stopping early still yields a safe spline.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bernstein::{control_rows, ControlRow, RowKind};
use super::init::{feasible_initialization, plan_segments, Initialization};
use super::spline::{Limits, Trajectory, Waypoint};
use super::TrajectoryError;
use crate::corridor::Corridor;
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Minimum number of spline segments; long boxes are split so the
    /// rest-to-rest junctions do not dominate the total time.
    pub min_segments: usize,
    pub t_min: f64,
    pub feas_eps: f64,
    /// Relative duality-gap target.
    pub gap_tol: f64,
    /// Newton iterations per phase.
    pub max_iterations: usize,
    pub mu_factor: f64,
    /// Stretch applied to the rest-to-rest initialization.
    pub init_margin: f64,
    /// Extra segments the first box may receive when no strictly feasible
    /// start is found.
    pub start_splits: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            min_segments: 4,
            t_min: 1e-3,
            feas_eps: 1e-6,
            gap_tol: 1e-7,
            max_iterations: 500,
            mu_factor: 0.2,
            init_margin: 1.1,
            start_splits: 3,
        }
    }
}

/// Sizes of the optimization problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDims {
    pub segments: usize,
    /// Position, velocity and acceleration at every junction, per axis.
    pub waypoint_vars_per_axis: usize,
    pub duration_vars: usize,
    /// Bernstein coefficients the same spline would need per axis.
    pub coefficients_per_axis: usize,
    /// Variables left after fixing boundary conditions and zero-width junctions.
    pub free_vars: usize,
    /// Control-point rows handled by the barrier.
    pub barrier_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    pub init_total_time: f64,
    pub final_total_time: f64,
    pub phase1_iterations: usize,
    pub iterations: usize,
    /// False when the iteration budget ran out before the gap target.
    pub converged: bool,
    pub dims: ProblemDims,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Fixed(f64),
    Free(usize),
}

#[derive(Clone, Copy, Debug)]
struct ActiveRow {
    seg: usize,
    axis: usize,
    row: usize,
    lo: f64,
    hi: f64,
    scale: f64,
}

struct Problem {
    rows: Vec<ControlRow>,
    slots: Vec<[[Slot; 3]; 3]>,
    n_wp: usize,
    nseg: usize,
    active: Vec<ActiveRow>,
    t_min: f64,
    t_max: f64,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Problem {
    fn n(&self) -> usize {
        self.n_wp + self.nseg
    }

    fn local(&self, x: &[f64], seg: usize, axis: usize) -> ([f64; 6], [Option<usize>; 6]) {
        let mut vals = [0.0; 6];
        let mut idx = [None; 6];
        for k in 0..6 {
            match self.slots[seg + k / 3][axis][k % 3] {
                Slot::Fixed(v) => vals[k] = v,
                Slot::Free(i) => {
                    vals[k] = x[i];
                    idx[k] = Some(i);
                }
            }
        }
        (vals, idx)
    }

    fn barrier_terms(&self) -> usize {
        2 * self.active.len() + 2 * self.nseg
    }

    /// Objective plus `mu` times the log barrier. `sigma` is the phase-1
    /// shift variable stored after the regular ones. Returns `None` outside
    /// the strict interior.
    fn evaluate(&self, x: &[f64], mu: f64, phase1: bool, derivs: bool) -> Option<Eval> {
        let n = self.n() + phase1 as usize;
        let sigma = if phase1 { x[self.n()] } else { 0.0 };
        let mut value = if phase1 { sigma } else { x[self.n_wp..self.n()].iter().sum() };
        let mut grad = DVector::zeros(if derivs { n } else { 0 });
        let mut hess = DMatrix::zeros(if derivs { n } else { 0 }, if derivs { n } else { 0 });
        if derivs {
            if phase1 {
                grad[self.n()] = 1.0;
            } else {
                for i in self.n_wp..self.n() {
                    grad[i] = 1.0;
                }
            }
        }

        for s in 0..self.nseg {
            let ti = self.n_wp + s;
            let t = x[ti];
            let a = t - self.t_min;
            let b = self.t_max - t;
            if !(a > 0.0 && b > 0.0) {
                return None;
            }
            value -= mu * (a.ln() + b.ln());
            if derivs {
                grad[ti] += mu * (-1.0 / a + 1.0 / b);
                hess[(ti, ti)] += mu * (1.0 / (a * a) + 1.0 / (b * b));
            }
        }

        // Gradient of one row: up to six waypoint entries and the duration.
        let mut gi = [0usize; 8];
        let mut gv = [0.0f64; 8];
        for r in &self.active {
            let ti = self.n_wp + r.seg;
            let t = x[ti];
            let (vals, idx) = self.local(x, r.seg, r.axis);
            let row = &self.rows[r.row];
            let mut g = 0.0;
            let mut dg_dt = 0.0;
            let mut d2g_dt2 = 0.0;
            let mut cnt = 0;
            let mut mixed = [0.0; 6];
            for k in 0..6 {
                if row.terms[k].is_zero() {
                    continue;
                }
                let (p, p1, p2) = row.terms[k].eval3(t);
                g += p * vals[k];
                dg_dt += p1 * vals[k];
                d2g_dt2 += p2 * vals[k];
                mixed[k] = p1;
                if let Some(i) = idx[k] {
                    gi[cnt] = i;
                    gv[cnt] = p / r.scale;
                    cnt += 1;
                }
            }
            gi[cnt] = ti;
            gv[cnt] = dg_dt / r.scale;
            cnt += 1;
            if phase1 {
                gi[cnt] = self.n();
                gv[cnt] = 1.0;
                cnt += 1;
            }

            let lo = (g - r.lo) / r.scale + sigma;
            let hi = (r.hi - g) / r.scale + sigma;
            if !(lo > 0.0 && hi > 0.0) {
                return None;
            }
            value -= mu * (lo.ln() + hi.ln());
            if !derivs {
                continue;
            }
            // d(lo)/dx = ∇g/scale (+1 for σ), d(hi)/dx = -∇g/scale (+1 for σ).
            for a in 0..cnt {
                let is_sigma = phase1 && a == cnt - 1;
                let dlo = gv[a];
                let dhi = if is_sigma { 1.0 } else { -gv[a] };
                grad[gi[a]] += mu * (-dlo / lo - dhi / hi);
                for b in 0..cnt {
                    let is_sigma_b = phase1 && b == cnt - 1;
                    let dlo_b = gv[b];
                    let dhi_b = if is_sigma_b { 1.0 } else { -gv[b] };
                    hess[(gi[a], gi[b])] += mu * (dlo * dlo_b / (lo * lo) + dhi * dhi_b / (hi * hi));
                }
            }
            // Curvature of g itself: only the duration couples nonlinearly.
            let w = mu * (-1.0 / lo + 1.0 / hi) / r.scale;
            hess[(ti, ti)] += w * d2g_dt2;
            for k in 0..6 {
                if let Some(i) = idx[k] {
                    if mixed[k] != 0.0 {
                        hess[(i, ti)] += w * mixed[k];
                        hess[(ti, i)] += w * mixed[k];
                    }
                }
            }
        }
        Some(Eval { value, grad, hess })
    }

    fn objective(&self, x: &[f64]) -> f64 {
        x[self.n_wp..self.n()].iter().sum()
    }

    fn min_slack(&self, x: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for r in &self.active {
            let (vals, _) = self.local(x, r.seg, r.axis);
            let g = self.rows[r.row].eval(&vals, x[self.n_wp + r.seg]);
            m = m.min((g - r.lo) / r.scale).min((r.hi - g) / r.scale);
        }
        m
    }

    fn to_trajectory(&self, x: &[f64], segment_box: Vec<usize>) -> Result<Trajectory, TrajectoryError> {
        let mut wps = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            let mut w = Waypoint::default();
            for ax in 0..3 {
                let get = |s: Slot| match s {
                    Slot::Fixed(v) => v,
                    Slot::Free(i) => x[i],
                };
                w.position[ax] = get(slot[ax][0]);
                w.velocity[ax] = get(slot[ax][1]);
                w.acceleration[ax] = get(slot[ax][2]);
            }
            wps.push(w);
        }
        Trajectory::new(wps, x[self.n_wp..self.n()].to_vec(), segment_box)
    }
}

fn newton_direction(e: &Eval) -> Option<DVector<f64>> {
    // Symmetric Jacobi scaling first, so the shift below is relative to each
    // variable's own curvature rather than to the stiffest barrier term.
    let n = e.grad.len();
    let d = DVector::from_fn(n, |i, _| 1.0 / e.hess[(i, i)].abs().max(1e-12).sqrt());
    let scaled = DMatrix::from_fn(n, n, |i, j| e.hess[(i, j)] * d[i] * d[j]);
    let g = e.grad.component_mul(&d);
    let mut delta = 0.0;
    for _ in 0..16 {
        let mut h = scaled.clone();
        for i in 0..n {
            h[(i, i)] += delta;
        }
        if let Some(ch) = h.cholesky() {
            return Some(-ch.solve(&g).component_mul(&d));
        }
        delta = if delta == 0.0 { 1e-8 } else { delta * 10.0 };
    }
    None
}

enum StepOutcome {
    Converged,
    Moved,
    Stalled,
}

fn newton_step(p: &Problem, x: &mut DVector<f64>, mu: f64, phase1: bool) -> StepOutcome {
    let e = match p.evaluate(x.as_slice(), mu, phase1, true) {
        Some(e) => e,
        None => return StepOutcome::Stalled,
    };
    let dir = match newton_direction(&e) {
        Some(d) => d,
        None => return StepOutcome::Stalled,
    };
    let slope = e.grad.dot(&dir);
    if slope >= 0.0 || -slope * 0.5 <= 1e-10 * (1.0 + e.value.abs()) {
        return StepOutcome::Converged;
    }
    let mut alpha = 1.0;
    while alpha > 1e-14 {
        let trial = &*x + &dir * alpha;
        if let Some(t) = p.evaluate(trial.as_slice(), mu, phase1, false) {
            if t.value <= e.value + 1e-4 * alpha * slope {
                let mut best = (trial, t.value);
                // Barrier curvature fades as slacks open up, so a full step
                // can be far too short; keep doubling while it still pays.
                if alpha == 1.0 {
                    for _ in 0..20 {
                        alpha *= 2.0;
                        let longer = &*x + &dir * alpha;
                        match p.evaluate(longer.as_slice(), mu, phase1, false) {
                            Some(l) if l.value < best.1 => best = (longer, l.value),
                            _ => break,
                        }
                    }
                }
                *x = best.0;
                return StepOutcome::Moved;
            }
        }
        alpha *= 0.5;
    }
    StepOutcome::Stalled
}

/// Minimum-time spline from `start` to `goal` (at rest) through the corridor.
pub fn solve(corridor: &Corridor, start: &Waypoint, goal: Vec3, limits: &Limits, cfg: &SolverConfig) -> Result<SolveReport, TrajectoryError> {
    solve_with_cancel(corridor, start, goal, limits, cfg, &AtomicBool::new(false))
}

/// As [`solve`], checking `cancel` between Newton iterations.
pub fn solve_with_cancel(
    corridor: &Corridor,
    start: &Waypoint,
    goal: Vec3,
    limits: &Limits,
    cfg: &SolverConfig,
    cancel: &AtomicBool,
) -> Result<SolveReport, TrajectoryError> {
    if corridor.is_empty() {
        return Err(TrajectoryError::EmptyCorridor);
    }
    check_start(corridor, start, goal, limits, cfg.feas_eps)?;
    let mut plan = plan_segments(corridor, start, goal, cfg.min_segments)?;
    // A moving start can need room to turn around inside the first box that
    // one segment's hull cannot give; split that box further before giving up.
    let mut attempt = 0;
    let (problem, mut x, init, dims, phase1_iterations) = loop {
        let init = feasible_initialization(corridor, start, goal, limits, &plan, cfg.t_min, cfg.init_margin)?;
        let (problem, mut x) = build_problem(corridor, &init, limits, cfg)?;
        let dims = ProblemDims {
            segments: problem.nseg,
            waypoint_vars_per_axis: 3 * (problem.nseg + 1),
            duration_vars: problem.nseg,
            coefficients_per_axis: 6 * problem.nseg,
            free_vars: problem.n(),
            barrier_rows: problem.active.len(),
        };
        if problem.min_slack(x.as_slice()) > 0.0 {
            break (problem, x, init, dims, 0);
        }
        match phase_one(&problem, &mut x, cfg, cancel) {
            Ok(it) => break (problem, x, init, dims, it),
            Err(TrajectoryError::SolverFailure(_)) if attempt < cfg.start_splits => {
                attempt += 1;
                plan.per_box[0] += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let init_x = x.clone();
    let init_total_time = problem.objective(x.as_slice());

    let m = problem.barrier_terms() as f64;
    let mut mu = init_total_time / m;
    let mut iterations = 0;
    let mut converged = false;
    'outer: while iterations < cfg.max_iterations {
        loop {
            if cancel.load(Ordering::Relaxed) {
                return Err(TrajectoryError::Cancelled);
            }
            if iterations >= cfg.max_iterations {
                break 'outer;
            }
            iterations += 1;
            match newton_step(&problem, &mut x, mu, false) {
                StepOutcome::Moved => continue,
                StepOutcome::Converged | StepOutcome::Stalled => break,
            }
        }
        if m * mu <= cfg.gap_tol * problem.objective(x.as_slice()).max(cfg.t_min) {
            converged = true;
            break;
        }
        mu *= cfg.mu_factor;
    }

    let mut final_total_time = problem.objective(x.as_slice());
    if final_total_time > init_total_time {
        x = init_x;
        final_total_time = init_total_time;
    }
    let trajectory = problem.to_trajectory(x.as_slice(), init.segment_box.clone())?;
    Ok(SolveReport { trajectory, init_total_time, final_total_time, phase1_iterations, iterations, converged, dims })
}

/// Drives the most violated control point inside its bounds by minimizing a
/// common slack shift `σ`.
fn phase_one(p: &Problem, x: &mut DVector<f64>, cfg: &SolverConfig, cancel: &AtomicBool) -> Result<usize, TrajectoryError> {
    let target = -1e-2;
    let sigma0 = 1.0 - p.min_slack(x.as_slice());
    let mut z = DVector::from_iterator(p.n() + 1, x.iter().copied().chain(std::iter::once(sigma0)));
    let m = p.barrier_terms() as f64;
    let mut mu = (sigma0 + 1.0) / m;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        loop {
            if cancel.load(Ordering::Relaxed) {
                return Err(TrajectoryError::Cancelled);
            }
            if iterations >= cfg.max_iterations {
                break;
            }
            iterations += 1;
            let outcome = newton_step(p, &mut z, mu, true);
            if z[p.n()] < target {
                x.copy_from(&z.rows(0, p.n()));
                return Ok(iterations);
            }
            if !matches!(outcome, StepOutcome::Moved) {
                break;
            }
        }
        if m * mu < 1e-12 {
            break;
        }
        mu *= cfg.mu_factor;
    }
    let xs = z.rows(0, p.n()).into_owned();
    if p.min_slack(xs.as_slice()) > 0.0 {
        x.copy_from(&xs);
        return Ok(iterations);
    }
    Err(TrajectoryError::SolverFailure("no strictly feasible spline found for this corridor and start state".into()))
}

fn check_start(corridor: &Corridor, start: &Waypoint, goal: Vec3, limits: &Limits, eps: f64) -> Result<(), TrajectoryError> {
    for ax in 0..3 {
        let p = start.position[ax];
        if p < corridor.lower[0][ax] - eps || p > corridor.upper[0][ax] + eps {
            return Err(TrajectoryError::InfeasibleStart(format!("position {p} outside the first box on axis {ax}")));
        }
        if start.velocity[ax].abs() > limits.max_velocity[ax] + eps {
            return Err(TrajectoryError::InfeasibleStart(format!("velocity {} over the limit on axis {ax}", start.velocity[ax])));
        }
        if start.acceleration[ax].abs() > limits.max_acceleration[ax] + eps {
            return Err(TrajectoryError::InfeasibleStart(format!(
                "acceleration {} over the limit on axis {ax}",
                start.acceleration[ax]
            )));
        }
        let last = corridor.len() - 1;
        let g = goal[ax];
        if g < corridor.lower[last][ax] - eps || g > corridor.upper[last][ax] + eps {
            return Err(TrajectoryError::SolverFailure(format!("goal outside the last box on axis {ax}")));
        }
    }
    if !start.position.iter().chain(start.velocity.iter()).chain(start.acceleration.iter()).all(|v| v.is_finite()) {
        return Err(TrajectoryError::InfeasibleStart("non-finite start state".into()));
    }
    Ok(())
}

/// Builds variable slots and barrier rows. Boundary waypoints are fixed;
/// interior positions on a zero-width junction axis are fixed at that value.
/// Rows that do not depend on any variable are checked once here instead.
fn build_problem(
    corridor: &Corridor,
    init: &Initialization,
    limits: &Limits,
    cfg: &SolverConfig,
) -> Result<(Problem, DVector<f64>), TrajectoryError> {
    let nseg = init.durations.len();
    let nwp = nseg + 1;
    let width_eps = 1e-9;
    let boxes: Vec<(Vec3, Vec3)> = init.segment_box.iter().map(|&b| (corridor.lower[b], corridor.upper[b])).collect();

    let mut slots = vec![[[Slot::Fixed(0.0); 3]; 3]; nwp];
    let mut x0 = Vec::new();
    for (j, slot) in slots.iter_mut().enumerate() {
        for ax in 0..3 {
            let w = init.waypoints[j];
            let vals = [w.position[ax], w.velocity[ax], w.acceleration[ax]];
            if j == 0 || j == nwp - 1 {
                slot[ax] = vals.map(Slot::Fixed);
                continue;
            }
            let (pb, nb) = (boxes[j - 1], boxes[j]);
            let lo = pb.0[ax].max(nb.0[ax]);
            let hi = pb.1[ax].min(nb.1[ax]);
            let thin_box = pb.1[ax] - pb.0[ax] <= width_eps || nb.1[ax] - nb.0[ax] <= width_eps;
            if thin_box {
                slot[ax] = [Slot::Fixed(0.5 * (lo + hi)), Slot::Fixed(0.0), Slot::Fixed(0.0)];
                continue;
            }
            for c in 0..3 {
                if c == 0 && hi - lo <= width_eps {
                    slot[ax][c] = Slot::Fixed(0.5 * (lo + hi));
                } else {
                    slot[ax][c] = Slot::Free(x0.len());
                    x0.push(vals[c]);
                }
            }
        }
    }
    let n_wp = x0.len();
    x0.extend(init.durations.iter().copied());
    let t_max = 10.0 * init.total_time() + 10.0;

    let rows = control_rows();
    let mut problem = Problem { rows, slots, n_wp, nseg, active: Vec::new(), t_min: cfg.t_min, t_max };
    let mut active = Vec::new();
    for seg in 0..nseg {
        let (blo, bhi) = boxes[seg];
        for ax in 0..3 {
            let (vals, idx) = problem.local(&x0, seg, ax);
            for (r, row) in problem.rows.iter().enumerate() {
                let (lo, hi, scale) = match row.kind {
                    RowKind::Position => (blo[ax], bhi[ax], (bhi[ax] - blo[ax]).max(1e-3)),
                    RowKind::Velocity => (-limits.max_velocity[ax], limits.max_velocity[ax], limits.max_velocity[ax]),
                    RowKind::Acceleration => {
                        (-limits.max_acceleration[ax], limits.max_acceleration[ax], limits.max_acceleration[ax])
                    }
                };
                let depends_on_free = (0..6).any(|k| idx[k].is_some() && !row.terms[k].is_zero());
                // Coefficients of t^e for the fixed part; anything off t^0 means
                // the row still moves with the duration.
                let mut poly = [0.0; 5];
                for k in 0..6 {
                    if idx[k].is_none() {
                        for e in 0..5 {
                            poly[e] += row.terms[k].0[e] * vals[k];
                        }
                    }
                }
                let depends_on_t = poly.iter().enumerate().any(|(e, &c)| e != 2 && c != 0.0);
                if depends_on_free || depends_on_t {
                    active.push(ActiveRow { seg, axis: ax, row: r, lo, hi, scale });
                } else if poly[2] < lo - cfg.feas_eps || poly[2] > hi + cfg.feas_eps {
                    return Err(if seg == 0 {
                        TrajectoryError::InfeasibleStart(format!("fixed control point {} outside [{lo}, {hi}]", poly[2]))
                    } else {
                        TrajectoryError::SolverFailure(format!("fixed control point {} outside [{lo}, {hi}]", poly[2]))
                    });
                }
            }
        }
    }
    problem.active = active;
    Ok((problem, DVector::from_vec(x0)))
}
