//! Piecewise Bernstein trajectories confined to a corridor of boxes.

mod bernstein;
mod init;
mod solver;
mod spline;
mod verify;

use thiserror::Error;

pub use bernstein::{
    basis, coefficients_to_waypoints, derivative, derivative_matrix, differentiation_matrix, eval,
    waypoint_matrix, waypoints_to_coefficients, AxisWaypoint, DEGREE,
};
pub use init::{initialize, plan_segments, Initialization, SegmentPlan};
pub use solver::{solve, solve_with_cancel, ProblemDims, SolveReport, SolverConfig};
pub use spline::{Limits, Trajectory, TrajectoryState, Waypoint};
pub use verify::{verify, VerifyReport, Violations};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("segment duration must be positive and finite, got {0}")]
    NonPositiveDuration(f64),
    #[error("derivative order {0} is outside 1..=5")]
    InvalidOrder(usize),
    #[error("time {t} is outside [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },
    #[error("corridor has no boxes")]
    EmptyCorridor,
    #[error("inconsistent trajectory data: {0}")]
    Mismatch(String),
    #[error("start state violates the constraints: {0}")]
    InfeasibleStart(String),
    #[error("solver failed: {0}")]
    SolverFailure(String),
    #[error("solve cancelled")]
    Cancelled,
}
