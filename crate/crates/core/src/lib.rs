//! # corridor-nav
//!
//! Quadrotor navigation planning on voxel maps.
//!
//! The pipeline turns a tri-state occupancy grid into a graph of free-space
//! cuboids, picks the shortest (fewest-hops) chain of cuboids between a start
//! and a goal, and solves a time-optimal piecewise Bernstein spline that is
//! confined to that chain by control-point bounds. Because a Bernstein
//! polynomial never leaves the convex hull of its control points, bounding the
//! control points bounds the whole curve: position, velocity and acceleration.
//!
//! Around the planner live the pieces needed to close the loop:
//!
//! - [`occupancy`]: the voxel map, inflation, ray integration and map files.
//! - [`depth_fusion`]: rescaling relative inverse depth to metric depth.
//! - [`decomposition`]: cuboid cover of free space with 2.5D layers.
//! - [`corridor`]: A* over the cuboid graph with a hop-count admissible heuristic.
//! - [`trajectory`]: Bernstein splines, the waypoint parameterization and the solver.
//! - [`replan`]: the continue/stop/replan supervisor and the yaw reference.
//! - [`exploration`]: viewed-voxel bookkeeping and next-best-view selection.
//! - [`sim`]: a kinematic closed-loop simulator with a synthetic depth camera.
//! - [`cli`]: the subcommands behind the `corridor-nav` binary.
//!
//! ```
//! use corridor_nav::prelude::*;
//!
//! let grid = OccupancyGrid::new(Vec3::zeros(), 0.5, [8, 8, 2], Cell::Free).unwrap();
//! let graph = decompose(&grid, &DecompositionConfig::default());
//! assert_eq!(graph.vertices().len(), 1);
//! ```

pub mod cli;
pub mod corridor;
pub mod decomposition;
pub mod depth_fusion;
pub mod exploration;
pub mod occupancy;
pub mod replan;
pub mod sim;
pub mod trajectory;

/// World-frame vector in meters (or m/s, m/s² depending on context).
pub type Vec3 = nalgebra::Vector3<f64>;

/// Rigid transform taking points from a local frame into the world frame.
pub type Pose = nalgebra::Isometry3<f64>;

pub mod prelude {
    pub use crate::corridor::{hop_oracle_bfs, select_corridors, Corridor, CorridorError, SearchConfig};
    pub use crate::decomposition::{
        covering_cuboids, decompose, Cuboid, CuboidGraph, DecompositionConfig, LayerSpec,
    };
    pub use crate::depth_fusion::{
        complete_depth, depth_to_points, fit_scale, CompletedDepth, DepthImage, DepthPair, FusionConfig,
        Intrinsics, ScaleFit,
    };
    pub use crate::occupancy::{Cell, GridIndex, OccupancyGrid, UnknownPolicy};
    pub use crate::replan::{check_and_replan, yaw_reference, PlanAction, PlanDecision, ReplanConfig};
    pub use crate::trajectory::{
        solve, verify, Limits, SolverConfig, Trajectory, TrajectoryState, Waypoint, initialize,
    };
    pub use crate::{Pose, Vec3};
}
