//! Kinematic vehicle that jumps onto its reference every step.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::replan::yaw_reference;
use crate::trajectory::Trajectory;
use crate::Vec3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// True position, including tracking error.
    pub position: Vec3,
    /// Commanded position the planner hands over from.
    pub reference: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub yaw: f64,
    pub time: f64,
}

impl VehicleState {
    pub fn at_rest(position: Vec3, yaw: f64) -> Self {
        VehicleState { position, reference: position, yaw, ..Default::default() }
    }
}

/// Trajectory being tracked, with the simulation time it started at.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveTrajectory {
    pub trajectory: Trajectory,
    pub start_time: f64,
}

impl ActiveTrajectory {
    pub fn local_time(&self, sim_time: f64) -> f64 {
        sim_time - self.start_time
    }

    pub fn finished(&self, sim_time: f64) -> bool {
        self.local_time(sim_time) >= self.trajectory.total_time()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleConfig {
    /// Largest yaw change per step.
    pub max_yaw_step: f64,
    /// Scale of the tracking error in meters; zero disables it. The error
    /// is isotropic Gaussian with this RMS norm, clipped at three times it.
    pub tracking_sigma: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        VehicleConfig { max_yaw_step: 0.5, tracking_sigma: 0.0 }
    }
}

/// Advances `dt` seconds along the active trajectory, holding its final
/// state once it has ended.
pub fn step<R: Rng>(state: &VehicleState, active: &ActiveTrajectory, dt: f64, cfg: &VehicleConfig, rng: &mut R) -> VehicleState {
    let time = state.time + dt.max(0.0);
    let s = active.trajectory.evaluate_clamped(active.local_time(time));
    let mut position = s.position;
    if cfg.tracking_sigma > 0.0 {
        let axis = Normal::new(0.0, cfg.tracking_sigma / 3f64.sqrt()).expect("finite sigma");
        let mut e = Vec3::new(axis.sample(rng), axis.sample(rng), axis.sample(rng));
        let cap = 3.0 * cfg.tracking_sigma;
        if e.norm() > cap {
            e *= cap / e.norm();
        }
        position += e;
    }
    let yaw = yaw_reference(state.yaw, s.velocity.x, s.velocity.y, cfg.max_yaw_step).yaw;
    VehicleState { position, reference: s.position, velocity: s.velocity, acceleration: s.acceleration, yaw, time }
}
