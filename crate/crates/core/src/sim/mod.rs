//! Kinematic closed-loop simulator with a synthetic depth camera.

pub mod camera;
pub mod scenario;
pub mod scene;
pub mod vehicle;
pub mod world;

pub use camera::{camera_pose, render_depth, CameraConfig, HiddenWarp, NoiseConfig, RenderedFrame};
pub use scenario::{MapSource, Scenario};
pub use scene::{dead_end, hallway, l_shape, open_start, perlin_columns, sealed_room, DeadEnd, GroundTruthScene, PerlinParams};
pub use vehicle::{step, ActiveTrajectory, VehicleConfig, VehicleState};
pub use world::{LegOutcome, SimConfig, SimStats, Simulator, TickOutcome};
