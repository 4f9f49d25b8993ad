// One supervisor tick before and after a wall appears across the plan, and
// the yaw reference that follows the motion.

use anyhow::{ensure, Result};
use corridor_nav::prelude::*;
use corridor_nav::replan::wrap_angle;

pub fn run_example() -> Result<()> {
    let mut grid = OccupancyGrid::new(Vec3::zeros(), 0.5, [20, 12, 2], Cell::Free)?;
    let cfg = ReplanConfig::default();
    let goal = Vec3::new(9.0, 1.0, 0.5);
    let graph = decompose(&grid, &DecompositionConfig::default());
    let corridor = select_corridors(&graph, Vec3::new(1.0, 1.0, 0.5), goal, &cfg.search)?;
    let traj = solve(&corridor, &Waypoint::at_rest(Vec3::new(1.0, 1.0, 0.5)), goal, &cfg.limits, &cfg.solver)?.trajectory;

    let d = check_and_replan(&traj, 0.5, &grid, &graph, goal, &cfg);
    println!("clear map: {}", d.label());
    ensure!(matches!(d.action, PlanAction::Continue));

    for j in 0..6 {
        for k in 0..2 {
            grid.set(GridIndex::new(10, j, k), Cell::Occupied);
        }
    }
    let graph = decompose(&grid, &DecompositionConfig::default());
    let d = check_and_replan(&traj, 0.5, &grid, &graph, goal, &cfg);
    println!("wall ahead: {} (first collision at {:?} s, {:.1} ms)", d.label(), d.first_collision, d.latency_ms.unwrap_or(0.0));
    ensure!(matches!(d.action, PlanAction::Replan { .. }));

    let mut yaw = 3.0;
    for _ in 0..4 {
        yaw = yaw_reference(yaw, 0.0, -1.0, 0.5).yaw;
    }
    println!("yaw after turning toward -y: {yaw:.3}");
    ensure!(wrap_angle(yaw + std::f64::consts::FRAC_PI_2).abs() < 1.0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
