// Minimum-time spline along a 10 m corridor, then the hull-based check.

use anyhow::{ensure, Result};
use corridor_nav::prelude::*;

pub fn run_example() -> Result<()> {
    let corridor = Corridor::from_boxes(vec![(Vec3::new(0.0, -0.5, -0.5), Vec3::new(10.0, 0.5, 0.5))]);
    let limits = Limits::uniform(2.0, 4.0);
    let report = solve(&corridor, &Waypoint::at_rest(Vec3::zeros()), Vec3::new(10.0, 0.0, 0.0), &limits, &SolverConfig::default())?;
    println!(
        "segments {}, init {:.3} s, final {:.3} s, {} iterations",
        report.trajectory.segment_count(),
        report.init_total_time,
        report.final_total_time,
        report.iterations
    );
    ensure!((5.0..=6.0).contains(&report.final_total_time));
    let check = verify(&report.trajectory, &corridor, &limits, 10_000);
    println!("verify: {check:?}");
    ensure!(check.passes(1e-6));
    let mid = report.trajectory.evaluate(report.final_total_time / 2.0)?;
    println!("midpoint velocity {:.3} m/s", mid.velocity.x);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
