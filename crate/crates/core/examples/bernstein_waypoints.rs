// Waypoint to Bernstein coefficient conversion and the derivative matrices.

use anyhow::{ensure, Result};
use corridor_nav::trajectory::{coefficients_to_waypoints, derivative_matrix, eval, waypoints_to_coefficients, AxisWaypoint};

pub fn run_example() -> Result<()> {
    let t = 2.0;
    let a = AxisWaypoint { pos: 0.0, vel: 1.0, acc: 0.0 };
    let b = AxisWaypoint { pos: 3.0, vel: 0.0, acc: -1.0 };
    let c = waypoints_to_coefficients(a, b, t)?;
    println!("control points {c:?}");
    let (a2, b2) = coefficients_to_waypoints(&c, t)?;
    ensure!((a2.vel - a.vel).abs() < 1e-12 && (b2.acc - b.acc).abs() < 1e-12);

    let d2 = derivative_matrix(2, t)?;
    let acc_points = &d2 * nalgebra::DVector::from_column_slice(&c);
    println!("acceleration control points {:?}", acc_points.as_slice());
    ensure!((acc_points[0] - a.acc).abs() < 1e-12);
    println!("midpoint position {:.4}", eval(&c, 0.5));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
