// Integrate a synthetic scan into an empty map, inflate it and round-trip
// it through a map file.

use anyhow::{ensure, Result};
use corridor_nav::occupancy::{load_map, save_map};
use corridor_nav::prelude::*;

pub fn run_example() -> Result<()> {
    let mut map = OccupancyGrid::new(Vec3::zeros(), 0.25, [24, 24, 8], Cell::Unknown)?;
    let sensor = Vec3::new(1.0, 3.0, 1.0);
    // A wall at x = 4.1 m seen across a fan of rays.
    let points: Vec<Vec3> = (0..40)
        .flat_map(|j| (0..8).map(move |k| Vec3::new(4.1, 0.5 + j as f64 * 0.125, 0.25 + k as f64 * 0.2)))
        .collect();
    let delta = map.integrate_pointcloud_mut(sensor, &points);
    println!("newly occupied {}, newly free {}", delta.newly_occupied.len(), delta.newly_free.len());
    ensure!(map.cell_at(Vec3::new(4.1, 3.0, 1.0)) == Some(Cell::Occupied));
    ensure!(map.cell_at(Vec3::new(2.5, 3.0, 1.0)) == Some(Cell::Free));
    ensure!(map.cell_at(Vec3::new(5.5, 3.0, 1.0)) == Some(Cell::Unknown));

    let inflated = map.inflate(0.3);
    println!("occupied before inflation {}, after {}", map.count(Cell::Occupied), inflated.count(Cell::Occupied));
    ensure!(inflated.count(Cell::Occupied) > map.count(Cell::Occupied));

    let dir = std::env::temp_dir().join(format!("corridor-nav-occupancy-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("map.bin");
    save_map(&inflated, &path)?;
    ensure!(load_map(&path)? == inflated);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
